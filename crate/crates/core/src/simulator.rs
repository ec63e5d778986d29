//! Ground-truth fixed-priority preemptive scheduler and the observer view.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::model::{BusyInterval, ExecSlice, Job, TaskSet, TaskSpec, Tick, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariationKind {
    None,
    TruncatedNormal,
}

/// Per-job execution-time and arrival variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationModel {
    pub kind: VariationKind,
    /// Mean execution time as a fraction of wcet. The simulator samples
    /// around each task's `acet`; callers align the two with
    /// [`TaskSet::with_acet_fraction`].
    pub mean_fraction: f64,
    /// Probability mass of the untruncated normal above wcet.
    pub upper_tail_prob: f64,
    /// Global cap on arrival jitter; 0 disables jitter. Each task jitters
    /// by at most `min(theta_i, arrival_jitter)`.
    pub arrival_jitter: Tick,
}

impl VariationModel {
    pub const fn none() -> Self {
        VariationModel {
            kind: VariationKind::None,
            mean_fraction: 1.0,
            upper_tail_prob: 1e-4,
            arrival_jitter: 0,
        }
    }

    pub const fn truncated_normal(mean_fraction: f64) -> Self {
        VariationModel {
            kind: VariationKind::TruncatedNormal,
            mean_fraction,
            upper_tail_prob: 1e-4,
            arrival_jitter: 0,
        }
    }

    pub fn with_arrival_jitter(mut self, jitter: Tick) -> Self {
        self.arrival_jitter = jitter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_fraction > 0.0 && self.mean_fraction <= 1.0) {
            return Err(Error::Config("mean_fraction must lie in (0, 1]".into()));
        }
        if !(self.upper_tail_prob > 0.0 && self.upper_tail_prob < 0.5) {
            return Err(Error::Config("upper_tail_prob must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    /// Short label used in CSV output.
    pub fn label(&self) -> String {
        match self.kind {
            VariationKind::None => "none".into(),
            VariationKind::TruncatedNormal => format!("normal{:.2}", self.mean_fraction),
        }
    }

    /// Standard-normal quantile of `1 - upper_tail_prob`.
    pub fn z(&self) -> f64 {
        StdNormal::standard().inverse_cdf(1.0 - self.upper_tail_prob)
    }
}

impl Default for VariationModel {
    fn default() -> Self {
        VariationModel::none()
    }
}

/// `[start, start + length)` of schedule time visible to the observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationWindow {
    pub start: Tick,
    pub length: Tick,
}

impl ObservationWindow {
    pub fn new(start: Tick, length: Tick) -> Self {
        ObservationWindow { start, length }
    }

    pub fn end(&self) -> Tick {
        self.start + self.length
    }

    pub fn contains(&self, t: Tick) -> bool {
        t >= self.start && t < self.end()
    }
}

/// Samples one job's execution time.
pub fn sample_exec_time<R: Rng + ?Sized>(task: &TaskSpec, variation: &VariationModel, rng: &mut R) -> Tick {
    match variation.kind {
        VariationKind::None => task.acet,
        VariationKind::TruncatedNormal => {
            let spread = task.wcet - task.acet;
            if spread == 0 {
                return task.acet;
            }
            let sigma = spread as f64 / variation.z();
            let normal = Normal::new(task.acet as f64, sigma).expect("finite sigma");
            let x = (normal.sample(rng) + 0.5).floor();
            let lo = (2 * task.acet).saturating_sub(task.wcet).max(1);
            (x.max(0.0) as Tick).clamp(lo, task.wcet)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PendingJob {
    task: usize,
    ordinal: u64,
    arrival: Tick,
    exec: Tick,
}

/// Event-driven fixed-priority preemptive simulation.
///
/// Job `h` of a task arrives at `offset + h * period` (plus jitter when
/// enabled) for every nominal arrival before `horizon`; the run continues
/// past `horizon` until the last of those jobs completes.
pub fn simulate(taskset: &TaskSet, horizon: Tick, variation: &VariationModel, seed: u64) -> Result<Trace> {
    variation.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = taskset.tasks();

    let mut pending = Vec::new();
    for (ti, t) in tasks.iter().enumerate() {
        let jitter = t.theta.min(variation.arrival_jitter) as i64;
        let mut h = 0u64;
        while t.offset + h * t.period < horizon {
            let nominal = (t.offset + h * t.period) as i64;
            let arrival = if jitter > 0 {
                (nominal + rng.random_range(-jitter..=jitter)).max(0) as Tick
            } else {
                nominal as Tick
            };
            let exec = sample_exec_time(t, variation, &mut rng);
            pending.push(PendingJob {
                task: ti,
                ordinal: h,
                arrival,
                exec,
            });
            h += 1;
        }
    }
    pending.sort_by_key(|j| (j.arrival, Reverse(tasks[j.task].priority), j.task, j.ordinal));

    Ok(run_fixed_priority(taskset, &pending, horizon))
}

/// Core scheduler over a prepared arrival list sorted by arrival.
fn run_fixed_priority(taskset: &TaskSet, pending: &[PendingJob], horizon: Tick) -> Trace {
    let tasks = taskset.tasks();
    let mut jobs: Vec<Vec<Job>> = vec![Vec::new(); tasks.len()];
    let mut slices: Vec<ExecSlice> = Vec::new();
    let mut idle = Vec::new();

    // (priority, earliest arrival first, ordinal) -> index into `pending`.
    let mut ready: BinaryHeap<(u32, Reverse<Tick>, Reverse<u64>, usize)> = BinaryHeap::new();
    let mut remaining: Vec<Tick> = pending.iter().map(|j| j.exec).collect();
    let mut started: Vec<Option<Tick>> = vec![None; pending.len()];
    let mut last_run: Option<usize> = None;

    let mut next = 0;
    let mut t: Tick = 0;
    loop {
        while next < pending.len() && pending[next].arrival <= t {
            let j = &pending[next];
            ready.push((tasks[j.task].priority, Reverse(j.arrival), Reverse(j.ordinal), next));
            next += 1;
        }
        let Some(&(_, _, _, idx)) = ready.peek() else {
            if next == pending.len() {
                break;
            }
            let wake = pending[next].arrival;
            idle.push((t, wake));
            t = wake;
            last_run = None;
            continue;
        };
        let job = pending[idx];
        let until = match pending.get(next) {
            Some(n) => (t + remaining[idx]).min(n.arrival),
            None => t + remaining[idx],
        };
        started[idx].get_or_insert(t);
        match slices.last_mut() {
            Some(s) if last_run == Some(idx) && s.end == t => s.end = until,
            _ => slices.push(ExecSlice {
                task_id: tasks[job.task].id,
                begin: t,
                end: until,
            }),
        }
        last_run = Some(idx);
        remaining[idx] -= until - t;
        t = until;
        if remaining[idx] == 0 {
            ready.pop();
            let start = started[idx].expect("started before completion");
            debug_assert!(
                tasks[job.task].theta > 0 || t <= job.arrival + tasks[job.task].deadline,
                "deadline miss for task {}",
                tasks[job.task].id
            );
            jobs[job.task].push(Job {
                task_id: tasks[job.task].id,
                ordinal: job.ordinal,
                arrival: job.arrival,
                start,
                completion: t,
                exec: job.exec,
            });
        }
    }
    let end = t.max(horizon);
    if t < end {
        idle.push((t, end));
    }
    for js in &mut jobs {
        js.sort_by_key(|j| j.ordinal);
    }
    Trace {
        horizon,
        end,
        slices,
        jobs,
        idle,
    }
}

/// Maximal runs of busy time, ordered by start.
pub fn busy_intervals(trace: &Trace) -> Vec<BusyInterval> {
    let mut out: Vec<BusyInterval> = Vec::new();
    for s in &trace.slices {
        match out.last_mut() {
            Some(b) if b.end() == s.begin => b.length += s.len(),
            _ => out.push(BusyInterval::new(s.begin, s.len())),
        }
    }
    out
}

/// Keeps only intervals lying entirely inside the window.
pub fn clip_observation(intervals: &[BusyInterval], window: &ObservationWindow) -> Vec<BusyInterval> {
    intervals
        .iter()
        .filter(|b| b.start >= window.start && b.end() <= window.end())
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_task() -> TaskSet {
        TaskSet::from_period_exec(&[(5, 1), (6, 2), (10, 2)]).unwrap()
    }

    fn slices_of(trace: &Trace, id: u32) -> Vec<(Tick, Tick)> {
        trace
            .slices
            .iter()
            .filter(|s| s.task_id == id)
            .map(|s| (s.begin, s.end))
            .collect()
    }

    #[test]
    fn three_task_schedule() {
        let trace = simulate(&three_task(), 30, &VariationModel::none(), 0).unwrap();
        assert_eq!(slices_of(&trace, 3), vec![(3, 5), (11, 12), (14, 15), (21, 23)]);
        let bis: Vec<(Tick, Tick)> = busy_intervals(&trace).iter().map(|b| (b.start, b.length)).collect();
        assert_eq!(bis, vec![(0, 8), (10, 6), (18, 5), (24, 3)]);
        assert_eq!(trace.idle, vec![(8, 10), (16, 18), (23, 24), (27, 30)]);
        // tau3 job at 10 starts at 11 and is preempted at 12; one start only.
        let j = trace.jobs[2][1];
        assert_eq!((j.arrival, j.start, j.completion), (10, 11, 15));
    }

    #[test]
    fn empty_and_single_task() {
        let empty = TaskSet::new(vec![]).unwrap();
        let trace = simulate(&empty, 20, &VariationModel::none(), 0).unwrap();
        assert!(trace.slices.is_empty());
        assert_eq!(trace.idle, vec![(0, 20)]);
        assert!(busy_intervals(&trace).is_empty());

        let single = TaskSet::new(vec![TaskSpec::new(1, 10, 2).with_offset(3)]).unwrap();
        let trace = simulate(&single, 20, &VariationModel::none(), 0).unwrap();
        assert_eq!(slices_of(&trace, 1), vec![(3, 5), (13, 15)]);
    }

    #[test]
    fn back_to_back_jobs_merge_into_one_interval() {
        let set = TaskSet::from_period_exec(&[(4, 2), (8, 4)]).unwrap();
        let trace = simulate(&set, 8, &VariationModel::none(), 0).unwrap();
        let bis = busy_intervals(&trace);
        assert_eq!(bis, vec![BusyInterval::new(0, 8)]);
    }

    #[test]
    fn clip_examples() {
        let bis = [BusyInterval::new(0, 8), BusyInterval::new(10, 6)];
        assert_eq!(clip_observation(&bis, &ObservationWindow::new(0, 12)), vec![bis[0]]);
        assert_eq!(clip_observation(&bis, &ObservationWindow::new(0, 100)), bis.to_vec());
        assert!(clip_observation(&bis, &ObservationWindow::new(9, 1)).is_empty());
    }

    #[test]
    fn sampler_none_is_exact() {
        let t = TaskSpec::new(1, 20, 10).with_acet(8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_exec_time(&t, &VariationModel::none(), &mut rng), 8);
    }

    #[test]
    fn sampler_truncated_normal_statistics() {
        let t = TaskSpec::new(1, 20, 10).with_acet(8);
        let v = VariationModel::truncated_normal(0.8);
        assert!((v.z() - 3.719).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0u64;
        let mut near = 0;
        for _ in 0..n {
            let x = sample_exec_time(&t, &v, &mut rng);
            assert!((6..=10).contains(&x));
            sum += x;
            if (7..=9).contains(&x) {
                near += 1;
            }
        }
        assert!(near as f64 / n as f64 >= 0.95);
        assert!((sum as f64 / n as f64 - 8.0).abs() < 0.05);
    }

    #[test]
    fn no_variation_is_hyper_periodic() {
        let set = TaskSet::from_period_exec(&[(5, 1), (6, 2), (10, 2)])
            .unwrap()
            .with_offsets(&[2, 5, 7])
            .unwrap();
        let h = set.hyper_period();
        let trace = simulate(&set, 5 * h, &VariationModel::none(), 0).unwrap();
        let window = |k: Tick| -> Vec<(u32, Tick, Tick)> {
            trace
                .slices
                .iter()
                .filter(|s| s.begin >= k * h && s.begin < (k + 1) * h)
                .map(|s| (s.task_id, s.begin - k * h, s.end - k * h))
                .collect()
        };
        // Steady state well before the trailing hyper-period.
        assert_eq!(window(2), window(3));
    }
}
