//! Start-time precision of a reconstruction against ground truth, and the
//! random-offset baseline it is compared with.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Execution;
use crate::model::{BusyInterval, TaskSet, Tick, Trace};
use crate::simulator::ObservationWindow;
use crate::translate::{
    compact_translate, extrapolate, InferredJob, IntervalSchedule, ReconstructedSchedule, ScheduleFlags,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TaskPrecision {
    pub task_id: u32,
    pub period: Tick,
    /// Inferred minus actual start for each pair, then `period` for every
    /// unpaired job.
    pub errors: Vec<i64>,
    pub sd: f64,
    pub precision: f64,
    pub matched: usize,
    pub unmatched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionReport {
    pub tasks: Vec<TaskPrecision>,
    pub eta_prime: f64,
    pub flags: ScheduleFlags,
}

impl PrecisionReport {
    pub fn mean_sd(&self) -> f64 {
        if self.tasks.is_empty() {
            return 0.0;
        }
        self.tasks.iter().map(|t| t.sd).sum::<f64>() / self.tasks.len() as f64
    }
}

/// Scores per-task start times. Both sides are sorted and paired in order;
/// jobs left without a partner on either side each cost one full period.
pub fn precision_from_starts(taskset: &TaskSet, truth: &[Vec<Tick>], inferred: &[Vec<Tick>]) -> PrecisionReport {
    let tasks: Vec<TaskPrecision> = taskset
        .tasks()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut a = truth[i].clone();
            let mut b = inferred[i].clone();
            a.sort_unstable();
            b.sort_unstable();
            let mut errors = pair_in_order(&a, &b, t.period as i64);
            let matched = errors.len();
            let unmatched = a.len() + b.len() - 2 * matched;
            errors.extend(std::iter::repeat_n(t.period as i64, unmatched));
            let sd = if errors.is_empty() {
                0.0
            } else {
                (errors.iter().map(|&e| (e as f64).powi(2)).sum::<f64>() / errors.len() as f64).sqrt()
            };
            TaskPrecision {
                task_id: t.id,
                period: t.period,
                errors,
                sd,
                precision: 1.0 - sd / t.period as f64,
                matched,
                unmatched,
            }
        })
        .collect();
    let eta_prime = if tasks.is_empty() {
        1.0
    } else {
        tasks.iter().map(|t| t.precision).sum::<f64>() / tasks.len() as f64
    };
    PrecisionReport {
        tasks,
        eta_prime,
        flags: ScheduleFlags::default(),
    }
}

/// Walks both sorted sequences in step, pairing the next actual and
/// inferred start whenever they are less than a period apart. Otherwise the
/// earlier of the two has no partner and is skipped. With equal, evenly
/// spaced sequences this is plain rank pairing; a missing job costs one
/// penalty instead of shifting every later pair.
fn pair_in_order(truth: &[Tick], inferred: &[Tick], period: i64) -> Vec<i64> {
    let (mut i, mut j) = (0, 0);
    let mut errors = Vec::with_capacity(truth.len().min(inferred.len()));
    while i < truth.len() && j < inferred.len() {
        let d = inferred[j] as i64 - truth[i] as i64;
        if d.abs() < period {
            errors.push(d);
            i += 1;
            j += 1;
        } else if d < 0 {
            j += 1;
        } else {
            i += 1;
        }
    }
    errors
}

fn group_starts<'a>(taskset: &TaskSet, jobs: impl Iterator<Item = (u32, Tick)> + 'a) -> Vec<Vec<Tick>> {
    let mut out = vec![Vec::new(); taskset.len()];
    for (id, start) in jobs {
        if let Some(i) = taskset.index_of(id) {
            out[i].push(start);
        }
    }
    out
}

/// Precision over jobs whose start lies inside `window` on both sides.
pub fn precision_ratio(
    truth: &Trace,
    inferred: &ReconstructedSchedule,
    taskset: &TaskSet,
    window: &ObservationWindow,
) -> PrecisionReport {
    let t = group_starts(
        taskset,
        truth
            .all_jobs()
            .filter(|j| window.contains(j.start))
            .map(|j| (j.task_id, j.start)),
    );
    let r = group_starts(
        taskset,
        inferred
            .jobs()
            .filter(|j| window.contains(j.start))
            .map(|j| (j.task_id, j.start)),
    );
    let mut report = precision_from_starts(taskset, &t, &r);
    report.flags = inferred.flags;
    report
}

fn inside_any(intervals: &[BusyInterval], t: Tick) -> bool {
    let k = intervals.partition_point(|b| b.end() <= t);
    intervals.get(k).is_some_and(|b| b.contains(t))
}

/// Precision restricted to the observed intervals: truth jobs starting in
/// one of them against the per-interval reconstruction.
pub fn precision_in_intervals(
    truth: &Trace,
    inferred: &ReconstructedSchedule,
    taskset: &TaskSet,
    observed: &[BusyInterval],
) -> PrecisionReport {
    let t = group_starts(
        taskset,
        truth
            .all_jobs()
            .filter(|j| inside_any(observed, j.start))
            .map(|j| (j.task_id, j.start)),
    );
    let r = group_starts(taskset, inferred.jobs().map(|j| (j.task_id, j.start)));
    let mut report = precision_from_starts(taskset, &t, &r);
    report.flags = inferred.flags;
    report
}

/// Precision over `[0, eval_end)`. Jobs arriving in observed intervals come
/// from the reconstruction; the rest of the timeline is filled in by a
/// nominal replay from the committed offsets.
pub fn precision_extrapolated(
    truth: &Trace,
    inferred: &ReconstructedSchedule,
    taskset: &TaskSet,
    observed: &[BusyInterval],
    eval_end: Tick,
) -> PrecisionReport {
    let predicted = extrapolate(taskset, &inferred.committed, eval_end);
    let inferred_jobs = inferred
        .jobs()
        .copied()
        .chain(predicted.into_iter().filter(|j| !inside_any(observed, j.arrival)))
        .filter(|j| j.start < eval_end);
    let t = group_starts(
        taskset,
        truth
            .all_jobs()
            .filter(|j| j.start < eval_end)
            .map(|j| (j.task_id, j.start)),
    );
    let r = group_starts(taskset, inferred_jobs.map(|j| (j.task_id, j.start)));
    let mut report = precision_from_starts(taskset, &t, &r);
    report.flags = inferred.flags;
    report
}

/// Reconstruction from offsets drawn uniformly in `[0, p)`: each observed
/// interval receives the random-grid arrivals that fall inside it, which
/// then go through the same translator.
pub fn naive_baseline(
    taskset: &TaskSet,
    observed: &[BusyInterval],
    seed: u64,
    exec: Execution,
) -> ReconstructedSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<Tick> = taskset.tasks().iter().map(|t| rng.random_range(0..t.period)).collect();
    let intervals = exec.map(observed, |b| {
        let mut arrivals: Vec<(u32, Tick)> = Vec::new();
        for (t, &a) in taskset.tasks().iter().zip(&offsets) {
            let mut x = if b.start <= a {
                a
            } else {
                a + (b.start - a).div_ceil(t.period) * t.period
            };
            while x < b.end() {
                arrivals.push((t.id, x));
                x += t.period;
            }
        }
        let (jobs, overflow) = compact_translate(taskset, b, &arrivals);
        IntervalSchedule {
            interval: *b,
            jobs,
            overflow,
            dropped: 0,
        }
    });
    ReconstructedSchedule {
        committed: offsets.into_iter().map(Some).collect(),
        committed_windows: vec![None; taskset.len()],
        flags: ScheduleFlags {
            no_observations: observed.is_empty(),
            overflows: intervals.iter().filter(|s| s.overflow).count(),
            ..ScheduleFlags::default()
        },
        intervals,
    }
}

/// Start times of inferred jobs grouped per task, in task-set order.
pub fn inferred_starts(taskset: &TaskSet, jobs: &[InferredJob]) -> Vec<Vec<Tick>> {
    group_starts(taskset, jobs.iter().map(|j| (j.task_id, j.start)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskSpec;
    use crate::simulator::{busy_intervals, simulate, VariationModel};

    fn single(p: Tick, c: Tick) -> TaskSet {
        TaskSet::new(vec![TaskSpec::new(1, p, c)]).unwrap()
    }

    #[test]
    fn identity_scores_one() {
        let set = TaskSet::from_period_exec(&[(5, 1), (6, 2), (10, 2)]).unwrap();
        let s = vec![vec![0, 5, 10], vec![1, 7], vec![3]];
        let r = precision_from_starts(&set, &s, &s);
        assert_eq!(r.eta_prime, 1.0);
        assert!(r.tasks.iter().all(|t| t.sd == 0.0 && t.unmatched == 0));
    }

    #[test]
    fn one_tick_early_everywhere() {
        let set = single(10, 2);
        let truth: Vec<Tick> = (0..7).map(|k| 1 + 10 * k).collect();
        let inferred: Vec<Tick> = truth.iter().map(|t| t - 1).collect();
        let r = precision_from_starts(&set, &[truth], &[inferred]);
        assert!((r.tasks[0].sd - 1.0).abs() < 1e-12);
        assert!((r.eta_prime - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unmatched_jobs_cost_a_period() {
        let set = single(10, 2);
        let truth = vec![vec![0, 10, 20]];
        let base = precision_from_starts(&set, &truth, &[vec![1, 11, 21]]);
        let extra = precision_from_starts(&set, &truth, &[vec![1, 11, 21, 31]]);
        assert!(extra.tasks[0].precision < base.tasks[0].precision);
        assert_eq!(extra.tasks[0].unmatched, 1);
        // sqrt((1 + 1 + 1 + 100) / 4)
        assert!((extra.tasks[0].sd - (103.0f64 / 4.0).sqrt()).abs() < 1e-12);
        let none = precision_from_starts(&set, &[vec![]], &[vec![]]);
        assert_eq!(none.eta_prime, 1.0);
        let missing = precision_from_starts(&set, &truth, &[vec![]]);
        assert_eq!(missing.eta_prime, 0.0);
    }

    #[test]
    fn missing_job_does_not_shift_later_pairs() {
        let set = single(10, 2);
        let truth = vec![(0..10).map(|k| 10 * k).collect::<Vec<Tick>>()];
        let mut inferred = truth.clone();
        inferred[0].remove(3);
        let r = precision_from_starts(&set, &truth, &inferred);
        assert_eq!(r.tasks[0].matched, 9);
        assert_eq!(r.tasks[0].unmatched, 1);
        assert!((r.tasks[0].sd - (100.0f64 / 10.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_shift_and_relabel() {
        let set = TaskSet::from_period_exec(&[(5, 1), (6, 2), (10, 2)]).unwrap();
        let truth = vec![vec![0, 5, 10], vec![1, 7], vec![3, 13]];
        let inferred = vec![vec![1, 5, 11], vec![1, 9], vec![2]];
        let base = precision_from_starts(&set, &truth, &inferred).eta_prime;
        let shift =
            |v: &Vec<Vec<Tick>>| -> Vec<Vec<Tick>> { v.iter().map(|x| x.iter().map(|t| t + 17).collect()).collect() };
        let shifted = precision_from_starts(&set, &shift(&truth), &shift(&inferred)).eta_prime;
        assert!((base - shifted).abs() < 1e-12);
        let relabeled = TaskSet::new(
            set.tasks()
                .iter()
                .rev()
                .map(|t| TaskSpec { id: t.id + 100, ..*t })
                .collect(),
        )
        .unwrap();
        let rev = |v: &Vec<Vec<Tick>>| -> Vec<Vec<Tick>> { v.iter().rev().cloned().collect() };
        let r = precision_from_starts(&relabeled, &rev(&truth), &rev(&inferred)).eta_prime;
        assert!((base - r).abs() < 1e-12);
    }

    #[test]
    fn naive_is_reproducible() {
        let set = TaskSet::from_period_exec(&[(5, 1), (6, 2), (10, 2)]).unwrap();
        let trace = simulate(&set, 30, &VariationModel::none(), 0).unwrap();
        let bis = busy_intervals(&trace);
        let a = naive_baseline(&set, &bis, 99, Execution::Sequential);
        let b = naive_baseline(&set, &bis, 99, Execution::default());
        assert_eq!(a, b);
    }

    /// Single task alone: each job is its own interval of length c. A random
    /// offset `r` lands inside every interval iff `d = (r - a) mod p < c`,
    /// giving error `d` on every job; otherwise nothing is inferred and every
    /// job costs one period.
    #[test]
    fn naive_single_task_matches_closed_form() {
        let (p, c) = (20u64, 5u64);
        let set = single(p, c).with_offsets(&[7]).unwrap();
        let h = 4 * p;
        let trace = simulate(&set, h, &VariationModel::none(), 0).unwrap();
        let bis = busy_intervals(&trace);
        let seeds = 10_000;
        let mut mean_precision = 0.0;
        let mut sq = 0.0;
        let mut n = 0.0;
        for seed in 0..seeds {
            let recon = naive_baseline(&set, &bis, seed, Execution::Sequential);
            let r = precision_in_intervals(&trace, &recon, &set, &bis);
            mean_precision += r.eta_prime;
            for e in &r.tasks[0].errors {
                sq += (*e as f64).powi(2);
                n += 1.0;
            }
        }
        mean_precision /= seeds as f64;
        let (pf, cf) = (p as f64, c as f64);
        // E[precision] = (c/p) * (1 - E[d]/p) with d uniform on 0..c.
        let expect_mean = (cf / pf) * (1.0 - (cf - 1.0) / 2.0 / pf);
        // E[e^2] = (c/p) * E[d^2] + (1 - c/p) * p^2.
        let ed2 = (0..c).map(|d| (d * d) as f64).sum::<f64>() / cf;
        let expect_sq = (cf / pf) * ed2 + (1.0 - cf / pf) * pf * pf;
        assert!(
            (mean_precision - expect_mean).abs() < 0.01,
            "{mean_precision} vs {expect_mean}"
        );
        assert!((sq / n - expect_sq).abs() / expect_sq < 0.02);
    }

    /// With the true offset at zero and a random committed offset `r`, every
    /// job is off by `r` in `[0, p)`. The pooled RMS error is then `p/sqrt(3)`
    /// and the pooled precision `1 - 1/sqrt(3)`, about 0.42.
    #[test]
    fn random_offset_pooled_precision() {
        let p = 50u64;
        let set = single(p, 5);
        let trace = simulate(&set, 4 * p, &VariationModel::none(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sq = 0.0;
        let mut n = 0.0;
        for _ in 0..10_000 {
            let r = rng.random_range(0..p);
            let jobs = extrapolate(&set, &[Some(r)], 4 * p);
            let truth: Vec<Tick> = trace.all_jobs().map(|j| j.start).collect();
            let rep = precision_from_starts(&set, &[truth], &inferred_starts(&set, &jobs));
            for e in &rep.tasks[0].errors {
                sq += (*e as f64).powi(2);
                n += 1.0;
            }
        }
        let pooled = 1.0 - (sq / n).sqrt() / p as f64;
        // Discrete uniform on 0..p: E[r^2] = (p-1)(2p-1)/6.
        let exact = 1.0 - (((p - 1) * (2 * p - 1)) as f64 / 6.0).sqrt() / p as f64;
        assert!((pooled - exact).abs() < 0.01);
        assert!((pooled - 0.42).abs() < 0.02);
    }
}
