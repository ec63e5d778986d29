//! Domain vocabulary shared by the simulator and the inference pipeline.
//!
//! Time is an integer tick axis. Execution slices and busy intervals are
//! half-open (`[begin, end)`); inference segments elsewhere in the crate are
//! closed ranges of feasible arrival ticks.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Simulator time unit.
pub type Tick = u64;

/// Parameters of one periodic task.
///
/// `offset` is ground truth: the inference side never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskSpec {
    pub id: u32,
    pub period: Tick,
    pub wcet: Tick,
    /// Mean actual execution time, the value the attacker knows.
    pub acet: Tick,
    pub deadline: Tick,
    pub offset: Tick,
    /// Higher value runs first.
    pub priority: u32,
    /// Bound on per-job execution-time deviation from `acet`.
    pub gamma: Tick,
    /// Bound on per-job arrival jitter.
    pub theta: Tick,
}

impl TaskSpec {
    /// A task with `acet == wcet`, zero offset, no variation and priority 0.
    pub fn new(id: u32, period: Tick, wcet: Tick) -> Self {
        TaskSpec {
            id,
            period,
            wcet,
            acet: wcet,
            deadline: period,
            offset: 0,
            priority: 0,
            gamma: 0,
            theta: 0,
        }
    }

    pub fn with_offset(mut self, offset: Tick) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_acet(mut self, acet: Tick) -> Self {
        self.acet = acet;
        self
    }

    pub fn with_priority(mut self, priority: u32) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_gamma(mut self, gamma: Tick) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_theta(mut self, theta: Tick) -> Self {
        self.theta = theta;
        self
    }

    pub fn utilization(&self) -> f64 {
        self.wcet as f64 / self.period as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidTaskSet(format!("task {}: {msg}", self.id)));
        if self.period == 0 {
            return fail("period must be positive");
        }
        if self.acet == 0 || self.acet > self.wcet || self.wcet > self.period {
            return fail("requires 0 < acet <= wcet <= period");
        }
        if self.offset >= self.period {
            return fail("offset must be below the period");
        }
        if self.deadline != self.period {
            return fail("deadline must equal the period");
        }
        if self.gamma >= self.acet {
            return fail("gamma must be below acet");
        }
        if 2 * self.theta >= self.period {
            return fail("theta must be well below the period");
        }
        Ok(())
    }
}

/// An ordered collection of tasks plus its hyper-period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    tasks: Vec<TaskSpec>,
    hyper_period: Tick,
}

impl TaskSet {
    /// Validates every task and the set-level invariants. An empty set is
    /// allowed and reports a hyper-period of 0.
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut prios = HashSet::new();
        for t in &tasks {
            t.validate()?;
            if !ids.insert(t.id) {
                return Err(Error::InvalidTaskSet(format!("duplicate task id {}", t.id)));
            }
            if !prios.insert(t.priority) {
                return Err(Error::InvalidTaskSet(format!("duplicate priority {}", t.priority)));
            }
        }
        let set = TaskSet {
            hyper_period: if tasks.is_empty() { 0 } else { hyper_period(&tasks)? },
            tasks,
        };
        if set.utilization() > 1.0 + 1e-12 {
            return Err(Error::InvalidTaskSet(format!(
                "utilization {:.4} exceeds 1",
                set.utilization()
            )));
        }
        Ok(set)
    }

    /// Convenience constructor from `(period, acet)` pairs with `wcet = acet`,
    /// zero offsets, ids `1..=n` and rate-monotonic priorities.
    pub fn from_period_exec(params: &[(Tick, Tick)]) -> Result<Self> {
        let tasks = params
            .iter()
            .enumerate()
            .map(|(i, &(p, c))| TaskSpec::new(i as u32 + 1, p, c).with_priority(i as u32))
            .collect();
        Ok(crate::generator::rm_priorities(&TaskSet::new(tasks)?))
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn hyper_period(&self) -> Tick {
        self.hyper_period
    }

    pub fn utilization(&self) -> f64 {
        self.tasks.iter().map(TaskSpec::utilization).sum()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    /// Same periods, wcets and offsets with every task's offset replaced.
    pub fn with_offsets(&self, offsets: &[Tick]) -> Result<Self> {
        assert_eq!(offsets.len(), self.tasks.len());
        let tasks = self
            .tasks
            .iter()
            .zip(offsets)
            .map(|(t, &a)| t.with_offset(a % t.period))
            .collect();
        TaskSet::new(tasks)
    }

    /// Recomputes `acet` as `round(fraction * wcet)` (min 1 tick) and resets
    /// `gamma` to the largest deviation that keeps `acet - gamma >= 1`.
    pub fn with_acet_fraction(&self, fraction: f64) -> Result<Self> {
        let tasks = self
            .tasks
            .iter()
            .map(|t| {
                let acet = acet_from_fraction(t.wcet, fraction);
                TaskSpec {
                    acet,
                    gamma: default_gamma(t.wcet, acet),
                    ..*t
                }
            })
            .collect();
        TaskSet::new(tasks)
    }

    pub(crate) fn replace_tasks(&self, tasks: Vec<TaskSpec>) -> Self {
        TaskSet {
            tasks,
            hyper_period: self.hyper_period,
        }
    }
}

pub(crate) fn acet_from_fraction(wcet: Tick, fraction: f64) -> Tick {
    ((wcet as f64 * fraction).round() as Tick).clamp(1, wcet)
}

/// Execution-time deviation bound for a task whose samples are clamped into
/// `[max(1, 2*acet - wcet), wcet]`.
pub(crate) fn default_gamma(wcet: Tick, acet: Tick) -> Tick {
    (wcet - acet).min(acet - 1)
}

/// Least common multiple of all periods.
pub fn hyper_period(tasks: &[TaskSpec]) -> Result<Tick> {
    if tasks.is_empty() {
        return Err(Error::Config("hyper-period of an empty task set".into()));
    }
    tasks.iter().try_fold(1, |acc: Tick, t| {
        let g = gcd(acc, t.period);
        (acc / g)
            .checked_mul(t.period)
            .ok_or_else(|| Error::Config("hyper-period overflows the tick type".into()))
    })
}

pub(crate) fn gcd(mut a: Tick, mut b: Tick) -> Tick {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// One periodic instance of a task as it actually ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub task_id: u32,
    /// 0-based index among this task's jobs in the trace.
    pub ordinal: u64,
    pub arrival: Tick,
    /// First tick the job executes.
    pub start: Tick,
    pub completion: Tick,
    pub exec: Tick,
}

/// A maximal run of one task on the CPU, `[begin, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecSlice {
    pub task_id: u32,
    pub begin: Tick,
    pub end: Tick,
}

impl ExecSlice {
    pub fn len(&self) -> Tick {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.begin
    }
}

/// Ground-truth schedule.
///
/// `slices` and `idle` tile `[0, end)`. Arrivals happen strictly before
/// `horizon`; `end >= horizon` leaves room for the last jobs to finish.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub horizon: Tick,
    pub end: Tick,
    pub slices: Vec<ExecSlice>,
    /// Jobs per task, in task-set order.
    pub jobs: Vec<Vec<Job>>,
    /// Half-open idle intervals `(begin, end)`.
    pub idle: Vec<(Tick, Tick)>,
}

impl Trace {
    pub fn all_jobs(&self) -> impl Iterator<Item = &Job> {
        self.jobs.iter().flatten()
    }
}

/// An observed busy interval `[start, start + length)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusyInterval {
    pub start: Tick,
    pub length: Tick,
}

impl BusyInterval {
    pub fn new(start: Tick, length: Tick) -> Self {
        BusyInterval { start, length }
    }

    /// Exclusive end.
    pub fn end(&self) -> Tick {
        self.start + self.length
    }

    pub fn contains(&self, t: Tick) -> bool {
        t >= self.start && t < self.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periods(ps: &[Tick]) -> Vec<TaskSpec> {
        ps.iter()
            .enumerate()
            .map(|(i, &p)| TaskSpec::new(i as u32, p, 1))
            .collect()
    }

    fn lcm_by_factorization(ps: &[Tick]) -> Tick {
        let mut max_pow = std::collections::BTreeMap::new();
        for &p in ps {
            let mut n = p;
            let mut f = 2;
            while n > 1 {
                let mut e = 0;
                while n % f == 0 {
                    n /= f;
                    e += 1;
                }
                if e > 0 {
                    let slot = max_pow.entry(f).or_insert(0);
                    *slot = (*slot).max(e);
                }
                f += 1;
            }
        }
        max_pow.iter().map(|(f, e)| f.pow(*e)).product()
    }

    #[test]
    fn hyper_period_examples() {
        assert_eq!(hyper_period(&periods(&[5, 6, 10])).unwrap(), 30);
        assert_eq!(hyper_period(&periods(&[7])).unwrap(), 7);
        let ps = [30030, 2310];
        assert_eq!(lcm_by_factorization(&ps), 30030);
        assert_eq!(hyper_period(&periods(&ps)).unwrap(), 30030);
    }

    #[test]
    fn hyper_period_overflow_is_config_error() {
        let ps = [u64::MAX - 1, u64::MAX - 2];
        assert!(matches!(hyper_period(&periods(&ps)), Err(Error::Config(_))));
        assert!(hyper_period(&[]).is_err());
    }

    #[test]
    fn taskset_rejects_bad_sets() {
        let dup = vec![TaskSpec::new(1, 10, 2), TaskSpec::new(1, 20, 2).with_priority(1)];
        assert!(TaskSet::new(dup).is_err());
        let over = vec![TaskSpec::new(1, 4, 3), TaskSpec::new(2, 4, 2).with_priority(1)];
        assert!(TaskSet::new(over).is_err());
        let bad_offset = vec![TaskSpec::new(1, 4, 1).with_offset(4)];
        assert!(TaskSet::new(bad_offset).is_err());
        assert!(TaskSet::new(vec![]).unwrap().is_empty());
    }

    #[test]
    fn acet_fraction_keeps_effective_exec_positive() {
        let set = TaskSet::new(vec![
            TaskSpec::new(1, 10, 2),
            TaskSpec::new(2, 20, 4).with_priority(1),
            TaskSpec::new(3, 50, 10).with_priority(2),
        ])
        .unwrap();
        for frac in [0.5, 0.6, 0.8, 1.0] {
            for t in set.with_acet_fraction(frac).unwrap().tasks() {
                assert!(t.acet > t.gamma);
                assert!(t.acet + t.gamma <= t.wcet);
            }
        }
    }
}
