//! Job-count candidates per task and the job-count vectors that explain a
//! busy interval's length.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{BusyInterval, TaskSet, TaskSpec, Tick};

/// One or two consecutive job counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CountCandidates {
    low: u32,
    high: u32,
}

impl CountCandidates {
    pub fn exact(n: u32) -> Self {
        CountCandidates { low: n, high: n }
    }

    pub fn either(n: u32) -> Self {
        CountCandidates { low: n, high: n + 1 }
    }

    /// Spans `[low, high]`; callers guarantee `high - low <= 1`.
    pub(crate) fn from_bounds(low: u32, high: u32) -> Self {
        debug_assert!(high == low || high == low + 1);
        CountCandidates { low, high }
    }

    pub fn low(&self) -> u32 {
        self.low
    }

    pub fn high(&self) -> u32 {
        self.high
    }

    pub fn is_exact(&self) -> bool {
        self.low == self.high
    }

    pub fn contains(&self, n: u32) -> bool {
        (self.low..=self.high).contains(&n)
    }

    pub fn values(&self) -> Vec<u32> {
        (self.low..=self.high).collect()
    }
}

/// Execution time net of the variation and jitter tolerances.
pub fn effective_exec(task: &TaskSpec) -> Result<i64> {
    let eff = task.acet as i64 - 2 * task.theta as i64 - task.gamma as i64;
    if eff <= 0 {
        return Err(Error::ToleranceExceedsExecution {
            task_id: task.id,
            effective: eff,
        });
    }
    Ok(eff)
}

/// How many jobs of `task` a busy interval of `length` ticks can hold.
///
/// With `e` the effective execution time: `{N}` when
/// `max(0, N*p - e) <= l < N*p + e`, and `{N, N+1}` when
/// `N*p + e <= l < (N+1)*p - e`.
pub fn job_count_candidates(task: &TaskSpec, length: Tick) -> Result<CountCandidates> {
    let e = effective_exec(task)?;
    Ok(candidates_for(task.period as i64, e, length as i64))
}

fn candidates_for(p: i64, e: i64, l: i64) -> CountCandidates {
    // Smallest N with l < N*p + e.
    let n = if l < e { 0 } else { (l - e) / p + 1 };
    if l >= (n * p - e).max(0) {
        CountCandidates::exact(n as u32)
    } else {
        CountCandidates::either(n as u32 - 1)
    }
}

/// How the matching tolerance scales with job counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ToleranceMode {
    /// `sum_i gamma_i * counts_i` for each vector.
    #[default]
    PerVector,
    /// `sum_i gamma_i * max candidate count_i`, the same for every vector.
    MaxCount,
}

/// Per-task job counts explaining one interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JobCountVector {
    pub counts: Vec<u32>,
    /// `|sum_i counts_i * acet_i - length|`.
    pub residual: Tick,
}

impl JobCountVector {
    pub fn new(taskset: &TaskSet, counts: Vec<u32>, length: Tick) -> Self {
        let sum: Tick = taskset
            .tasks()
            .iter()
            .zip(&counts)
            .map(|(t, &n)| t.acet * n as Tick)
            .sum();
        JobCountVector {
            counts,
            residual: sum.abs_diff(length),
        }
    }
}

/// All vectors that match one interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalMatches {
    /// Ascending residual, ties broken lexicographically. Never empty.
    pub vectors: Vec<JobCountVector>,
    /// No vector met the tolerance; `vectors` holds the closest one.
    pub forced: bool,
    pub candidates: Vec<CountCandidates>,
}

/// Cartesian product of per-task candidates filtered by the length
/// equation.
pub fn enumerate_matches(taskset: &TaskSet, interval: &BusyInterval) -> Result<IntervalMatches> {
    enumerate_matches_with(taskset, interval, ToleranceMode::PerVector)
}

pub fn enumerate_matches_with(
    taskset: &TaskSet,
    interval: &BusyInterval,
    mode: ToleranceMode,
) -> Result<IntervalMatches> {
    let tasks = taskset.tasks();
    let candidates = tasks
        .iter()
        .map(|t| job_count_candidates(t, interval.length))
        .collect::<Result<Vec<_>>>()?;
    let (vectors, forced) = search(tasks, &candidates, interval.length, mode);
    Ok(IntervalMatches {
        vectors: vectors
            .into_iter()
            .map(|counts| JobCountVector::new(taskset, counts, interval.length))
            .collect(),
        forced,
        candidates,
    })
}

/// Decomposes every interval, in input order.
pub fn decompose_all(
    taskset: &TaskSet,
    intervals: &[BusyInterval],
    mode: ToleranceMode,
    exec: Execution,
) -> Result<Vec<IntervalMatches>> {
    exec.map(intervals, |b| enumerate_matches_with(taskset, b, mode))
        .into_iter()
        .collect()
}

fn search(tasks: &[TaskSpec], cands: &[CountCandidates], length: Tick, mode: ToleranceMode) -> (Vec<Vec<u32>>, bool) {
    let base: Vec<u32> = cands.iter().map(|c| c.low).collect();
    let base_sum: i64 = tasks.iter().zip(&base).map(|(t, &n)| (t.acet * n as Tick) as i64).sum();
    let ambiguous: Vec<usize> = (0..tasks.len()).filter(|&i| !cands[i].is_exact()).collect();
    let (base_tol, step_tol): (i64, Vec<i64>) = match mode {
        ToleranceMode::PerVector => (
            tasks
                .iter()
                .zip(&base)
                .map(|(t, &n)| (t.gamma * n as Tick) as i64)
                .sum(),
            ambiguous.iter().map(|&i| tasks[i].gamma as i64).collect(),
        ),
        ToleranceMode::MaxCount => (
            tasks
                .iter()
                .zip(cands)
                .map(|(t, c)| (t.gamma * c.high as Tick) as i64)
                .sum(),
            vec![0; ambiguous.len()],
        ),
    };
    let step_sum: Vec<i64> = ambiguous.iter().map(|&i| tasks[i].acet as i64).collect();

    // Suffix maxima for pruning.
    let mut rest_sum = vec![0i64; ambiguous.len() + 1];
    let mut rest_tol = vec![0i64; ambiguous.len() + 1];
    for j in (0..ambiguous.len()).rev() {
        rest_sum[j] = rest_sum[j + 1] + step_sum[j];
        rest_tol[j] = rest_tol[j + 1] + step_tol[j];
    }

    let l = length as i64;
    let mut found = Vec::new();
    let mut chosen = vec![false; ambiguous.len()];
    let ctx = Dfs {
        step_sum: &step_sum,
        step_tol: &step_tol,
        rest_sum: &rest_sum,
        rest_tol: &rest_tol,
        target: l,
    };
    ctx.walk(0, base_sum, base_tol, &mut chosen, &mut found);

    let to_counts = |mask: &[bool]| -> Vec<u32> {
        let mut counts = base.clone();
        for (j, &on) in mask.iter().enumerate() {
            if on {
                counts[ambiguous[j]] += 1;
            }
        }
        counts
    };

    if found.is_empty() {
        // Closest vector by residual, ties broken lexicographically.
        let mut best: Option<(i64, Vec<u32>)> = None;
        let mut mask = vec![false; ambiguous.len()];
        closest(&step_sum, 0, base_sum, l, &mut mask, &mut |m, r| {
            let counts = to_counts(m);
            let better = match &best {
                None => true,
                Some((br, bc)) => r < *br || (r == *br && counts < *bc),
            };
            if better {
                best = Some((r, counts));
            }
        });
        let (_, counts) = best.expect("at least one vector");
        return (vec![counts], true);
    }

    let mut out: Vec<(i64, Vec<u32>)> = found
        .into_iter()
        .map(|(sum, mask)| ((sum - l).abs(), to_counts(&mask)))
        .collect();
    out.sort();
    (out.into_iter().map(|(_, c)| c).collect(), false)
}

struct Dfs<'a> {
    step_sum: &'a [i64],
    step_tol: &'a [i64],
    rest_sum: &'a [i64],
    rest_tol: &'a [i64],
    target: i64,
}

impl Dfs<'_> {
    fn walk(&self, j: usize, sum: i64, tol: i64, chosen: &mut Vec<bool>, found: &mut Vec<(i64, Vec<bool>)>) {
        // Adding a task raises the sum by more than the tolerance, so an
        // overshoot can never be repaired.
        if sum - self.target > tol {
            return;
        }
        if self.target - sum - self.rest_sum[j] > tol + self.rest_tol[j] {
            return;
        }
        if j == self.step_sum.len() {
            if (sum - self.target).abs() <= tol {
                found.push((sum, chosen.clone()));
            }
            return;
        }
        chosen[j] = false;
        self.walk(j + 1, sum, tol, chosen, found);
        chosen[j] = true;
        self.walk(j + 1, sum + self.step_sum[j], tol + self.step_tol[j], chosen, found);
        chosen[j] = false;
    }
}

fn closest(step: &[i64], j: usize, sum: i64, target: i64, mask: &mut Vec<bool>, visit: &mut dyn FnMut(&[bool], i64)) {
    if j == step.len() {
        visit(mask, (sum - target).abs());
        return;
    }
    mask[j] = false;
    closest(step, j + 1, sum, target, mask, visit);
    mask[j] = true;
    closest(step, j + 1, sum + step[j], target, mask, visit);
    mask[j] = false;
}

/// Two disjoint non-empty task-id sets with equal total execution time, if
/// any exist. Such sets make some interval decompositions ambiguous.
pub fn ambiguity_witness(taskset: &TaskSet) -> Option<(Vec<u32>, Vec<u32>)> {
    let tasks = taskset.tasks();
    assert!(tasks.len() <= 20, "exhaustive subset scan limited to 20 tasks");
    let mut seen: HashMap<Tick, u32> = HashMap::new();
    for mask in 1u32..(1 << tasks.len()) {
        let sum: Tick = (0..tasks.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| tasks[i].acet)
            .sum();
        if let Some(&prev) = seen.get(&sum) {
            let ids = |m: u32| -> Vec<u32> {
                (0..tasks.len())
                    .filter(|i| m & (1 << i) != 0)
                    .map(|i| tasks[i].id)
                    .collect()
            };
            return Some((ids(prev & !mask), ids(mask & !prev)));
        }
        seen.insert(sum, mask);
    }
    None
}
