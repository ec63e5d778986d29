//! Alternates between arrival windows and job-count vectors until neither
//! changes: a task with a single arrival window decides whether its
//! optional job in each interval really happened, and those decisions prune
//! the vectors, which in turn sharpens everyone's windows.

use crate::decompose::{effective_exec, CountCandidates, IntervalMatches};
use crate::model::{BusyInterval, TaskSet, TaskSpec, Tick};
use crate::windows::{
    accumulate_histogram, candidate_arrival_windows, classify_interval, ArrivalHistogram, ArrivalWindow,
    ClassifiedSegment, SegmentKind,
};

pub const DEFAULT_MAX_ITERATIONS: usize = 16;

/// Candidate counts and windows at some point of the refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceState {
    /// One entry per observed interval, vectors never empty.
    pub matches: Vec<IntervalMatches>,
    pub histograms: Vec<ArrivalHistogram>,
    /// Per task in task-set order. Empty when the task left no evidence.
    pub windows: Vec<Vec<ArrivalWindow>>,
    pub iterations: usize,
    pub changed: bool,
    pub unconverged: bool,
    /// Intervals where pruning would have removed every vector.
    pub conflicts: usize,
    /// (task, interval) pairs skipped because their segments were empty.
    pub degenerate: usize,
    /// No task ever reached a single window, so nothing could be pruned.
    pub no_unique_window: bool,
    /// Set once the plain fixpoint has converged: tied windows are then
    /// narrowed to those backed by the most certain arrivals.
    pub tie_break: bool,
    pub log: Vec<IterationLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationLog {
    pub iteration: usize,
    pub vectors: usize,
    pub unique_window_tasks: usize,
    pub pruned_intervals: usize,
}

impl InferenceState {
    /// Windows computed once from the unrefined vectors.
    pub fn new(taskset: &TaskSet, intervals: &[BusyInterval], matches: Vec<IntervalMatches>) -> Self {
        assert_eq!(intervals.len(), matches.len());
        let mut state = InferenceState {
            matches,
            histograms: Vec::new(),
            windows: Vec::new(),
            iterations: 0,
            changed: false,
            unconverged: false,
            conflicts: 0,
            degenerate: 0,
            no_unique_window: false,
            tie_break: false,
            log: Vec::new(),
        };
        state.recompute_windows(taskset, intervals);
        state
    }

    pub fn forced(&self) -> usize {
        self.matches.iter().filter(|m| m.forced).count()
    }

    pub fn total_vectors(&self) -> usize {
        self.matches.iter().map(|m| m.vectors.len()).sum()
    }

    /// Range of counts the surviving vectors assign to task `i` in interval `k`.
    pub fn task_candidates(&self, k: usize, i: usize) -> CountCandidates {
        count_range(&self.matches[k], i)
    }

    fn recompute_windows(&mut self, taskset: &TaskSet, intervals: &[BusyInterval]) {
        self.histograms.clear();
        self.windows.clear();
        self.degenerate = 0;
        for (i, task) in taskset.tasks().iter().enumerate() {
            let mut segs = Vec::new();
            for (k, b) in intervals.iter().enumerate() {
                if self.matches[k].forced {
                    continue;
                }
                match classify_interval(task, k, b, count_range(&self.matches[k], i)) {
                    Ok(s) => segs.extend(s),
                    Err(_) => self.degenerate += 1,
                }
            }
            let hist = accumulate_histogram(task, &segs);
            let mut windows = candidate_arrival_windows(&hist).unwrap_or_default();
            if self.tie_break && windows.len() > 1 {
                windows = keep_best_supported(task, &segs, windows);
            }
            self.windows.push(windows);
            self.histograms.push(hist);
        }
    }
}

/// Among tied windows keeps the ones overlapping the most intervals where
/// an arrival is certain (a 1-kind segment). Without any such support all
/// windows stay.
fn keep_best_supported(task: &TaskSpec, segs: &[ClassifiedSegment], windows: Vec<ArrivalWindow>) -> Vec<ArrivalWindow> {
    let certain: Vec<ClassifiedSegment> = segs.iter().filter(|s| s.kind == SegmentKind::One).copied().collect();
    let support = accumulate_histogram(task, &certain);
    let p = task.period;
    let score = |w: &ArrivalWindow| {
        (0..=w.width(p))
            .map(|d| support.counts[((w.begin + d) % p) as usize])
            .max()
            .unwrap_or(0)
    };
    let best = windows.iter().map(score).max().unwrap_or(0);
    if best == 0 {
        return windows;
    }
    windows.into_iter().filter(|w| score(w) == best).collect()
}

fn count_range(m: &IntervalMatches, i: usize) -> CountCandidates {
    let lo = m.vectors.iter().map(|v| v.counts[i]).min().expect("non-empty");
    let hi = m.vectors.iter().map(|v| v.counts[i]).max().expect("non-empty");
    CountCandidates::from_bounds(lo, hi)
}

/// Closed tick range of the `h`-th occurrence (1-based) of `window` at or
/// after the interval start's period boundary.
pub fn project_window(window: &ArrivalWindow, task: &TaskSpec, interval: &BusyInterval, h: u64) -> (Tick, Tick) {
    assert!(h >= 1);
    let p = task.period;
    let base = (interval.start.div_ceil(p) + h - 1) * p;
    (window.begin + base, window.begin + window.width(p) + base)
}

/// What a unique window says about one optional job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    /// The task's count in this interval is already fixed.
    AlreadyExact,
    Undecided,
    Decided(u32),
}

/// Decides task `i`'s count in interval `k` from its only window.
///
/// The optional job is the one whose arrival falls in the period-long slot
/// starting `N * p` after the interval start; it happened exactly when that
/// arrival lies at or before `end - effective_exec`. Every occurrence of the
/// window inside the slot must agree for a decision.
pub fn resolve_count(
    window: &ArrivalWindow,
    task: &TaskSpec,
    interval: &BusyInterval,
    cands: CountCandidates,
) -> Resolution {
    if cands.is_exact() {
        return Resolution::AlreadyExact;
    }
    let Ok(e) = effective_exec(task) else {
        return Resolution::Undecided;
    };
    let p = task.period as i64;
    let w = window.width(task.period) as i64;
    let slot_lo = interval.start as i64 + cands.low() as i64 * p;
    let slot_hi = slot_lo + p - 1;
    let last_ok = interval.end() as i64 - e;
    let first = slot_lo - (slot_lo - window.begin as i64).rem_euclid(p);
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for g in [first, first + p] {
        let a = g.max(slot_lo);
        let b = (g + w).min(slot_hi);
        if a <= b {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if hi <= last_ok {
        Resolution::Decided(cands.high())
    } else if lo > last_ok {
        Resolution::Decided(cands.low())
    } else {
        Resolution::Undecided
    }
}

/// Applies one decision to an interval's vectors. Returns `(changed, conflict)`.
pub fn apply_resolution(matches: &mut IntervalMatches, i: usize, count: u32) -> (bool, bool) {
    let before = matches.vectors.len();
    if matches.vectors.iter().all(|v| v.counts[i] != count) {
        // Keep the best-fitting vector instead of emptying the list.
        matches.vectors.truncate(1);
        return (before != 1, true);
    }
    matches.vectors.retain(|v| v.counts[i] == count);
    (matches.vectors.len() != before, false)
}

/// Iterates windows and pruning until stable or `max_iterations` is hit.
///
/// Within one pass, tasks act one at a time, longest effective execution
/// first, and windows are recomputed after any task that pruned something.
/// Short tasks have the weakest footprint in the histogram, so they act
/// only after longer tasks have had a chance to claim their intervals.
pub fn refine_fixpoint(
    taskset: &TaskSet,
    intervals: &[BusyInterval],
    mut state: InferenceState,
    max_iterations: usize,
) -> InferenceState {
    let tasks = taskset.tasks();
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(effective_exec(&tasks[i]).unwrap_or(0)), i));
    let mut ever_unique = false;
    state.changed = false;
    loop {
        state.iterations += 1;
        let mut pruned = 0;
        let mut unique = 0;
        for &i in &order {
            if state.windows[i].len() != 1 {
                continue;
            }
            unique += 1;
            let window = state.windows[i][0];
            let mut pruned_here = 0;
            for (k, b) in intervals.iter().enumerate() {
                let cands = count_range(&state.matches[k], i);
                if let Resolution::Decided(n) = resolve_count(&window, &tasks[i], b, cands) {
                    let (changed, conflict) = apply_resolution(&mut state.matches[k], i, n);
                    pruned_here += changed as usize;
                    state.conflicts += conflict as usize;
                }
            }
            if pruned_here > 0 {
                state.recompute_windows(taskset, intervals);
                pruned += pruned_here;
            }
        }
        ever_unique |= unique > 0;
        state.log.push(IterationLog {
            iteration: state.iterations,
            vectors: state.total_vectors(),
            unique_window_tasks: unique,
            pruned_intervals: pruned,
        });
        if pruned == 0 {
            if state.tie_break {
                break;
            }
            state.tie_break = true;
            let before = state.windows.clone();
            state.recompute_windows(taskset, intervals);
            if state.windows == before {
                break;
            }
        } else {
            state.changed = true;
        }
        if state.iterations >= max_iterations {
            state.unconverged = true;
            break;
        }
    }
    state.no_unique_window = !ever_unique && !tasks.is_empty();
    state
}
