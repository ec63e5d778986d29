//! Turns arrival windows and job counts into concrete job start times by
//! replaying fixed-priority scheduling with nominal execution times.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::exec::Execution;
use crate::model::{BusyInterval, TaskSet, TaskSpec, Tick};
use crate::refine::InferenceState;
use crate::windows::ArrivalWindow;

/// One reconstructed job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InferredJob {
    pub task_id: u32,
    pub arrival: Tick,
    pub start: Tick,
    pub completion: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSchedule {
    pub interval: BusyInterval,
    /// Ordered by arrival, then task-set order.
    pub jobs: Vec<InferredJob>,
    /// The replay ran past the interval end plus the variation allowance.
    pub overflow: bool,
    /// Jobs the count vector asked for but no arrival could be placed.
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleFlags {
    pub unconverged: bool,
    pub no_observations: bool,
    pub conflicts: usize,
    pub forced: usize,
    pub dropped: usize,
    pub overflows: usize,
    /// Tasks with no arrival window at all.
    pub no_evidence: usize,
    /// Tasks whose window was not unique when committed.
    pub ambiguous_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconstructedSchedule {
    /// Committed arrival position per task, `None` without evidence.
    pub committed: Vec<Option<Tick>>,
    /// The window each commitment came from.
    pub committed_windows: Vec<Option<ArrivalWindow>>,
    pub intervals: Vec<IntervalSchedule>,
    pub flags: ScheduleFlags,
}

impl ReconstructedSchedule {
    pub fn jobs(&self) -> impl Iterator<Item = &InferredJob> {
        self.intervals.iter().flat_map(|s| s.jobs.iter())
    }
}

/// Begin of the window with the smallest begin position.
pub fn commit_arrival(windows: &[ArrivalWindow]) -> Option<Tick> {
    earliest_window(windows).map(|w| w.begin)
}

fn earliest_window(windows: &[ArrivalWindow]) -> Option<ArrivalWindow> {
    windows.iter().min_by_key(|w| w.begin).copied()
}

/// First `count` points of the grid `a + k*p` at or after the interval
/// start. Points at or beyond the interval end are dropped; the second value
/// is how many were.
pub fn arrivals_in_interval(a: Tick, task: &TaskSpec, interval: &BusyInterval, count: u32) -> (Vec<Tick>, usize) {
    let p = task.period;
    let a = a % p;
    let first = if interval.start <= a {
        a
    } else {
        a + (interval.start - a).div_ceil(p) * p
    };
    let mut out = Vec::with_capacity(count as usize);
    let mut dropped = 0;
    for h in 0..count as Tick {
        let t = first + h * p;
        if t < interval.end() {
            out.push(t);
        } else {
            dropped += 1;
        }
    }
    (out, dropped)
}

/// Like [`arrivals_in_interval`], but aware of the whole window: when an
/// occurrence of the window straddles the interval start, the arrival is
/// the interval start itself, since the job cannot have arrived during the
/// idle time just before it.
pub fn window_arrivals(
    window: &ArrivalWindow,
    task: &TaskSpec,
    interval: &BusyInterval,
    count: u32,
) -> (Vec<Tick>, usize) {
    let p = task.period;
    let w = window.width(p);
    let s = interval.start;
    // First occurrence whose closing tick is at or after s.
    let mut g = if s <= window.begin + w {
        window.begin
    } else {
        window.begin + (s - window.begin - w).div_ceil(p) * p
    };
    let mut out = Vec::with_capacity(count as usize);
    while (out.len() as u32) < count && g < interval.end() {
        out.push(g.max(s));
        g += p;
    }
    let dropped = count as usize - out.len();
    (out, dropped)
}

/// Fixed-priority preemptive replay of the given `(task_id, arrival)` pairs
/// using each task's nominal execution time.
///
/// When an arrival coincides with a preempted job's resumption, the new
/// arrival competes first. The second value reports whether the replay ran
/// beyond `interval.end()` plus the accumulated variation allowance.
pub fn compact_translate(
    taskset: &TaskSet,
    interval: &BusyInterval,
    arrivals: &[(u32, Tick)],
) -> (Vec<InferredJob>, bool) {
    let tasks = taskset.tasks();
    let mut pending: Vec<(Tick, Reverse<u32>, usize)> = arrivals
        .iter()
        .map(|&(id, t)| {
            let i = taskset.index_of(id).expect("unknown task id");
            (t, Reverse(tasks[i].priority), i)
        })
        .collect();
    pending.sort();
    let jobs = replay(tasks, &pending);
    let allowance: Tick = pending.iter().map(|&(_, _, i)| tasks[i].gamma).sum();
    let last = jobs.iter().map(|j| j.completion).max().unwrap_or(interval.start);
    let overflow = last > interval.end() + allowance;
    (jobs, overflow)
}

/// `pending` is sorted by arrival; entries hold a task index.
fn replay(tasks: &[TaskSpec], pending: &[(Tick, Reverse<u32>, usize)]) -> Vec<InferredJob> {
    let mut out: Vec<InferredJob> = pending
        .iter()
        .map(|&(t, _, i)| InferredJob {
            task_id: tasks[i].id,
            arrival: t,
            start: Tick::MAX,
            completion: Tick::MAX,
        })
        .collect();
    let mut remaining: Vec<Tick> = pending.iter().map(|&(_, _, i)| tasks[i].acet).collect();
    let mut ready: BinaryHeap<(u32, Reverse<Tick>, Reverse<usize>)> = BinaryHeap::new();
    let mut next = 0;
    let mut now = pending.first().map_or(0, |p| p.0);
    while next < pending.len() || !ready.is_empty() {
        while next < pending.len() && pending[next].0 <= now {
            let (t, Reverse(prio), _) = pending[next];
            ready.push((prio, Reverse(t), Reverse(next)));
            next += 1;
        }
        let Some(&(_, _, Reverse(j))) = ready.peek() else {
            now = pending[next].0;
            continue;
        };
        if out[j].start == Tick::MAX {
            out[j].start = now;
        }
        let horizon = pending.get(next).map_or(Tick::MAX, |p| p.0);
        let run = remaining[j].min(horizon - now);
        now += run;
        remaining[j] -= run;
        if remaining[j] == 0 {
            out[j].completion = now;
            ready.pop();
        }
    }
    out
}

/// Reconstructs every observed interval from the refined state.
pub fn reconstruct(
    taskset: &TaskSet,
    intervals: &[BusyInterval],
    state: &InferenceState,
    exec: Execution,
) -> ReconstructedSchedule {
    let tasks = taskset.tasks();
    let committed_windows: Vec<Option<ArrivalWindow>> = state.windows.iter().map(|w| earliest_window(w)).collect();
    let indexed: Vec<(usize, &BusyInterval)> = intervals.iter().enumerate().collect();
    let per_interval = exec.map(&indexed, |&(k, b)| {
        let counts = &state.matches[k].vectors[0].counts;
        let mut arrivals = Vec::new();
        let mut dropped = 0;
        for (i, t) in tasks.iter().enumerate() {
            if counts[i] == 0 {
                continue;
            }
            match &committed_windows[i] {
                Some(w) => {
                    let (a, d) = window_arrivals(w, t, b, counts[i]);
                    arrivals.extend(a.into_iter().map(|x| (t.id, x)));
                    dropped += d;
                }
                None => dropped += counts[i] as usize,
            }
        }
        let (jobs, overflow) = compact_translate(taskset, b, &arrivals);
        IntervalSchedule {
            interval: *b,
            jobs,
            overflow,
            dropped,
        }
    });
    let flags = ScheduleFlags {
        unconverged: state.unconverged,
        no_observations: intervals.is_empty(),
        conflicts: state.conflicts,
        forced: state.forced(),
        dropped: per_interval.iter().map(|s| s.dropped).sum(),
        overflows: per_interval.iter().filter(|s| s.overflow).count(),
        no_evidence: state.windows.iter().filter(|w| w.is_empty()).count(),
        ambiguous_tasks: state.windows.iter().filter(|w| w.len() > 1).count(),
    };
    ReconstructedSchedule {
        committed: committed_windows.iter().map(|w| w.map(|w| w.begin)).collect(),
        committed_windows,
        intervals: per_interval,
        flags,
    }
}

/// Nominal schedule over `[0, horizon)` from per-task offsets; tasks with
/// `None` release nothing.
pub fn extrapolate(taskset: &TaskSet, offsets: &[Option<Tick>], horizon: Tick) -> Vec<InferredJob> {
    let tasks = taskset.tasks();
    let mut pending: Vec<(Tick, Reverse<u32>, usize)> = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        if let Some(a) = offsets[i] {
            let mut x = a % t.period;
            while x < horizon {
                pending.push((x, Reverse(t.priority), i));
                x += t.period;
            }
        }
    }
    pending.sort();
    replay(tasks, &pending)
}
