//! Per-task arrival segments inside busy intervals and their modular
//! histogram. Histogram peaks are the candidate arrival windows.

use crate::decompose::{effective_exec, CountCandidates};
use crate::error::{Error, Result};
use crate::model::{BusyInterval, TaskSpec, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Zero,
    One,
    ZeroOrOne,
}

/// Closed range `[begin, end]` of ticks that may hold a job arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassifiedSegment {
    pub kind: SegmentKind,
    pub begin: Tick,
    pub end: Tick,
    pub interval_index: usize,
    /// 1-based job slot inside the interval.
    pub slot: u32,
}

impl ClassifiedSegment {
    pub fn contains(&self, t: Tick) -> bool {
        (self.begin..=self.end).contains(&t)
    }
}

/// Segments for one task inside one interval (interval index 0).
///
/// Only `One` and `ZeroOrOne` segments are returned; anything else in the
/// interval is implicitly zero.
pub fn classify_segments(
    task: &TaskSpec,
    interval: &BusyInterval,
    cands: CountCandidates,
) -> Result<Vec<ClassifiedSegment>> {
    classify_interval(task, 0, interval, cands)
}

pub fn classify_interval(
    task: &TaskSpec,
    index: usize,
    interval: &BusyInterval,
    cands: CountCandidates,
) -> Result<Vec<ClassifiedSegment>> {
    let e = effective_exec(task)?;
    let p = task.period as i64;
    let alpha = interval.start as i64;
    let beta = interval.end() as i64;
    let l = interval.length as i64;
    let n = cands.low() as i64;

    let mut raw: Vec<(SegmentKind, i64, i64, u32)> = Vec::new();
    if cands.is_exact() {
        let ceil = (l + p - 1) / p;
        for h in 1..=n {
            let (b, en) = if n == ceil {
                (alpha + (h - 1) * p, beta - (n - h) * p - e)
            } else {
                (beta - (n + 1 - h) * p, alpha + h * p - e)
            };
            raw.push((SegmentKind::One, b, en, h as u32));
        }
    } else {
        for h in 1..=n {
            raw.push((SegmentKind::One, alpha + (h - 1) * p, alpha + h * p - e, h as u32));
        }
        raw.push((SegmentKind::ZeroOrOne, alpha + n * p, beta - e, n as u32 + 1));
    }

    raw.into_iter()
        .map(|(kind, b, en, slot)| {
            if b > en || b < 0 {
                return Err(Error::DegenerateSegment {
                    task_id: task.id,
                    start: interval.start,
                    begin: b,
                    end: en,
                });
            }
            Ok(ClassifiedSegment {
                kind,
                begin: b as Tick,
                end: en as Tick,
                interval_index: index,
                slot,
            })
        })
        .collect()
}

/// Occurrence counts of feasible arrival positions modulo the period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalHistogram {
    pub task_id: u32,
    pub counts: Vec<u32>,
}

impl ArrivalHistogram {
    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Folds segments into a histogram over `[0, p)`.
///
/// Each busy interval adds at most one to any position, even when the same
/// position is covered by more than one of that interval's segments (which
/// happens whenever an interval spans more than a period). This keeps every
/// count bounded by the number of contributing intervals.
pub fn accumulate_histogram(task: &TaskSpec, segments: &[ClassifiedSegment]) -> ArrivalHistogram {
    let p = task.period as usize;
    let mut counts = vec![0u32; p];
    let mut stamp = vec![usize::MAX; p];
    let mut ordered: Vec<&ClassifiedSegment> = segments.iter().filter(|s| s.kind != SegmentKind::Zero).collect();
    ordered.sort_by_key(|s| s.interval_index);
    for seg in ordered {
        let width = (seg.end - seg.begin) as usize;
        let first = (seg.begin % task.period) as usize;
        for off in 0..=width.min(p - 1) {
            let pos = (first + off) % p;
            if stamp[pos] != seg.interval_index {
                stamp[pos] = seg.interval_index;
                counts[pos] += 1;
            }
        }
    }
    ArrivalHistogram {
        task_id: task.id,
        counts,
    }
}

/// A closed, possibly wrapping range of positions modulo the period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArrivalWindow {
    pub begin: Tick,
    pub end: Tick,
}

impl ArrivalWindow {
    pub fn new(begin: Tick, end: Tick) -> Self {
        ArrivalWindow { begin, end }
    }

    /// Number of positions after `begin` covered, so 0 for `[x, x]`.
    pub fn width(&self, period: Tick) -> Tick {
        (self.end + period - self.begin) % period
    }

    pub fn contains(&self, position: Tick, period: Tick) -> bool {
        (position % period + period - self.begin) % period <= self.width(period)
    }
}

/// Maximal runs at the peak count, merged across the wrap-around and ordered
/// by begin position.
pub fn candidate_arrival_windows(hist: &ArrivalHistogram) -> Result<Vec<ArrivalWindow>> {
    let max = hist.max_count();
    if max == 0 {
        return Err(Error::NoArrivalEvidence { task_id: hist.task_id });
    }
    let p = hist.counts.len();
    let at_max: Vec<bool> = hist.counts.iter().map(|&c| c == max).collect();
    if at_max.iter().all(|&b| b) {
        return Ok(vec![ArrivalWindow::new(0, p as Tick - 1)]);
    }
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut t = 0;
    while t < p {
        if at_max[t] {
            let b = t;
            while t + 1 < p && at_max[t + 1] {
                t += 1;
            }
            runs.push((b, t));
        }
        t += 1;
    }
    if runs.len() > 1 && runs[0].0 == 0 && runs.last().unwrap().1 == p - 1 {
        let head = runs.remove(0);
        runs.last_mut().unwrap().1 = head.1;
    }
    let mut out: Vec<ArrivalWindow> = runs
        .into_iter()
        .map(|(b, e)| ArrivalWindow::new(b as Tick, e as Tick))
        .collect();
    out.sort_by_key(|w| w.begin);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{busy_intervals, simulate, VariationModel};

    fn task(p: Tick, c: Tick) -> TaskSpec {
        TaskSpec::new(3, p, c)
    }

    fn spans(segs: &[ClassifiedSegment]) -> Vec<(SegmentKind, Tick, Tick)> {
        segs.iter().map(|s| (s.kind, s.begin, s.end)).collect()
    }

    #[test]
    fn classify_examples() {
        let seg = classify_segments(&task(10, 2), &BusyInterval::new(0, 8), CountCandidates::exact(1)).unwrap();
        assert_eq!(spans(&seg), vec![(SegmentKind::One, 0, 6)]);
        let seg = classify_segments(&task(10, 2), &BusyInterval::new(24, 3), CountCandidates::either(0)).unwrap();
        assert_eq!(spans(&seg), vec![(SegmentKind::ZeroOrOne, 24, 25)]);
        let seg = classify_segments(&task(6, 2), &BusyInterval::new(0, 8), CountCandidates::either(1)).unwrap();
        assert_eq!(
            spans(&seg),
            vec![(SegmentKind::One, 0, 4), (SegmentKind::ZeroOrOne, 6, 6)]
        );
        assert!(
            classify_segments(&task(10, 2), &BusyInterval::new(5, 1), CountCandidates::exact(0))
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn inconsistent_count_is_degenerate() {
        // Two jobs of a 10-tick task cannot fit a 4-tick interval.
        let r = classify_segments(&task(10, 2), &BusyInterval::new(0, 4), CountCandidates::exact(2));
        assert!(matches!(r, Err(Error::DegenerateSegment { .. })));
    }

    #[test]
    fn one_intervals_translate_by_period() {
        let t = task(7, 2);
        for l in 1..60 {
            for cands in [CountCandidates::exact(l / 7), CountCandidates::either(l / 7)] {
                if let Ok(segs) = classify_segments(&t, &BusyInterval::new(3, l as Tick), cands) {
                    let ones: Vec<_> = segs.iter().filter(|s| s.kind == SegmentKind::One).collect();
                    for w in ones.windows(2) {
                        assert_eq!(w[1].begin - w[0].begin, 7);
                        assert_eq!(w[1].end - w[0].end, 7);
                    }
                    for w in segs.windows(2) {
                        assert!(w[0].end < w[1].begin);
                    }
                }
            }
        }
    }

    fn three_task_histogram_tau3() -> ArrivalHistogram {
        let t = task(10, 2);
        let parts = [
            ((0, 8), CountCandidates::exact(1)),
            ((10, 6), CountCandidates::exact(1)),
            ((18, 5), CountCandidates::either(0)),
            ((24, 3), CountCandidates::either(0)),
        ];
        let segs: Vec<ClassifiedSegment> = parts
            .iter()
            .enumerate()
            .flat_map(|(k, &((s, l), c))| classify_interval(&t, k, &BusyInterval::new(s, l), c).unwrap())
            .collect();
        accumulate_histogram(&t, &segs)
    }

    #[test]
    fn example_histogram_and_windows() {
        let h = three_task_histogram_tau3();
        assert_eq!(h.counts, vec![3, 3, 2, 2, 3, 2, 1, 0, 1, 1]);
        assert_eq!(
            candidate_arrival_windows(&h).unwrap(),
            vec![ArrivalWindow::new(0, 1), ArrivalWindow::new(4, 4)]
        );
    }

    #[test]
    fn example_tau2_window_from_simulation() {
        use crate::decompose::enumerate_matches;
        use crate::model::TaskSet;
        let set = TaskSet::from_period_exec(&[(5, 1), (6, 2), (10, 2)]).unwrap();
        let trace = simulate(&set, 30, &VariationModel::none(), 0).unwrap();
        let t2 = set.tasks()[1];
        let mut segs = vec![];
        for (k, b) in busy_intervals(&trace).iter().enumerate() {
            let m = enumerate_matches(&set, b).unwrap();
            let lo = m.vectors.iter().map(|v| v.counts[1]).min().unwrap();
            let hi = m.vectors.iter().map(|v| v.counts[1]).max().unwrap();
            let c = if lo == hi {
                CountCandidates::exact(lo)
            } else {
                CountCandidates::either(lo)
            };
            segs.extend(classify_interval(&t2, k, b, c).unwrap());
        }
        let h = accumulate_histogram(&t2, &segs);
        assert_eq!(candidate_arrival_windows(&h).unwrap(), vec![ArrivalWindow::new(0, 0)]);
    }

    #[test]
    fn histogram_trivial_cases() {
        let t = task(10, 2);
        let seg = classify_segments(&t, &BusyInterval::new(0, 8), CountCandidates::exact(1)).unwrap();
        let h = accumulate_histogram(&t, &seg);
        assert_eq!(h.counts, vec![1, 1, 1, 1, 1, 1, 1, 0, 0, 0]);
        let empty = accumulate_histogram(&t, &[]);
        assert_eq!(empty.counts, vec![0; 10]);
        assert!(matches!(
            candidate_arrival_windows(&empty),
            Err(Error::NoArrivalEvidence { task_id: 3 })
        ));
    }

    #[test]
    fn histogram_counts_one_per_interval() {
        // A 25-tick interval for p=10 covers several positions twice.
        let t = task(10, 2);
        let segs = classify_interval(&t, 0, &BusyInterval::new(0, 25), CountCandidates::either(2)).unwrap();
        let h = accumulate_histogram(&t, &segs);
        assert!(h.counts.iter().all(|&c| c <= 1));
    }

    #[test]
    fn wrapped_window() {
        let mut counts = vec![0; 10];
        counts[9] = 2;
        counts[0] = 2;
        counts[4] = 1;
        let h = ArrivalHistogram { task_id: 1, counts };
        let w = candidate_arrival_windows(&h).unwrap();
        assert_eq!(w, vec![ArrivalWindow::new(9, 0)]);
        assert_eq!(w[0].width(10), 1);
        assert!(w[0].contains(0, 10) && w[0].contains(9, 10) && !w[0].contains(1, 10));
    }

    #[test]
    fn flat_histogram_is_one_window() {
        let h = ArrivalHistogram {
            task_id: 1,
            counts: vec![2; 5],
        };
        assert_eq!(candidate_arrival_windows(&h).unwrap(), vec![ArrivalWindow::new(0, 4)]);
    }
}
