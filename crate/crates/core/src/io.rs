//! Plain-text file formats: task sets, traces, busy intervals, histograms,
//! reconstructions and precision reports. All are CSV with a header row.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PrecisionReport;
use crate::model::{BusyInterval, ExecSlice, TaskSet, TaskSpec, Tick, Trace};
use crate::translate::ReconstructedSchedule;
use crate::windows::ArrivalHistogram;

pub const TASKSET_MAGIC: &str = "# scheduleak-taskset v1";

#[derive(Debug, Serialize, Deserialize)]
struct TaskRow {
    id: u32,
    period: Tick,
    wcet: Tick,
    acet: Tick,
    offset: Tick,
    priority: u32,
    gamma: Tick,
    theta: Tick,
}

pub fn write_taskset<W: Write>(taskset: &TaskSet, mut out: W) -> Result<()> {
    writeln!(out, "{TASKSET_MAGIC}")?;
    let mut w = csv::Writer::from_writer(out);
    for t in taskset.tasks() {
        w.serialize(TaskRow {
            id: t.id,
            period: t.period,
            wcet: t.wcet,
            acet: t.acet,
            offset: t.offset,
            priority: t.priority,
            gamma: t.gamma,
            theta: t.theta,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_taskset<R: Read>(input: R) -> Result<TaskSet> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != TASKSET_MAGIC {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected `{TASKSET_MAGIC}`"),
        });
    }
    let mut r = csv::Reader::from_reader(reader);
    let mut tasks = Vec::new();
    for (i, row) in r.deserialize::<TaskRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: i + 3,
            message: e.to_string(),
        })?;
        tasks.push(TaskSpec {
            id: row.id,
            period: row.period,
            wcet: row.wcet,
            acet: row.acet,
            deadline: row.period,
            offset: row.offset,
            priority: row.priority,
            gamma: row.gamma,
            theta: row.theta,
        });
    }
    TaskSet::new(tasks)
}

#[derive(Debug, Serialize, Deserialize)]
struct SliceRow {
    begin: Tick,
    end: Tick,
    task_id: u32,
}

pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &trace.slices {
        w.serialize(SliceRow {
            begin: s.begin,
            end: s.end,
            task_id: s.task_id,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_slices<R: Read>(input: R) -> Result<Vec<ExecSlice>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<SliceRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            if row.end <= row.begin {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "slice end must exceed begin".into(),
                });
            }
            Ok(ExecSlice {
                task_id: row.task_id,
                begin: row.begin,
                end: row.end,
            })
        })
        .collect()
}

/// Start of each job from its slices: job `k` arrives at
/// `offset + k * period` and starts at the task's first slice in
/// `[arrival, next arrival)`. Assumes no arrival jitter.
pub fn starts_from_slices(taskset: &TaskSet, slices: &[ExecSlice]) -> Vec<Vec<Tick>> {
    let mut out = vec![Vec::new(); taskset.len()];
    let mut per_task: Vec<Vec<Tick>> = vec![Vec::new(); taskset.len()];
    for s in slices {
        if let Some(i) = taskset.index_of(s.task_id) {
            per_task[i].push(s.begin);
        }
    }
    for (i, t) in taskset.tasks().iter().enumerate() {
        let begins = &mut per_task[i];
        begins.sort_unstable();
        let mut last_job = None;
        for &b in begins.iter() {
            if b < t.offset {
                continue;
            }
            let k = (b - t.offset) / t.period;
            if last_job != Some(k) {
                out[i].push(b);
                last_job = Some(k);
            }
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct IntervalRow {
    start: Tick,
    length: Tick,
}

pub fn write_intervals<W: Write>(intervals: &[BusyInterval], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in intervals {
        w.serialize(IntervalRow {
            start: b.start,
            length: b.length,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_intervals<R: Read>(input: R) -> Result<Vec<BusyInterval>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<BusyInterval> = Vec::new();
    for (i, row) in r.deserialize::<IntervalRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if row.length == 0 {
            return Err(Error::Parse {
                line,
                message: "zero-length interval".into(),
            });
        }
        if out.last().is_some_and(|p| p.end() >= row.start) {
            return Err(Error::Parse {
                line,
                message: "intervals must be sorted and separated by idle time".into(),
            });
        }
        out.push(BusyInterval::new(row.start, row.length));
    }
    Ok(out)
}

pub fn write_histograms<W: Write>(hists: &[ArrivalHistogram], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["task_id", "position", "count"])?;
    for h in hists {
        for (pos, c) in h.counts.iter().enumerate() {
            w.write_record(&[h.task_id.to_string(), pos.to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructionRow {
    pub interval_start: Tick,
    pub task_id: u32,
    pub arrival: Tick,
    pub start: Tick,
}

pub fn write_reconstruction<W: Write>(recon: &ReconstructedSchedule, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &recon.intervals {
        for j in &s.jobs {
            w.serialize(ReconstructionRow {
                interval_start: s.interval.start,
                task_id: j.task_id,
                arrival: j.arrival,
                start: j.start,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_reconstruction<R: Read>(input: R) -> Result<Vec<ReconstructionRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<ReconstructionRow>()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_report<W: Write>(report: &PrecisionReport, mut out: W) -> Result<()> {
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["task_id", "sd", "precision", "u", "unmatched"])?;
        for t in &report.tasks {
            w.write_record(&[
                t.task_id.to_string(),
                format!("{:.6}", t.sd),
                format!("{:.6}", t.precision),
                t.matched.to_string(),
                t.unmatched.to_string(),
            ])?;
        }
        w.flush()?;
    }
    writeln!(out, "eta_prime,{:.6}", report.eta_prime)?;
    Ok(())
}
