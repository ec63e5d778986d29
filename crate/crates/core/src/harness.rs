//! End-to-end pipeline runs and seeded experiment sweeps.

use std::io::Write;
use std::time::{Duration, Instant};

use crate::decompose::{decompose_all, ToleranceMode};
use crate::error::Result;
use crate::exec::Execution;
use crate::generator::{generate_taskset, harmonic_pairs, stream_seed, GenConfig};
use crate::metrics::{naive_baseline, precision_extrapolated, precision_in_intervals, PrecisionReport};
use crate::model::{BusyInterval, TaskSet, Tick, Trace};
use crate::refine::{refine_fixpoint, InferenceState, DEFAULT_MAX_ITERATIONS};
use crate::simulator::{busy_intervals, clip_observation, simulate, ObservationWindow, VariationModel};
use crate::translate::{reconstruct, ReconstructedSchedule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub max_iterations: usize,
    pub tolerance: ToleranceMode,
    /// Strategy for per-interval work inside one run.
    pub exec: Execution,
    pub with_naive: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: ToleranceMode::PerVector,
            exec: Execution::Sequential,
            with_naive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub intervals: usize,
    pub iterations: usize,
    pub forced: usize,
    pub conflicts: usize,
    pub unconverged: bool,
    pub no_observations: bool,
    pub dropped: usize,
    pub overflows: usize,
    pub degenerate: usize,
    pub runtime: Duration,
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// Over `[0, max(H, observation end))`, unobserved time extrapolated.
    pub report: PrecisionReport,
    /// Over the observed intervals only.
    pub window_report: PrecisionReport,
    pub naive_report: Option<PrecisionReport>,
    pub diagnostics: Diagnostics,
    pub trace: Trace,
    pub observed: Vec<BusyInterval>,
    pub state: InferenceState,
    pub reconstruction: ReconstructedSchedule,
}

/// Inference from observed intervals alone.
pub fn attack(
    taskset: &TaskSet,
    observed: &[BusyInterval],
    config: &PipelineConfig,
) -> Result<(InferenceState, ReconstructedSchedule)> {
    let matches = decompose_all(taskset, observed, config.tolerance, config.exec)?;
    let state = InferenceState::new(taskset, observed, matches);
    let state = refine_fixpoint(taskset, observed, state, config.max_iterations);
    let recon = reconstruct(taskset, observed, &state, config.exec);
    Ok((state, recon))
}

/// Simulates, observes, attacks and scores one task set.
pub fn run_pipeline(
    taskset: &TaskSet,
    variation: &VariationModel,
    window: &ObservationWindow,
    seed: u64,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let clock = Instant::now();
    let eval_end = taskset.hyper_period().max(window.end());
    let trace = simulate(taskset, eval_end, variation, seed)?;
    let observed = clip_observation(&busy_intervals(&trace), window);
    let (state, recon) = attack(taskset, &observed, config)?;
    let report = precision_extrapolated(&trace, &recon, taskset, &observed, eval_end);
    let window_report = precision_in_intervals(&trace, &recon, taskset, &observed);
    let naive_report = config.with_naive.then(|| {
        let naive = naive_baseline(taskset, &observed, stream_seed(seed, &[0x6e61_6976]), config.exec);
        precision_extrapolated(&trace, &naive, taskset, &observed, eval_end)
    });
    let diagnostics = Diagnostics {
        intervals: observed.len(),
        iterations: state.iterations,
        forced: recon.flags.forced,
        conflicts: recon.flags.conflicts,
        unconverged: recon.flags.unconverged,
        no_observations: recon.flags.no_observations,
        dropped: recon.flags.dropped,
        overflows: recon.flags.overflows,
        degenerate: state.degenerate,
        runtime: clock.elapsed(),
    };
    Ok(PipelineOutcome {
        report,
        window_report,
        naive_report,
        diagnostics,
        trace,
        observed,
        state,
        reconstruction: recon,
    })
}

/// Utilization groups `[0.001 + 0.1x, 0.1 + 0.1x]` for `x` in `0..10`.
pub fn utilization_bins() -> Vec<(f64, f64)> {
    (0..10)
        .map(|x| (0.001 + 0.1 * x as f64, 0.1 + 0.1 * x as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Utilization,
    Variation,
    TaskCount,
    Observation,
}

impl std::str::FromStr for SweepKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "utilization" => Ok(SweepKind::Utilization),
            "variation" => Ok(SweepKind::Variation),
            "task_count" | "task-count" => Ok(SweepKind::TaskCount),
            "observation" => Ok(SweepKind::Observation),
            other => Err(format!("unknown sweep kind `{other}`")),
        }
    }
}

/// One group of experiments sharing a setting.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    pub label: String,
    /// `None` cycles through all utilization groups by set index.
    pub util_range: Option<(f64, f64)>,
    /// `None` cycles through the config's task counts by set index.
    pub n_tasks: Option<usize>,
    pub variation: VariationModel,
    pub obs_fraction: f64,
    /// Bins with equal keys draw identical task sets.
    pub set_key: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub bins: Vec<BinSpec>,
    pub sets_per_bin: usize,
    pub task_counts: Vec<usize>,
    pub master_seed: u64,
    pub pipeline: PipelineConfig,
    /// Strategy across experiments.
    pub exec: Execution,
    /// Fill `runtime_ms`; leaves output non-deterministic.
    pub timing: bool,
}

impl SweepConfig {
    fn base(kind: SweepKind, bins: Vec<BinSpec>, master_seed: u64) -> Self {
        SweepConfig {
            kind,
            bins,
            sets_per_bin: 20,
            task_counts: (10..=15).collect(),
            master_seed,
            pipeline: PipelineConfig::default(),
            exec: Execution::default(),
            timing: false,
        }
    }

    /// One bin per utilization group.
    pub fn utilization(variation: VariationModel, master_seed: u64) -> Self {
        let bins = utilization_bins()
            .into_iter()
            .enumerate()
            .map(|(x, r)| BinSpec {
                label: format!("{:.3}-{:.3}", r.0, r.1),
                util_range: Some(r),
                n_tasks: None,
                variation,
                obs_fraction: 1.0,
                set_key: x as u64,
            })
            .collect();
        Self::base(SweepKind::Utilization, bins, master_seed)
    }

    /// One bin per variation model over the same task sets.
    pub fn variation(models: &[VariationModel], master_seed: u64) -> Self {
        let bins = models
            .iter()
            .map(|&v| BinSpec {
                label: v.label(),
                util_range: None,
                n_tasks: None,
                variation: v,
                obs_fraction: 1.0,
                set_key: 100,
            })
            .collect();
        Self::base(SweepKind::Variation, bins, master_seed)
    }

    /// One bin per task count.
    pub fn task_count(counts: &[usize], variation: VariationModel, master_seed: u64) -> Self {
        let bins = counts
            .iter()
            .map(|&n| BinSpec {
                label: format!("n{n}"),
                util_range: None,
                n_tasks: Some(n),
                variation,
                obs_fraction: 1.0,
                set_key: 200,
            })
            .collect();
        Self::base(SweepKind::TaskCount, bins, master_seed)
    }

    /// One bin per observed fraction of the hyper-period.
    pub fn observation(fractions: &[f64], variation: VariationModel, master_seed: u64) -> Self {
        let bins = fractions
            .iter()
            .map(|&f| BinSpec {
                label: format!("obs{f}"),
                util_range: None,
                n_tasks: None,
                variation,
                obs_fraction: f,
                set_key: 300,
            })
            .collect();
        Self::base(SweepKind::Observation, bins, master_seed)
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.sets_per_bin == 0 {
            return Err(Error::Config("sets_per_bin must be at least 1".into()));
        }
        if self.task_counts.is_empty() {
            return Err(Error::Config("task_counts must not be empty".into()));
        }
        for b in &self.bins {
            if !(b.obs_fraction > 0.0 && b.obs_fraction <= 2.0) {
                return Err(Error::Config(format!(
                    "observation fraction {} outside (0, 2]",
                    b.obs_fraction
                )));
            }
            b.variation.validate()?;
        }
        Ok(())
    }
}

/// One CSV row. Optional numbers are `None` when the experiment failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub bin: String,
    pub bin_index: usize,
    pub n_tasks: usize,
    pub utilization: Option<f64>,
    pub variation: String,
    pub obs_fraction: f64,
    pub eta_prime: Option<f64>,
    pub mean_sd: Option<f64>,
    pub forced: usize,
    pub conflicts: usize,
    pub runtime_ms: Option<f64>,
    pub eta_prime_window: Option<f64>,
    pub naive_eta_prime: Option<f64>,
    pub harmonic_pairs: usize,
    pub status: String,
}

pub const ROW_HEADER: [&str; 15] = [
    "seed",
    "bin",
    "n_tasks",
    "utilization",
    "variation",
    "obs_fraction",
    "eta_prime",
    "mean_sd",
    "forced",
    "conflicts",
    "runtime_ms",
    "eta_prime_window",
    "naive_eta_prime",
    "harmonic_pairs",
    "status",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.bin.clone(),
            self.n_tasks.to_string(),
            opt(self.utilization),
            self.variation.clone(),
            self.obs_fraction.to_string(),
            opt(self.eta_prime),
            opt(self.mean_sd),
            self.forced.to_string(),
            self.conflicts.to_string(),
            opt(self.runtime_ms),
            opt(self.eta_prime_window),
            opt(self.naive_eta_prime),
            self.harmonic_pairs.to_string(),
            self.status.clone(),
        ]
    }
}

/// Summary statistics over one bin's successful rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub bin: String,
    pub metric: &'static str,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub const AGGREGATE_HEADER: [&str; 8] = ["bin", "metric", "n", "mean", "sd", "min", "median", "max"];

pub fn aggregate(bin: &str, metric: &'static str, values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate {
            bin: bin.into(),
            metric,
            n,
            mean: f64::NAN,
            sd: f64::NAN,
            min: f64::NAN,
            median: f64::NAN,
            max: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Aggregate {
        bin: bin.into(),
        metric,
        n,
        mean,
        sd,
        min: sorted[0],
        median,
        max: sorted[n - 1],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn rows_in_bin(&self, bin_index: usize) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.bin_index == bin_index)
    }

    /// Mean of a per-row value over one bin's successful rows.
    pub fn bin_mean(&self, bin_index: usize, value: impl Fn(&SweepRow) -> Option<f64>) -> f64 {
        let v: Vec<f64> = self.rows_in_bin(bin_index).filter_map(value).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn write_rows<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ROW_HEADER)?;
        for r in &self.rows {
            w.write_record(r.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregates<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(AGGREGATE_HEADER)?;
        for a in &self.aggregates {
            w.write_record([
                a.bin.clone(),
                a.metric.to_string(),
                a.n.to_string(),
                a.mean.to_string(),
                a.sd.to_string(),
                a.min.to_string(),
                a.median.to_string(),
                a.max.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Task-set generation parameters for experiment `index` of `bin`.
pub fn experiment_gen_config(config: &SweepConfig, bin: &BinSpec, index: usize) -> GenConfig {
    let groups = utilization_bins();
    let util = bin.util_range.unwrap_or(groups[index % groups.len()]);
    let n = bin
        .n_tasks
        .unwrap_or(config.task_counts[index % config.task_counts.len()]);
    GenConfig::new(n, util, stream_seed(config.master_seed, &[bin.set_key, index as u64]))
}

/// Runs one experiment; failures become rows with a status code.
pub fn run_experiment(config: &SweepConfig, bin_index: usize, index: usize) -> SweepRow {
    let bin = &config.bins[bin_index];
    let gen = experiment_gen_config(config, bin, index);
    let mut row = SweepRow {
        seed: gen.rng_seed,
        bin: bin.label.clone(),
        bin_index,
        n_tasks: gen.n_tasks,
        utilization: None,
        variation: bin.variation.label(),
        obs_fraction: bin.obs_fraction,
        eta_prime: None,
        mean_sd: None,
        forced: 0,
        conflicts: 0,
        runtime_ms: None,
        eta_prime_window: None,
        naive_eta_prime: None,
        harmonic_pairs: 0,
        status: "ok".into(),
    };
    let set = match generate_taskset(&gen).and_then(|s| s.with_acet_fraction(acet_fraction(&bin.variation))) {
        Ok(s) => s,
        Err(e) => {
            row.status = status_code(&e);
            return row;
        }
    };
    row.utilization = Some(set.utilization());
    row.harmonic_pairs = harmonic_pairs(&set);
    let h = set.hyper_period();
    let window = ObservationWindow::new(0, ((h as f64) * bin.obs_fraction).round().max(1.0) as Tick);
    let sim_seed = stream_seed(gen.rng_seed, &[1]);
    match run_pipeline(&set, &bin.variation, &window, sim_seed, &config.pipeline) {
        Ok(out) => {
            row.eta_prime = Some(out.report.eta_prime);
            row.mean_sd = Some(out.report.mean_sd());
            row.eta_prime_window = Some(out.window_report.eta_prime);
            row.naive_eta_prime = out.naive_report.map(|r| r.eta_prime);
            row.forced = out.diagnostics.forced;
            row.conflicts = out.diagnostics.conflicts;
            if config.timing {
                row.runtime_ms = Some(out.diagnostics.runtime.as_secs_f64() * 1e3);
            }
            if out.diagnostics.no_observations {
                row.status = "no_observations".into();
            } else if out.diagnostics.unconverged {
                row.status = "unconverged".into();
            }
        }
        Err(e) => row.status = status_code(&e),
    }
    row
}

fn acet_fraction(variation: &VariationModel) -> f64 {
    match variation.kind {
        crate::simulator::VariationKind::None => 1.0,
        crate::simulator::VariationKind::TruncatedNormal => variation.mean_fraction,
    }
}

fn status_code(e: &crate::error::Error) -> String {
    use crate::error::Error;
    match e {
        Error::GenerationInfeasible { .. } => "infeasible".into(),
        Error::ToleranceExceedsExecution { .. } => "tolerance".into(),
        _ => "error".into(),
    }
}

/// Runs every (bin, index) experiment. Rows come back ordered by bin, then
/// index, whatever the execution strategy.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.bins.len())
        .flat_map(|b| (0..config.sets_per_bin).map(move |i| (b, i)))
        .collect();
    let rows = config.exec.map(&jobs, |&(b, i)| run_experiment(config, b, i));
    let mut aggregates = Vec::new();
    for (b, bin) in config.bins.iter().enumerate() {
        let in_bin: Vec<&SweepRow> = rows.iter().filter(|r| r.bin_index == b).collect();
        let column = |f: fn(&SweepRow) -> Option<f64>| -> Vec<f64> { in_bin.iter().filter_map(|r| f(r)).collect() };
        aggregates.push(aggregate(&bin.label, "eta_prime", &column(|r| r.eta_prime)));
        aggregates.push(aggregate(
            &bin.label,
            "eta_prime_window",
            &column(|r| r.eta_prime_window),
        ));
        aggregates.push(aggregate(&bin.label, "naive_eta_prime", &column(|r| r.naive_eta_prime)));
    }
    Ok(SweepResult { rows, aggregates })
}
