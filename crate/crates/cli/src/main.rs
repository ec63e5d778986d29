use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scheduleak::decompose::ToleranceMode;
use scheduleak::generator::{generate_taskset, GenConfig};
use scheduleak::harness::{attack, PipelineConfig, SweepConfig, SweepKind};
use scheduleak::io::{
    read_intervals, read_reconstruction, read_slices, read_taskset, starts_from_slices, write_histograms,
    write_intervals, write_reconstruction, write_report, write_taskset, write_trace,
};
use scheduleak::metrics::{precision_from_starts, precision_ratio};
use scheduleak::simulator::{busy_intervals, clip_observation, simulate, ObservationWindow, VariationModel};
use scheduleak::{Error, Execution, TaskSet, Tick};

#[derive(Parser)]
#[command(
    name = "scheduleak",
    version,
    about = "Simulate fixed-priority schedules and reconstruct them from busy intervals"
)]
struct Cli {
    /// Seed for every random draw the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Main output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress informational messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random schedulable task set.
    Gen(GenArgs),
    /// Simulate a task set and export its trace and busy intervals.
    Sim(SimArgs),
    /// Infer arrivals from busy intervals and reconstruct the schedule.
    Attack(AttackArgs),
    /// Score a reconstruction against a ground-truth trace.
    Eval(EvalArgs),
    /// Run an experiment sweep and write one CSV row per task set.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Variation {
    None,
    Normal,
}

#[derive(Args)]
struct VariationArgs {
    #[arg(long, value_enum, default_value = "none")]
    variation: Variation,
    /// Mean execution time as a fraction of wcet for `normal`.
    #[arg(long, default_value_t = 0.8)]
    mean_frac: f64,
}

impl VariationArgs {
    fn model(&self) -> VariationModel {
        match self.variation {
            Variation::None => VariationModel::none(),
            Variation::Normal => VariationModel::truncated_normal(self.mean_frac),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    n_tasks: usize,
    #[arg(long, default_value_t = 0.5)]
    util_min: f64,
    #[arg(long, default_value_t = 0.6)]
    util_max: f64,
    /// acet as a fraction of wcet; 1.0 means no execution-time variation.
    #[arg(long, default_value_t = 1.0)]
    acet_frac: f64,
    #[arg(long, default_value_t = 30030)]
    hyper_period_cap: Tick,
}

#[derive(Args)]
struct SimArgs {
    /// Task-set file.
    taskset: PathBuf,
    /// Arrivals are generated before this tick (default: one hyper-period).
    #[arg(long)]
    horizon: Option<Tick>,
    #[command(flatten)]
    variation: VariationArgs,
    /// Ground-truth trace CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Busy-interval CSV (also written to --out or stdout when no other output is requested).
    #[arg(long)]
    bi_out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Task-set file with the attacker's knowledge (offsets are ignored).
    taskset: PathBuf,
    /// Observed busy intervals.
    #[arg(long, conflicts_with = "from_sim", required_unless_present = "from_sim")]
    bi: Option<PathBuf>,
    /// Simulate the task set and observe its busy intervals.
    #[arg(long)]
    from_sim: bool,
    /// Observed fraction of one hyper-period, in (0, 2].
    #[arg(long, default_value_t = 1.0)]
    observe: f64,
    #[arg(long, default_value_t = scheduleak::refine::DEFAULT_MAX_ITERATIONS)]
    max_iters: usize,
    /// Bound the matching tolerance by each task's largest candidate count.
    #[arg(long)]
    max_count_tolerance: bool,
    #[command(flatten)]
    variation: VariationArgs,
    /// With --from-sim: write the simulated ground-truth trace here.
    #[arg(long, requires = "from_sim")]
    trace_out: Option<PathBuf>,
    /// Print each interval's candidate count vectors.
    #[arg(long)]
    verbose: bool,
    /// Write arrival histograms (task_id,position,count).
    #[arg(long)]
    dump_histograms: Option<PathBuf>,
    /// Print one line per refinement iteration.
    #[arg(long)]
    trace_refinement: bool,
    /// Write a one-line run summary.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    taskset: PathBuf,
    /// Ground-truth trace CSV (begin,end,task_id).
    trace: PathBuf,
    /// Reconstruction CSV (interval_start,task_id,arrival,start).
    reconstruction: PathBuf,
    /// First tick of the scoring window.
    #[arg(long, default_value_t = 0)]
    window_start: Tick,
    /// End of the scoring window (default: one hyper-period after its start).
    #[arg(long)]
    window_end: Option<Tick>,
}

#[derive(Args)]
struct SweepArgs {
    /// utilization, variation, task_count or observation.
    #[arg(long, default_value = "utilization")]
    kind: SweepKind,
    #[arg(long, default_value_t = 20)]
    sets: usize,
    #[command(flatten)]
    variation: VariationArgs,
    /// Task counts cycled through (utilization, variation and observation
    /// sweeps) or compared (task_count sweep).
    #[arg(long, value_delimiter = ',', default_values_t = [10, 11, 12, 13, 14, 15])]
    counts: Vec<usize>,
    /// Mean fractions compared by the variation sweep; 1.0 means none.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.8, 0.6])]
    models: Vec<f64>,
    /// Observed fractions compared by the observation sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5, 1.0, 2.0])]
    fractions: Vec<f64>,
    /// Per-bin aggregate CSV.
    #[arg(long)]
    aggregates: Option<PathBuf>,
    /// Fill the runtime_ms column (makes output timing-dependent).
    #[arg(long)]
    timing: bool,
    /// Run experiments on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

enum Failure {
    Usage(String),
    Infeasible(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Infeasible(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::GenerationInfeasible { .. } => Failure::Infeasible(e.to_string()),
            Error::Io(_) | Error::Csv(_) | Error::Parse { .. } => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
    quiet: bool,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn main_output(&self) -> CliResult<Box<dyn Write>> {
        match &self.out {
            Some(p) => create(p),
            None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        }
    }
}

fn create(path: &Path) -> CliResult<Box<dyn Write>> {
    let f = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_taskset(path: &Path) -> CliResult<TaskSet> {
    read_taskset(open(path)?).map_err(|e| match e {
        Error::Parse { .. } | Error::Io(_) | Error::Csv(_) => Failure::Io(format!("{}: {e}", path.display())),
        other => Failure::Usage(format!("{}: {other}", path.display())),
    })
}

fn observation_window(set: &TaskSet, fraction: f64) -> CliResult<ObservationWindow> {
    if !(fraction > 0.0 && fraction <= 2.0) {
        return Err(Failure::Usage(format!("--observe {fraction} outside (0, 2]")));
    }
    let len = ((set.hyper_period() as f64) * fraction).round().max(1.0) as Tick;
    Ok(ObservationWindow::new(0, len))
}

fn cmd_gen(ctx: &Ctx, a: &GenArgs) -> CliResult<()> {
    let mut cfg = GenConfig::new(a.n_tasks, (a.util_min, a.util_max), ctx.seed);
    cfg.hyper_period_cap = a.hyper_period_cap;
    let set = generate_taskset(&cfg)?.with_acet_fraction(a.acet_frac)?;
    write_taskset(&set, ctx.main_output()?)?;
    ctx.info(format!(
        "generated {} tasks, utilization {:.4}, hyper-period {}",
        set.len(),
        set.utilization(),
        set.hyper_period()
    ));
    Ok(())
}

fn cmd_sim(ctx: &Ctx, a: &SimArgs) -> CliResult<()> {
    let set = load_taskset(&a.taskset)?;
    let horizon = a.horizon.unwrap_or(set.hyper_period());
    let trace = simulate(&set, horizon, &a.variation.model(), ctx.seed)?;
    let bis = busy_intervals(&trace);
    if let Some(p) = &a.trace_out {
        write_trace(&trace, create(p)?)?;
    }
    if let Some(p) = &a.bi_out {
        write_intervals(&bis, create(p)?)?;
    }
    if ctx.out.is_some() || (a.trace_out.is_none() && a.bi_out.is_none()) {
        write_intervals(&bis, ctx.main_output()?)?;
    }
    ctx.info(format!("simulated until {}: {} busy intervals", trace.end, bis.len()));
    Ok(())
}

fn cmd_attack(ctx: &Ctx, a: &AttackArgs) -> CliResult<()> {
    let set = load_taskset(&a.taskset)?;
    let window = observation_window(&set, a.observe)?;
    let mut truth = None;
    let observed = if a.from_sim {
        let horizon = set.hyper_period().max(window.end());
        let trace = simulate(&set, horizon, &a.variation.model(), ctx.seed)?;
        if let Some(p) = &a.trace_out {
            write_trace(&trace, create(p)?)?;
        }
        let observed = clip_observation(&busy_intervals(&trace), &window);
        truth = Some(trace);
        observed
    } else {
        let path = a.bi.as_ref().expect("clap enforces --bi or --from-sim");
        let all = read_intervals(open(path)?).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        clip_observation(&all, &window)
    };

    let cfg = PipelineConfig {
        max_iterations: a.max_iters.max(1),
        tolerance: if a.max_count_tolerance {
            ToleranceMode::MaxCount
        } else {
            ToleranceMode::PerVector
        },
        exec: Execution::default(),
        with_naive: false,
    };
    let (state, recon) = attack(&set, &observed, &cfg)?;

    if a.verbose && !ctx.quiet {
        for (b, m) in observed.iter().zip(&state.matches) {
            let vs: Vec<String> = m.vectors.iter().map(|v| format!("{:?}", v.counts)).collect();
            let forced = if m.forced { " forced" } else { "" };
            eprintln!("interval {} len {}{forced}: {}", b.start, b.length, vs.join(" "));
        }
    }
    if a.trace_refinement && !ctx.quiet {
        for l in &state.log {
            eprintln!(
                "iteration {}: vectors after {} unique-window tasks {} prunings {}",
                l.iteration, l.vectors, l.unique_window_tasks, l.pruned_intervals
            );
        }
    }
    if let Some(p) = &a.dump_histograms {
        write_histograms(&state.histograms, create(p)?)?;
    }
    write_reconstruction(&recon, ctx.main_output()?)?;

    let f = &recon.flags;
    let committed: Vec<String> = recon
        .committed
        .iter()
        .map(|c| c.map_or_else(|| "NA".to_string(), |v| v.to_string()))
        .collect();
    let mut line = format!(
        "intervals={} iterations={} vectors={} forced={} conflicts={} unconverged={} no_observations={} overflows={} dropped={} ambiguous_tasks={} committed={}",
        observed.len(),
        state.iterations,
        state.total_vectors(),
        f.forced,
        f.conflicts,
        f.unconverged,
        f.no_observations,
        f.overflows,
        f.dropped,
        f.ambiguous_tasks,
        committed.join(";"),
    );
    if let Some(trace) = &truth {
        let r = precision_ratio(trace, &recon, &set, &window);
        line.push_str(&format!(" eta_prime_window={:.6}", r.eta_prime));
    }
    if let Some(p) = &a.summary {
        let mut w = create(p)?;
        writeln!(w, "{line}")?;
        w.flush()?;
    }
    ctx.info(line);
    Ok(())
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> CliResult<()> {
    let set = load_taskset(&a.taskset)?;
    let slices = read_slices(open(&a.trace)?).map_err(|e| Failure::Io(format!("{}: {e}", a.trace.display())))?;
    let rows = read_reconstruction(open(&a.reconstruction)?)
        .map_err(|e| Failure::Io(format!("{}: {e}", a.reconstruction.display())))?;
    let end = a.window_end.unwrap_or(a.window_start + set.hyper_period());
    if end <= a.window_start {
        return Err(Failure::Usage("--window-end must exceed --window-start".into()));
    }
    let in_window = |t: &Tick| (a.window_start..end).contains(t);

    let truth: Vec<Vec<Tick>> = starts_from_slices(&set, &slices)
        .into_iter()
        .map(|v| v.into_iter().filter(in_window).collect())
        .collect();
    let mut inferred = vec![Vec::new(); set.len()];
    for r in &rows {
        let i = set
            .index_of(r.task_id)
            .ok_or_else(|| Failure::Usage(format!("reconstruction names unknown task {}", r.task_id)))?;
        if in_window(&r.start) {
            inferred[i].push(r.start);
        }
    }
    for v in &mut inferred {
        v.sort_unstable();
    }
    let report = precision_from_starts(&set, &truth, &inferred);
    write_report(&report, ctx.main_output()?)?;
    ctx.info(format!(
        "eta_prime {:.6} over [{}, {end})",
        report.eta_prime, a.window_start
    ));
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> CliResult<()> {
    let variation = a.variation.model();
    let mut cfg = match a.kind {
        SweepKind::Utilization => SweepConfig::utilization(variation, ctx.seed),
        SweepKind::Variation => {
            let models: Vec<VariationModel> = a
                .models
                .iter()
                .map(|&f| {
                    if f >= 1.0 {
                        VariationModel::none()
                    } else {
                        VariationModel::truncated_normal(f)
                    }
                })
                .collect();
            SweepConfig::variation(&models, ctx.seed)
        }
        SweepKind::TaskCount => SweepConfig::task_count(&a.counts, variation, ctx.seed),
        SweepKind::Observation => SweepConfig::observation(&a.fractions, variation, ctx.seed),
    };
    cfg.sets_per_bin = a.sets;
    cfg.task_counts = a.counts.clone();
    cfg.timing = a.timing;
    if a.sequential {
        cfg.exec = Execution::Sequential;
    }
    let result = scheduleak::harness::run_sweep(&cfg)?;
    result.write_rows(ctx.main_output()?)?;
    if let Some(p) = &a.aggregates {
        result.write_aggregates(create(p)?)?;
    }
    for agg in result.aggregates.iter().filter(|g| g.metric == "eta_prime") {
        ctx.info(format!(
            "{:>12}  n={:<3} mean={:.4} sd={:.4} median={:.4}",
            agg.bin, agg.n, agg.mean, agg.sd, agg.median
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Gen(a) => cmd_gen(&ctx, a),
        Command::Sim(a) => cmd_sim(&ctx, a),
        Command::Attack(a) => cmd_attack(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
