use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EXAMPLE_SET: &str = "# scheduleak-taskset v1\n\
id,period,wcet,acet,offset,priority,gamma,theta\n\
1,5,1,1,0,3,0,0\n\
2,6,2,2,0,2,0,0\n\
3,10,2,2,0,1,0,0\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scheduleak"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn text(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn example_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("set.txt"), EXAMPLE_SET).unwrap();

    let sim = run(
        &[
            "sim",
            "set.txt",
            "--trace-out",
            "trace.csv",
            "--bi-out",
            "bi.csv",
            "--quiet",
        ],
        d,
    );
    assert!(sim.status.success());
    assert_eq!(text(&d.join("bi.csv")), "start,length\n0,8\n10,6\n18,5\n24,3\n");

    let attack = run(
        &[
            "attack",
            "set.txt",
            "--bi",
            "bi.csv",
            "--out",
            "recon.csv",
            "--summary",
            "summary.txt",
            "--dump-histograms",
            "hist.csv",
            "--quiet",
        ],
        d,
    );
    assert!(attack.status.success(), "{}", String::from_utf8_lossy(&attack.stderr));
    let recon = text(&d.join("recon.csv"));
    assert!(recon.starts_with("interval_start,task_id,arrival,start\n0,1,0,0\n0,2,0,1\n0,3,0,3\n"));
    assert!(text(&d.join("summary.txt")).contains("committed=0;0;0"));
    let hist = text(&d.join("hist.csv"));
    assert!(hist.starts_with("task_id,position,count\n"));
    assert_eq!(hist.lines().count(), 1 + 5 + 6 + 10);

    let eval = run(&["eval", "set.txt", "trace.csv", "recon.csv", "--quiet"], d);
    assert!(eval.status.success());
    let report = String::from_utf8(eval.stdout).unwrap();
    assert!(report.starts_with("task_id,sd,precision,u,unmatched\n"));
    assert!(report.ends_with("eta_prime,1.000000\n"));
}

#[test]
fn generated_set_attack_from_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = run(
        &[
            "gen",
            "--seed",
            "3",
            "--n-tasks",
            "5",
            "--acet-frac",
            "0.8",
            "--out",
            "set.txt",
            "--quiet",
        ],
        d,
    );
    assert!(gen.status.success());
    assert!(text(&d.join("set.txt")).starts_with("# scheduleak-taskset v1\n"));

    let args = [
        "attack",
        "set.txt",
        "--from-sim",
        "--variation",
        "normal",
        "--mean-frac",
        "0.8",
        "--observe",
        "0.5",
        "--seed",
        "9",
        "--trace-out",
        "trace.csv",
        "--summary",
        "s.txt",
        "--quiet",
    ];
    let first = run(&args, d);
    assert!(first.status.success());
    let again = run(&args, d);
    assert_eq!(first.stdout, again.stdout);
    let summary = text(&d.join("s.txt"));
    let eta: f64 = summary
        .split("eta_prime_window=")
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&eta));
    assert!(text(&d.join("trace.csv")).starts_with("begin,end,task_id\n"));
}

#[test]
fn sweep_output_is_reproducible_across_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "sweep",
        "--kind",
        "observation",
        "--fractions",
        "0.5,1.0",
        "--sets",
        "2",
        "--seed",
        "4",
        "--quiet",
    ];
    let a = run(&args, d);
    let b = run(&[&args[..], &["--sequential", "--aggregates", "agg.csv"]].concat(), d);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let rows = String::from_utf8(a.stdout).unwrap();
    assert!(rows.starts_with(
        "seed,bin,n_tasks,utilization,variation,obs_fraction,eta_prime,mean_sd,forced,conflicts,runtime_ms"
    ));
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
    let agg = text(&d.join("agg.csv"));
    assert!(agg.starts_with("bin,metric,n,mean,sd,min,median,max\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(&[], d).status.code(), Some(1));
    assert_eq!(run(&["attack", "x.txt"], d).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--sets", "0", "--quiet"], d).status.code(), Some(1));
    assert_eq!(run(&["--help"], d).status.code(), Some(0));
    let infeasible = run(
        &[
            "gen",
            "--n-tasks",
            "12",
            "--util-min",
            "0.001",
            "--util-max",
            "0.002",
            "--quiet",
        ],
        d,
    );
    assert_eq!(infeasible.status.code(), Some(2));
    assert_eq!(run(&["sim", "missing.txt"], d).status.code(), Some(3));
    fs::write(d.join("bad.txt"), "not a task set\n").unwrap();
    assert_eq!(run(&["sim", "bad.txt"], d).status.code(), Some(3));
}
