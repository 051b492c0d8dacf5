use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn connsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_connsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn column(table: &str, idx: usize) -> Vec<String> {
    table
        .lines()
        .skip(1)
        .filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit()))
        .map(|l| l.split_whitespace().nth(idx).unwrap().to_string())
        .collect()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

const RUN_HEADER: &str = "run_id,run_seed,n_agents,connectivity,content_bias,coordination_bias,memory,mutation_rate,quality_owner,round,entropy,entropy_norm,adaptiveness,delta_adaptiveness,converged_flag";
const SUMMARY_HEADER: &str = "point_index,n_agents,connectivity,content_bias,coordination_bias,memory,mutation_rate,round,metric,mean,sd,ci95,n,censored_n";

#[test]
fn simulate_egocentric_fixed_point() {
    let o = connsim(&[
        "simulate",
        "--agents",
        "8",
        "--connectivity",
        "early",
        "--c",
        "0",
        "--b",
        "0",
        "--mu",
        "0",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&stdout(&o), 1), vec!["3.000"; 7]);
}

#[test]
fn simulate_forced_spread() {
    let o = connsim(&[
        "simulate",
        "--agents",
        "8",
        "--connectivity",
        "early",
        "--b",
        "1",
        "--c",
        "0.5",
        "--mu",
        "0",
        "--quality-owner",
        "1",
        "--seed",
        "1",
    ]);
    assert!(o.status.success());
    assert_eq!(column(&stdout(&o), 2), ["0.125", "0.250", "0.500", "1.000", "1.000", "1.000", "1.000"]);
    assert!(stdout(&o).contains("converged at round 4"));
}

#[test]
fn simulate_writes_run_records() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs.csv");
    let o = connsim(&[
        "simulate",
        "--connectivity",
        "late",
        "--b",
        "0.6",
        "--memory",
        "3",
        "--runs",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), RUN_HEADER);
    assert_eq!(text.lines().count(), 1 + 5 * 7);
    assert!(text.lines().nth(1).unwrap().contains(",8,late,0.59999999999999998,0.5,3,0.02,"));
}

#[test]
fn simulate_until_convergence_and_fixed_rounds() {
    let o = connsim(&["simulate", "--b", "1", "--mu", "0", "--until-convergence"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("converged at round"));
    let o = connsim(&["simulate", "--rounds", "20"]);
    assert_eq!(column(&stdout(&o), 0).len(), 20);
    assert_eq!(connsim(&["simulate", "--rounds", "3", "--until-convergence", "50"]).status.code(), Some(2));
}

#[test]
fn simulate_rejects_bad_values() {
    let o = connsim(&["simulate", "--c", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--c"));
    assert!(stderr(&o).contains("coordination bias must lie in [0,1]"));
    for args in [
        &["simulate", "--b", "-0.1"][..],
        &["simulate", "--mu", "2"],
        &["simulate", "--memory", "0"],
        &["simulate", "--agents", "12"],
        &["simulate", "--agents", "16", "--connectivity", "mid"],
        &["simulate", "--connectivity", "custom"],
        &["simulate", "--quality-owner", "9"],
        &["simulate", "--runs", "0"],
        &["simulate", "--frobnicate"],
    ] {
        assert_eq!(connsim(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn help_lists_every_flag() {
    let help = stdout(&connsim(&["simulate", "--help"]));
    for flag in [
        "--agents",
        "--connectivity",
        "--schedule",
        "--c",
        "--b",
        "--memory",
        "--mu",
        "--seed",
        "--rounds",
        "--until-convergence",
        "--runs",
        "--quality-owner",
        "--out",
        "--threads",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
    let help = stdout(&connsim(&["sweep", "--help"]));
    for flag in ["--threads", "--resume", "--max-points"] {
        assert!(help.contains(flag), "{flag}");
    }
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let out = dir.join("out");
    let body = format!(
        r#"{{
            "coordination_bias_levels": [0.5],
            "content_bias_levels": [0.0, 1.0],
            "memory_levels": [1, "inf"],
            "replicates": 20,
            "output_dir": {:?}{extra}
        }}"#,
        out.to_str().unwrap()
    );
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn sweep_writes_files_and_resumes_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let o = connsim(&["sweep", cfg.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("completed 12 points"));
    let out = tmp.path().join("out");
    assert_eq!(first_line(&out.join("runs.csv")), RUN_HEADER);
    assert_eq!(first_line(&out.join("summary.csv")), SUMMARY_HEADER);
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 1 + 12 * 28);
    assert_eq!(fs::read_to_string(out.join("convergence.csv")).unwrap().lines().count(), 1 + 12);
    let full: Vec<Vec<u8>> =
        ["runs.csv", "summary.csv", "convergence.csv"].iter().map(|f| fs::read(out.join(f)).unwrap()).collect();

    let o = connsim(&["sweep", cfg.to_str().unwrap(), "--max-points", "5", "--threads", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("--resume"));
    let o = connsim(&["sweep", cfg.to_str().unwrap(), "--resume", "--threads", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resumed: Vec<Vec<u8>> =
        ["runs.csv", "summary.csv", "convergence.csv"].iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(full, resumed);
}

#[test]
fn sweep_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"content_bias_levels": []}"#).unwrap();
    assert_eq!(connsim(&["sweep", bad.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&bad, r#"{"replicatez": 3}"#).unwrap();
    assert_eq!(connsim(&["sweep", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = tmp.path().join("missing.json");
    assert_eq!(connsim(&["sweep", missing.to_str().unwrap()]).status.code(), Some(1));

    let cfg = write_config(tmp.path(), "");
    assert_eq!(connsim(&["sweep", cfg.to_str().unwrap(), "--resume"]).status.code(), Some(1));
}

#[test]
fn schedule_commands() {
    let o = connsim(&["schedule", "reach", "--kind", "early", "--agents", "8", "--source", "1"]);
    assert_eq!(stdout(&o), "2 4 8 8 8 8 8\n");
    let o = connsim(&["schedule", "reach", "--kind", "late", "--agents", "8", "--source", "5"]);
    assert_eq!(stdout(&o), "2 4 4 8 8 8 8\n");
    assert_eq!(connsim(&["schedule", "generate", "--kind", "mid", "--agents", "16"]).status.code(), Some(2));
    assert_eq!(connsim(&["schedule", "generate", "--kind", "early", "--agents", "12"]).status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    for name in ["late16.sched", "late16.json"] {
        let path = tmp.path().join(name);
        let o = connsim(&["schedule", "generate", "--kind", "late", "--agents", "16", "--out", path.to_str().unwrap()]);
        assert!(o.status.success());
        let o = connsim(&["schedule", "validate", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stdout(&o));
        assert!(stdout(&o).contains("16 agents, 15 rounds"));
    }
    assert!(fs::read_to_string(tmp.path().join("late16.json")).unwrap().starts_with('{'));

    let custom = tmp.path().join("late16.sched");
    let o = connsim(&["simulate", "--agents", "16", "--schedule", custom.to_str().unwrap(), "--runs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&stdout(&o), 0).len(), 15);

    let bad = tmp.path().join("bad.sched");
    fs::write(&bad, "agents=4\n1-2 3-4\n1-2 3-4\n1-3 2-4\n").unwrap();
    let o = connsim(&["schedule", "validate", bad.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("RepeatedPair"));
    fs::write(&bad, "agents=4\n1-2 3-x\n").unwrap();
    let o = connsim(&["schedule", "validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn plot_is_deterministic_and_marks_bursts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("config.json");
    let out = tmp.path().join("out");
    fs::write(
        &cfg,
        format!(
            r#"{{"coordination_bias_levels": [0.5], "content_bias_levels": [0.0, 0.8], "memory_levels": ["inf"],
                "replicates": 300, "write_runs": false, "output_dir": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    assert!(connsim(&["sweep", cfg.to_str().unwrap()]).status.success());
    assert!(!out.join("runs.csv").exists());
    let summary = out.join("summary.csv");
    let svg_a = tmp.path().join("a.svg");
    let svg_b = tmp.path().join("b.svg");
    for svg in [&svg_a, &svg_b] {
        let o = connsim(&[
            "plot",
            summary.to_str().unwrap(),
            "--metric",
            "delta_adaptiveness",
            "--out",
            svg.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(&svg_a).unwrap();
    assert_eq!(a, fs::read(&svg_b).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
    assert!(text.matches("class=\"burst\"").count() >= 2);

    let o = connsim(&[
        "plot",
        summary.to_str().unwrap(),
        "--metric",
        "entropy",
        "--facet",
        "memory",
        "--b",
        "0",
        "--out",
        svg_a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let bad = |args: &[&str]| {
        connsim(&[&["plot", summary.to_str().unwrap(), "--out", svg_a.to_str().unwrap()], args].concat()).status.code()
    };
    assert_eq!(bad(&["--metric", "happiness"]), Some(2));
    assert_eq!(bad(&["--metric", "time_to_convergence"]), Some(2));
    assert_eq!(bad(&["--metric", "entropy", "--facet", "colour"]), Some(2));
    assert_eq!(bad(&["--metric", "entropy", "--b", "0.3"]), Some(2));

    let runs_like = tmp.path().join("not_summary.csv");
    fs::write(&runs_like, format!("{RUN_HEADER}\n")).unwrap();
    let o = connsim(&["plot", runs_like.to_str().unwrap(), "--metric", "entropy", "--out", svg_a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = tmp.path().join("missing.csv");
    let o = connsim(&["plot", missing.to_str().unwrap(), "--metric", "entropy", "--out", svg_a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
