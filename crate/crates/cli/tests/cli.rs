use std::path::Path;
use std::process::{Command, Output};

fn run(config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_excursion-lab"))
        .arg("run")
        .arg(config)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn exact_bridge_run_passes_and_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = [\"E1\"]\nseed = 42\nout_dir = \"results\"\necdf = true\n");
    let out = run(&cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("E1 PASS"), "{stdout}");
    let report = std::fs::read_to_string(dir.path().join("results/report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("experiment,statistic,value,threshold,n,reps,seed,pass"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.starts_with("E1,") && r.ends_with(",42,true")), "{report}");
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = [\"E1\"]\n");
    let out = run(&cfg);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("missing field `seed`"), "{stderr}");
}

#[test]
fn unreadable_or_malformed_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&dir.path().join("absent.toml")).status.code(), Some(2));
    let cfg = write_config(dir.path(), "experiment = [\"E1\"\nseed = 1\n");
    assert_eq!(run(&cfg).status.code(), Some(2));
    let cfg = write_config(dir.path(), "experiment = \"E1\"\nseed = 1\n[E1]\nreplications = 1\n");
    let out = run(&cfg);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failing_experiment_exits_1() {
    // Two nearly equal indices cannot show a twofold collapse.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "experiment = \"E8\"\nseed = 3\n[E8]\nn_ladder = [25, 26]\nreplications = 200\n",
    );
    let out = run(&cfg);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let report = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(report.contains("collapse_ratio_top_vs_bottom") && report.contains(",false"));
}

#[test]
fn reruns_are_byte_identical() {
    let body = |out: &str| {
        format!(
            "experiment = [\"E2\", \"E3\", \"E6\"]\nseed = 5\nout_dir = \"{out}\"\nworkers = 2\n\
             [E2]\nreplications = 300\n[E6]\nreplications = 200\nn_ladder = [25, 50]\n"
        )
    };
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let ca = write_config(&a, &body("run"));
    let cb = write_config(&b, &body("run"));
    run(&ca);
    run(&cb);
    let ra = std::fs::read(a.join("run/report.csv")).unwrap();
    let rb = std::fs::read(b.join("run/report.csv")).unwrap();
    assert!(!ra.is_empty());
    assert_eq!(ra, rb);
}

#[test]
fn list_prints_the_catalog() {
    let out = Command::new(env!("CARGO_BIN_EXE_excursion-lab")).arg("list").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.starts_with('E')));
}
