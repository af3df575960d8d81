use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
n_nodes = 30
density = 5
replications = 2

[grid]
n_nodes = 20, 30
density = 3, 5
interfaces = 1, 2
p_cover_min = 0.5, 0.9
";

fn meshcast(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshcast"))
        .args(args)
        .current_dir(dir)
        .env_remove("MESHCAST_SEED")
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.conf"), config).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn figures_writes_four_tables() {
    let dir = setup(SMALL);
    let out = meshcast(
        &["figures", "--config", "exp.conf", "--out", "figs"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    for (name, values) in [
        ("fig_nodes.csv", 2),
        ("fig_density.csv", 2),
        ("fig_interfaces.csv", 2),
        ("fig_pcover.csv", 2),
    ] {
        let text = read(&dir.path().join("figs"), name);
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "param,strategy,overhead_mean,overhead_ci,jain_mean,jain_ci,reps"
        );
        assert_eq!(lines.len(), 1 + values * 5, "{name}");
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 7, "{name}: {line}");
        }
    }
    let pcover = read(&dir.path().join("figs"), "fig_pcover.csv");
    assert!(
        pcover.lines().any(|l| l.starts_with("0.5,StaticCommon,1,")),
        "{pcover}"
    );
    // mixed strategies cannot run with one interface: rows kept, metrics empty
    let intf = read(&dir.path().join("figs"), "fig_interfaces.csv");
    assert!(intf.contains("1,MixedCommonAdaptive,,,,,0"));
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn run_writes_a_summary_row() {
    let dir = setup(SMALL);
    let out = meshcast(
        &[
            "run",
            "--config",
            "exp.conf",
            "--set",
            "strategy=DynamicAdaptive",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read(&dir.path().join("o"), "run.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "strategy,overhead_mean,overhead_ci,jain_mean,jain_ci,reps"
    );
    assert!(lines[1].starts_with("DynamicAdaptive,"));
    assert!(lines[1].ends_with(",2"));
}

#[test]
fn sweep_uses_given_values() {
    let dir = setup(SMALL);
    let out = meshcast(
        &[
            "sweep",
            "--config",
            "exp.conf",
            "--param",
            "density",
            "--values",
            "3,4,5",
            "--set",
            "strategies=StaticCommon,StaticPseudoRandom",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read(dir.path(), "sweep_density.csv");
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    assert!(text.lines().nth(1).unwrap().starts_with("3,StaticCommon,"));
}

#[test]
fn seed_precedence() {
    let dir = setup(SMALL);
    let run = |extra: &[&str], env: Option<&str>, out_dir: &str| -> String {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_meshcast"));
        cmd.args(["run", "--config", "exp.conf", "--out", out_dir])
            .args(["--set", "strategy=StaticPseudoRandom"])
            .args(extra)
            .current_dir(dir.path())
            .env_remove("MESHCAST_SEED");
        if let Some(v) = env {
            cmd.env("MESHCAST_SEED", v);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        read(&dir.path().join(out_dir), "run.csv")
    };
    let seed5 = run(&["--seed", "5"], None, "a");
    let seed6 = run(&["--seed", "6"], None, "b");
    assert_ne!(seed5, seed6);
    // flag beats config, config beats environment, environment beats default
    assert_eq!(
        run(&["--seed", "5", "--set", "base_seed=6"], None, "c"),
        seed5
    );
    assert_eq!(run(&["--set", "base_seed=5"], Some("6"), "d"), seed5);
    assert_eq!(run(&[], Some("5"), "e"), seed5);
    assert_eq!(run(&[], None, "f"), run(&["--seed", "1"], None, "g"));
}

#[test]
fn dump_topology_files() {
    let dir = setup(SMALL);
    let out = meshcast(
        &[
            "dump-topology",
            "--config",
            "exp.conf",
            "--set",
            "strategy=MixedPseudoRandomAdaptive",
            "--out",
            "d",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let d = dir.path().join("d");
    assert_eq!(read(&d, "nodes.csv").lines().count(), 31);
    assert_eq!(read(&d, "nodes.csv").lines().next(), Some("node_id,x,y"));
    assert_eq!(
        read(&d, "links.csv").lines().next(),
        Some("u,v,distance,p_deliv")
    );
    assert_eq!(
        read(&d, "schedule.csv").lines().next(),
        Some("node,interface,channel,t_start,t_stop")
    );
    let plans = read(&d, "plans.csv");
    assert_eq!(
        plans.lines().next(),
        Some("sender,tx_index,interface,channel,slot_start,slot_stop")
    );
    assert!(plans.lines().count() > 1);
}

#[test]
fn configuration_errors_exit_1() {
    let dir = setup("n_nodes = 50\np_cover_min = 1.2\n");
    let out = meshcast(&["run", "--config", "exp.conf"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(
        msg.contains("line 2") && msg.contains("p_cover_min"),
        "{msg}"
    );

    let dir = setup("colour = blue\n");
    let out = meshcast(&["run", "--config", "exp.conf"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("colour"));

    let dir = setup(SMALL);
    let out = meshcast(
        &["run", "--config", "exp.conf", "--set", "nope=1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let out = meshcast(&["run"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = meshcast(
        &[
            "sweep", "--config", "exp.conf", "--param", "speed", "--values", "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let out = meshcast(
        &[
            "run",
            "--config",
            "exp.conf",
            "--set",
            "strategy=MixedCommonAdaptive",
            "--set",
            "interfaces=1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let out = meshcast(&["bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    // nodes almost never linked: no replication has a broadcast to measure
    let dir = setup("n_nodes = 2\ndensity = 0.0001\nreplications = 2\n");
    let out = meshcast(&["run", "--config", "exp.conf"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn io_errors_exit_3() {
    let dir = setup(SMALL);
    let out = meshcast(&["run", "--config", "missing.conf"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let out = meshcast(
        &["figures", "--config", "exp.conf", "--out", "blocker"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
