use fleetmerge::lqg::LinearPolicy;
use fleetmerge::nn::{Activation, Arch, NetworkParams};
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
method = "fleet_merge"
seed = 3

[task]
components = 2
obs_dim = 3
act_dim = 2
hidden_dim = 4
horizon = 5
trajectories_per_component = 10

[heterogeneity]
agents = 3
alpha = 1.0
samples_per_agent = 6

[train]
epochs = 2
lr = 0.01
batch_size = 2

[merge]
epochs = 2
inner_steps = 3
tau = 1.0
lr = 0.5
batch_size = 2
barrier_grid = 3

[protocol]
kind = "iterative"
merge_every = 1
participation_fraction = 0.7
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fleetmerge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn help_lists_every_subcommand() {
    let text = ok(&["--help"]);
    for cmd in ["gen-data", "train", "merge", "barrier", "fedsim", "lqg", "check-invariance"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
    let lqg = ok(&["lqg", "--help"]);
    for cmd in ["expert", "train", "merge", "eval"] {
        assert!(lqg.contains(cmd), "missing lqg {cmd}");
    }
}

#[test]
fn malformed_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\n[train]\nepochs = \"many\"\n").unwrap();
    let out = run(&["fedsim", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    std::fs::write(&cfg, "[train]\nepoch = 3\n").unwrap();
    let out = run(&["fedsim", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

#[test]
fn naive_merge_is_entrywise_mean() {
    let dir = tempfile::tempdir().unwrap();
    let a = NetworkParams::init(Arch::ElmanRnn, &[3, 5, 2], Activation::Tanh, 1).unwrap();
    let b = NetworkParams::init(Arch::ElmanRnn, &[3, 5, 2], Activation::Tanh, 2).unwrap();
    let (pa, pb, po) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("m.json"));
    a.save(&pa).unwrap();
    b.save(&pb).unwrap();
    ok(&["merge", "--method", "naive", s(&pa), s(&pb), "--out", s(&po)]);
    let merged = NetworkParams::load(&po).unwrap();
    for ((m, x), y) in merged.to_flat().iter().zip(a.to_flat()).zip(b.to_flat()) {
        assert!((m - 0.5 * (x + y)).abs() < 1e-15);
    }
}

#[test]
fn check_invariance_reports_tiny_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let net = NetworkParams::init(Arch::ElmanRnn, &[4, 8, 6, 3], Activation::Tanh, 5).unwrap();
    let (pm, pc) = (dir.path().join("m.json"), dir.path().join("dev.csv"));
    net.save(&pm).unwrap();
    let text = ok(&["check-invariance", "--model", s(&pm), "--seed", "9", "--out", s(&pc)]);
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(summary["permutations"], 100);
    assert!(summary["max_deviation"].as_f64().unwrap() < 1e-9);
    let csv = std::fs::read_to_string(&pc).unwrap();
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn fedsim_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let (o1, o2) = (dir.path().join("r1"), dir.path().join("r2"));
    ok(&["fedsim", "--config", s(&cfg), "--out", s(&o1)]);
    ok(&["fedsim", "--config", s(&cfg), "--out", s(&o2)]);
    for f in ["results.csv", "fleet_log.csv", "summary.json"] {
        let (x, y) = (std::fs::read(o1.join(f)).unwrap(), std::fs::read(o2.join(f)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let o3 = dir.path().join("r3");
    ok(&["fedsim", "--config", s(&cfg), "--seed", "4", "--out", s(&o3)]);
    assert_ne!(std::fs::read(o1.join("results.csv")).unwrap(), std::fs::read(o3.join("results.csv")).unwrap());
}

#[test]
fn data_train_merge_barrier_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("c.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let data = d.join("data");
    ok(&["gen-data", "--config", s(&cfg), "--out", s(&data)]);
    let partition = std::fs::read_to_string(data.join("partition.csv")).unwrap();
    assert!(partition.starts_with("agent,component,weight,trajectories"));
    assert_eq!(partition.lines().count(), 1 + 3 * 2);

    let mut ckpts = Vec::new();
    for i in 0..2 {
        let ck = d.join(format!("m{i}.json"));
        let log = d.join(format!("m{i}.csv"));
        let agent = data.join(format!("agent_{i}.json"));
        let seed = i.to_string();
        ok(&["train", "--config", s(&cfg), "--seed", &seed, "--data", s(&agent), "--out", s(&ck), "--log", s(&log)]);
        assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);
        ckpts.push(ck);
    }
    let merged = d.join("fleet.json");
    let flog = d.join("fleet.csv");
    ok(&[
        "merge", "--config", s(&cfg), "--method", "fleet", s(&ckpts[0]), s(&ckpts[1]),
        "--data", s(&data.join("agent_0.json")), s(&data.join("agent_1.json")),
        "--out", s(&merged), "--log", s(&flog),
    ]);
    NetworkParams::load(&merged).unwrap().validate().unwrap();
    assert!(std::fs::read_to_string(&flog).unwrap().starts_with("epoch,agent_id"));

    let grid = d.join("grid.csv");
    let text = ok(&[
        "barrier", "--a", s(&ckpts[0]), "--b", s(&ckpts[1]), "--data", s(&data.join("test_0.json")),
        "--grid", "5", "--align", "--out", s(&grid),
    ]);
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(summary["barrier"].as_f64().unwrap().is_finite());
    assert_eq!(std::fs::read_to_string(&grid).unwrap().lines().count(), 6);

    let out = run(&["merge", "--method", "fleet", s(&ckpts[0]), s(&ckpts[1]), "--out", s(&merged)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn lqg_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("lqg.toml");
    std::fs::write(
        &cfg,
        "state_dim = 3\nact_dim = 2\nobs_dim = 6\nspectral_radius = 0.9\nhorizon = 20\ntrajectories = 5\n[dynamic]\nlatent_dim = 3\niters = 50\nlr = 1e-4\n",
    )
    .unwrap();
    let ex = d.join("ex");
    ok(&["lqg", "expert", "--config", s(&cfg), "--out", s(&ex)]);
    for f in ["system.json", "expert.json", "data.json", "costs.csv"] {
        assert!(ex.join(f).exists(), "{f}");
    }

    let (st, dy1, dy2) = (d.join("static.json"), d.join("dyn1.json"), d.join("dyn2.json"));
    let data = ex.join("data.json");
    ok(&["lqg", "train", "--config", s(&cfg), "--kind", "static", "--data", s(&data), "--out", s(&st)]);
    assert_eq!(LinearPolicy::load(&st).unwrap().latent_dim(), 6);
    let log = d.join("loss.csv");
    ok(&["lqg", "train", "--config", s(&cfg), "--data", s(&data), "--out", s(&dy1), "--log", s(&log)]);
    ok(&["lqg", "train", "--config", s(&cfg), "--seed", "7", "--data", s(&data), "--out", s(&dy2)]);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 51);

    for method in ["perm", "invertible", "average"] {
        let m = d.join(format!("{method}.json"));
        let mut args = vec!["lqg", "merge", "--method", method, s(&dy1), s(&dy2), "--out", s(&m)];
        let rounds = d.join(format!("{method}.csv"));
        if method != "average" {
            args.extend(["--steps", "100", "--log", s(&rounds)]);
        }
        ok(&args);
        assert_eq!(LinearPolicy::load(&m).unwrap().latent_dim(), 3);
        if method != "average" {
            assert!(std::fs::read_to_string(&rounds).unwrap().starts_with("round,objective,witness_0,witness_1"));
        }
    }

    let eval = d.join("eval.csv");
    let text = ok(&[
        "lqg", "eval", "--config", s(&cfg), "--system", s(&ex.join("system.json")), "--policy", s(&ex.join("expert.json")),
        "--expert", s(&ex.join("expert.json")), "--out", s(&eval),
    ]);
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(summary["closed_loop_gap"].as_f64().unwrap(), 0.0);
    assert_eq!(summary["stabilizing"].as_f64().unwrap(), 1.0);
    assert_eq!(summary["cost"], summary["expert_cost"]);
}
