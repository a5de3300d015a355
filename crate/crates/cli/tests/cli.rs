use std::path::Path;
use std::process::{Command, Output};

fn stcnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stcnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn room_config(dir: &Path, counts: usize, retries: usize, extra: &str) -> String {
    let path = dir.join(format!("room_{counts}_{retries}.toml"));
    let text = format!(
        r#"format_version = 1
output_dir = "out"
[refine]
max_retries = {retries}
[lipschitz]
inner_count = 100
outer_count = 20
seed = 3
[simulation]
per_dim = 3
steps = 20
[verify]
factor = 2
[[class]]
id = "room"
benchmark = "room"
state_counts = [{counts}]
input_counts = [{counts}]
{extra}"#
    );
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn margins_prints_both_conditions() {
    let o = stcnet(&["margins", "--eta", "-956.86", "--beta", "0", "--l1", "8990", "--l2", "4250", "--theta", "0.1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("m1 = -57.8600"), "{text}");
    assert!(text.contains("m2 = -531.8600"), "{text}");

    let o = stcnet(&["margins", "--eta", "-1", "--beta", "0.5", "--l1", "10", "--l2", "10", "--theta", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("m2 = 0.5000"));
}

#[test]
fn margins_with_levels_checks_the_gap() {
    let o = stcnet(&[
        "margins", "--eta", "-5", "--beta", "0", "--l1", "1", "--l2", "1", "--theta", "0.1", "--sigma", "2", "--phi", "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("gap = -1.0000"));
}

#[test]
fn synth_then_verify_and_lipschitz() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = room_config(tmp.path(), 31, 0, "");
    let out = tmp.path().join("run");
    let o = stcnet(&["synth", &cfg, "-o", out.to_str().unwrap(), "--export-lp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict: Certified"));
    for f in ["certificate.json", "report.json", "samples_room.csv", "scp_room.lp", "surface_room.csv", "heatmap_room.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let lp = std::fs::read_to_string(out.join("scp_room.lp")).unwrap();
    assert!(lp.starts_with("\\") || lp.contains("Minimize"), "{lp}");

    let cert = out.join("certificate.json");
    let o = stcnet(&["verify", cert.to_str().unwrap(), "--factor", "2", "--per-dim", "3", "--steps", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("verification: pass"));

    let o = stcnet(&["lipschitz", cert.to_str().unwrap(), "--inner", "50", "--outer", "10"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("room L1 = "));
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = room_config(tmp.path(), 21, 0, "");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(stcnet(&["synth", &cfg, "-o", a.to_str().unwrap()]).status.success());
    assert!(stcnet(&["synth", &cfg, "-o", b.to_str().unwrap()]).status.success());
    let ca = std::fs::read(a.join("certificate.json")).unwrap();
    let cb = std::fs::read(b.join("certificate.json")).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn coarse_grid_without_retries_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = room_config(tmp.path(), 3, 0, "");
    let o = stcnet(&["synth", &cfg, "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("NotCertified"));
}

#[test]
fn bad_configs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = room_config(tmp.path(), 31, 0, "initial = { lower = [10.0], upper = [12.5] }\n");
    let o = stcnet(&["synth", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("overlap"));

    let o = stcnet(&["synth", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cert = tmp.path().join("bogus.json");
    std::fs::write(&cert, "{\"format_version\": 99}").unwrap();
    let o = stcnet(&["verify", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_one_file_per_topology() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = room_config(tmp.path(), 11, 0, "");
    let out = tmp.path().join("sim");
    let o = stcnet(&["simulate", &cfg, "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    for t in ["cascade", "ring", "dense-decay"] {
        let text = std::fs::read_to_string(out.join(format!("trajectories_room_{t}.csv"))).unwrap();
        assert!(text.starts_with("trajectory,step,subsystem,x1\n"));
    }
    let o = stcnet(&["simulate", &cfg, "-o", out.to_str().unwrap(), "--topology", "star"]);
    assert_eq!(o.status.code(), Some(2));
}
