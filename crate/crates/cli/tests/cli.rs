use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[scheme]
d = 1
N = 32
T = 0.25
n = 16
m = 4
eta = 1e-3
ell = 10.0

[initial]
kind = "cosines"
params = { modes = [[1], [3]], amplitudes = [0.6, 0.2] }

[sampling]
count = 8

[noise]
seed = 3
"#;

fn macf(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macf"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .expect("spawn macf")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn verdicts(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| l.starts_with("VERDICT "))
        .map(str::to_owned)
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn missing_key_names_it_and_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", &SMALL.replace("N = 32\n", ""));
    let out = macf(&["simulate"], &cfg, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scheme.N"), "{err}");
}

#[test]
fn unknown_key_and_bad_values_exit_2() {
    let tmp = TempDir::new().unwrap();
    for (body, key) in [
        (SMALL.replace("eta = 1e-3", "eta = 1e-3\nbogus = 1"), "bogus"),
        (SMALL.replace("N = 32", "N = 31"), "scheme.N"),
        (SMALL.replace("ell = 10.0", "ell = 0.5"), "scheme.ell"),
        (SMALL.replace("n = 16", "n = \"sixteen\""), "scheme.n"),
    ] {
        let cfg = write_config(&tmp, "c.toml", &body);
        let out = macf(&["simulate"], &cfg, &tmp.path().join("out"));
        assert_eq!(out.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "expected {key} in {err}");
    }
}

#[test]
fn simulate_writes_one_record_per_sample_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(macf(&["simulate"], &cfg, &a).status.code(), Some(0));
    assert_eq!(macf(&["simulate"], &cfg, &b).status.code(), Some(0));

    let traj = std::fs::read_to_string(a.join("trajectory.ndjson")).unwrap();
    let lines: Vec<_> = traj.lines().collect();
    assert_eq!(lines.len(), 9);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["t"], 0.0);
    let last: serde_json::Value = serde_json::from_str(lines[8]).unwrap();
    assert_eq!(last["t"], 0.25);

    assert_eq!(traj.as_bytes(), std::fs::read(b.join("trajectory.ndjson")).unwrap());
    assert_eq!(std::fs::read(a.join("final.ckpt")).unwrap(), std::fs::read(b.join("final.ckpt")).unwrap());

    let m = manifest(&a);
    assert_eq!(m["status"], "completed");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["seeds"]["noise_seed"], 3);
    assert_eq!(m["timings"]["steps"], 64);
}

#[test]
fn seed_override_changes_the_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(macf(&["simulate"], &cfg, &a).status.code(), Some(0));
    assert_eq!(macf(&["simulate", "--seed", "4"], &cfg, &b).status.code(), Some(0));
    assert_ne!(
        std::fs::read(a.join("trajectory.ndjson")).unwrap(),
        std::fs::read(b.join("trajectory.ndjson")).unwrap()
    );
    assert_eq!(manifest(&b)["seeds"]["noise_seed"], 4);
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(macf(&["simulate"], &cfg, &a).status.code(), Some(0));
    let out = macf(&["simulate"], &a.join("manifest.json"), &b);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(a.join("trajectory.ndjson")).unwrap(),
        std::fs::read(b.join("trajectory.ndjson")).unwrap()
    );
    assert_eq!(manifest(&a)["config"], manifest(&b)["config"]);
}

#[test]
fn checkpoint_restart_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", SMALL);
    let a = tmp.path().join("a");
    assert_eq!(macf(&["simulate"], &cfg, &a).status.code(), Some(0));
    let ckpt = a.join("final.ckpt");
    let body = SMALL.replace(
        "kind = \"cosines\"\nparams = { modes = [[1], [3]], amplitudes = [0.6, 0.2] }",
        &format!("kind = \"checkpoint\"\ncheckpoint_path = {:?}", ckpt.to_str().unwrap()),
    );
    let cfg = write_config(&tmp, "restart.toml", &body);
    let b = tmp.path().join("b");
    let out = macf(&["simulate"], &cfg, &b);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(b.join("trajectory.ndjson")).unwrap();
    let first: serde_json::Value = serde_json::from_str(traj.lines().next().unwrap()).unwrap();
    let prev = std::fs::read_to_string(a.join("trajectory.ndjson")).unwrap();
    let last: serde_json::Value = serde_json::from_str(prev.lines().last().unwrap()).unwrap();
    for key in ["F", "h2"] {
        assert!(first[key].is_number(), "{first}");
        assert_eq!(first[key], last[key]);
    }
}

#[test]
fn blow_up_exits_3() {
    let tmp = TempDir::new().unwrap();
    let body = SMALL
        .replace("ell = 10.0", "ell = 2.0")
        .replace("eta = 1e-3", "eta = 0.0")
        .replace(
            "kind = \"cosines\"\nparams = { modes = [[1], [3]], amplitudes = [0.6, 0.2] }",
            "kind = \"constant\"\nparams = { value = 30.0 }",
        );
    let cfg = write_config(&tmp, "c.toml", &body);
    let out = tmp.path().join("out");
    let res = macf(&["simulate"], &cfg, &out);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert_eq!(m["exit_code"], 3);
}

#[test]
fn check_model_passes_for_the_default_model() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{SMALL}\n[model.assumptions]\nsamples = 2000\n");
    let cfg = write_config(&tmp, "c.toml", &body);
    let out = tmp.path().join("out");
    let res = macf(&["check-model"], &cfg, &out);
    assert_eq!(res.status.code(), Some(0));
    let v = verdicts(&res);
    assert_eq!(v.len(), 7, "{v:?}");
    for line in &v {
        let parts: Vec<_> = line.split(' ').collect();
        assert_eq!(parts.len(), 4, "{line}");
        assert_eq!(parts[2], "PASS", "{line}");
        let (_, value) = parts[3].split_once('=').unwrap();
        value.parse::<f64>().unwrap();
    }
    assert!(out.join("assumptions.csv").exists());
}

#[test]
fn check_model_rejects_a_vanishing_mobility() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        "{SMALL}\n[model.mobility]\nkind = \"polynomial\"\nparams = [0.0, 0.0, 1.0]\n\n[model.assumptions]\nsamples = 2000\n"
    );
    let cfg = write_config(&tmp, "c.toml", &body);
    let res = macf(&["check-model"], &cfg, &tmp.path().join("out"));
    assert_eq!(res.status.code(), Some(4));
    assert!(verdicts(&res).iter().any(|l| l.contains("FAIL")));
}

#[test]
fn converge_along_ell_is_exact() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{SMALL}\n[converge]\naxis = \"ell\"\nlevels = [5.0, 10.0, 20.0]\n");
    let cfg = write_config(&tmp, "c.toml", &body);
    let out = tmp.path().join("out");
    let res = macf(&["converge"], &cfg, &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v = verdicts(&res);
    assert_eq!(v, vec!["VERDICT converge-ell PASS max_step_ratio=0".to_owned()]);
    assert!(out.join("converge.csv").exists());
}

#[test]
fn converge_along_m_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{SMALL}\n[converge]\naxis = \"m\"\nlevels = [1, 2, 4, 8]\n");
    let cfg = write_config(&tmp, "c.toml", &body);
    let res = macf(&["converge"], &cfg, &tmp.path().join("out"));
    assert_eq!(res.status.code(), Some(0));
    assert!(verdicts(&res)[0].starts_with("VERDICT converge-m PASS"));
}

#[test]
fn mgtest_detects_reused_noise() {
    let tmp = TempDir::new().unwrap();
    let base = r#"
[scheme]
d = 1
N = 16
T = 0.03125
n = 16
m = 4
eta = 1e-3
ell = 10.0

[model.potential]
kind = "zero"

[model.mobility]
kind = "constant"
params = [1.0]

[noise]
seed = 7
"#;
    let pass = format!("{base}\n[mgtest]\nreplicates = 2000\ntest_count = 4\n");
    let fail = format!("{pass}reuse = {{ source = 0, target = 16, len = 16 }}\n");

    let cfg = write_config(&tmp, "pass.toml", &pass);
    let res = macf(&["mgtest"], &cfg, &tmp.path().join("pass"));
    assert_eq!(res.status.code(), Some(0), "{:?}", verdicts(&res));

    let cfg = write_config(&tmp, "fail.toml", &fail);
    let out = tmp.path().join("fail");
    let res = macf(&["mgtest"], &cfg, &out);
    assert_eq!(res.status.code(), Some(4), "{:?}", verdicts(&res));
    assert!(verdicts(&res)[0].starts_with("VERDICT martingale FAIL"));
    assert!(out.join("mgtest.csv").exists());
    let series = std::fs::read_to_string(out.join("mgtest.ndjson")).unwrap();
    let first: serde_json::Value = serde_json::from_str(series.lines().next().unwrap()).unwrap();
    assert_eq!(first["t"], 0.0);
    assert_eq!(first["M"], 0.0);
    assert!(first["QV_pred"].is_number());
    assert_eq!(manifest(&out)["exit_code"], 4);
}

#[test]
fn missing_section_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.toml", SMALL);
    let res = macf(&["couple"], &cfg, &tmp.path().join("out"));
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("couple"));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: toml::Table = toml::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(parsed.contains_key("scheme"), "{}", path.display());
    }
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{SMALL}\n[ensemble]\nreplicates = 8\n");
    let cfg = write_config(&tmp, "c.toml", &body);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let res = Command::new(env!("CARGO_BIN_EXE_macf"))
            .args(["ensemble", "--quiet", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("MACF_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        assert_eq!(manifest(&out)["threads"], threads.parse::<u64>().unwrap());
        outputs.push(std::fs::read(out.join("moments.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn semigroup_writes_the_delta_table() {
    let tmp = TempDir::new().unwrap();
    let body = SMALL.replace("N = 32", "N = 64") + "\n[semigroup]\nprobes = 16\nsteps = 128\n";
    let cfg = write_config(&tmp, "c.toml", &body);
    let out = tmp.path().join("out");
    let res = macf(&["semigroup"], &cfg, &out);
    let v = verdicts(&res);
    assert_eq!(v.len(), 5, "{v:?}");
    let table = std::fs::read_to_string(out.join("semigroup.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "delta,commutator_estimate,m0,max_growth_ratio,operator_error,semigroup_error"
    );
    assert_eq!(lines.count(), 4);
    for name in ["dissipativity", "resolvent-bound", "semigroup-growth", "operator-convergence"] {
        assert!(v.iter().any(|l| l.starts_with(&format!("VERDICT {name} PASS"))), "{v:?}");
    }
}
