use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_bayesfn");

const SAMPLE_PRIOR: &str = r#"
experiment = "sample-prior"
seed = 11

[sample-prior]
n = 4
samples = 10

[sample-prior.prior]
kind = "gaussian"
s = 2.0
"#;

fn bayesfn(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("BAYESFN_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn sample_prior_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SAMPLE_PRIOR);
    let out = bayesfn(&["run", &cfg, "--output-dir", "out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("out/samples.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "sample-prior");
    assert_eq!(manifest["seed"], 11);

    let bin = std::fs::read(tmp.path().join("out/samples.bin")).unwrap();
    assert_eq!(u64::from_le_bytes(bin[0..8].try_into().unwrap()), 4);
    assert_eq!(u64::from_le_bytes(bin[8..16].try_into().unwrap()), 10);
    assert_eq!(bin.len(), 16 + 8 * 40);
    let first = f64::from_le_bytes(bin[16..24].try_into().unwrap());
    let from_csv: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
    assert_eq!(first, from_csv);
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SAMPLE_PRIOR);
    assert!(bayesfn(&["run", &cfg, "--output-dir", "a"], tmp.path()).status.success());
    assert!(bayesfn(&["run", &cfg, "--output-dir", "b"], tmp.path()).status.success());
    let a = std::fs::read(tmp.path().join("a/samples.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b/samples.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn a_manifest_reproduces_its_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SAMPLE_PRIOR);
    assert!(bayesfn(&["run", &cfg, "--output-dir", "a"], tmp.path()).status.success());
    let out = bayesfn(&["run", "a/manifest.json", "--output-dir", "b"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(tmp.path().join("a/samples.csv")).unwrap(),
        std::fs::read(tmp.path().join("b/samples.csv")).unwrap()
    );
}

#[test]
fn unknown_key_is_a_config_error_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SAMPLE_PRIOR.replace("samples = 10", "samples = 10\nsamplez = 3");
    let cfg = write(tmp.path(), "c.toml", &body);
    let out = bayesfn(&["run", &cfg, "--output-dir", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("samplez"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn a_block_for_another_experiment_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{SAMPLE_PRIOR}\n[fernique]\ndraws = 10\ncases = []\n");
    let cfg = write(tmp.path(), "c.toml", &body);
    assert_eq!(bayesfn(&["run", &cfg], tmp.path()).status.code(), Some(2));
}

#[test]
fn invalid_parameters_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
experiment = "posterior-sample"
seed = 1
[posterior-sample]
n = 2
sampler = "pcn"
step_beta = 1.5
iters = 100
[posterior-sample.prior]
kind = "gaussian"
s = 2.0
[posterior-sample.potential]
kind = "zero"
"#;
    let cfg = write(tmp.path(), "c.toml", body);
    let out = bayesfn(&["run", &cfg, "--output-dir", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn output_dir_defaults_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SAMPLE_PRIOR);
    let out = Command::new(BIN)
        .args(["run", &cfg])
        .current_dir(tmp.path())
        .env("BAYESFN_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from-env/samples.csv").exists());
}

#[test]
fn trajectory_dump_has_a_times_header() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
experiment = "spde-invariance"
seed = 3
[spde-invariance]
replicas = 200
checkpoints = 3
trajectory = true
[spde-invariance.spde]
n = 2
n_rep = 3
dt = 0.1
horizon = 1.0
[spde-invariance.prior]
kind = "gaussian"
s = 2.0
[spde-invariance.potential]
kind = "zero"
"#;
    let cfg = write(tmp.path(), "c.toml", body);
    let out = bayesfn(&["run", &cfg, "--output-dir", "out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bin = std::fs::read(tmp.path().join("out/trajectory.bin")).unwrap();
    let n = u64::from_le_bytes(bin[0..8].try_into().unwrap()) as usize;
    let k = u64::from_le_bytes(bin[8..16].try_into().unwrap()) as usize;
    assert_eq!(n, 3);
    assert_eq!(k, 11);
    assert_eq!(bin.len(), 16 + 8 * k + 8 * k * n);
    let t_last = f64::from_le_bytes(bin[16 + 8 * (k - 1)..16 + 8 * k].try_into().unwrap());
    assert!((t_last - 1.0).abs() < 1e-12);
}

#[test]
fn schema_lists_every_experiment() {
    let out = bayesfn(&["schema"], Path::new("."));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "sample-prior",
        "forward-demo",
        "posterior-sample",
        "gap-scaling",
        "hellinger-wellposedness",
        "posterior-approximation",
        "spde-invariance",
        "kl-convergence",
        "fernique",
    ] {
        assert!(text.contains(&format!("experiment = \"{name}\"")), "{name}");
    }
}

#[test]
fn verify_rejects_unknown_suites() {
    let out = bayesfn(&["verify", "everything"], Path::new("."));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_samplers_with_tiny_chains_fails_with_detail() {
    let out = bayesfn(&["verify", "samplers", "--iters", "50"], Path::new("."));
    assert_eq!(out.status.code(), Some(5));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("FAIL criterion"), "{text}");
    assert!(text.contains("required:"), "{text}");
}

#[test]
fn verify_spde_passes() {
    let out = bayesfn(&["verify", "spde"], Path::new("."));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert_eq!(text.matches("PASS criterion").count(), 2);
}
