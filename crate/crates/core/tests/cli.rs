use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klshampoo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn run_writes_csv_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let args = [
        "run", "--task", "kron_quadratic", "--optimizer", "kl_shampoo", "--gamma", "0.05",
        "--beta2", "0.1", "--refresh-interval", "2", "--steps", "25", "--seed", "3",
        "--out", out.to_str().unwrap(),
    ];
    assert_eq!(code(&bin(&args)), 0);
    let first = std::fs::read(&out).unwrap();
    assert_eq!(code(&bin(&args)), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("step,loss,grad_norm,wall_ms,optimizer,seed\n"));
    assert_eq!(text.lines().count(), 27);
}

#[test]
fn run_accepts_every_documented_flag() {
    let o = bin(&[
        "run", "--task", "softmax_classification", "--optimizer", "shampoo", "--gamma", "0.01",
        "--beta1", "0.9", "--beta2", "0.05", "--kappa", "1e-4", "--power", "0.25",
        "--refresh-interval", "5", "--weight-decay", "1e-4", "--grafting", "true", "--steps", "5",
        "--seed", "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 7);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&bin(&[])), 2);
    assert_eq!(code(&bin(&["frobnicate"])), 2);
    assert_eq!(code(&bin(&["run", "--task", "kron_quadratic"])), 2);
    assert_eq!(code(&bin(&["run", "--task", "nope", "--optimizer", "sgd"])), 2);
    assert_eq!(
        code(&bin(&["run", "--task", "kron_quadratic", "--optimizer", "sgd", "--power", "0.3"])),
        2
    );
    assert_eq!(
        code(&bin(&["run", "--task", "kron_quadratic", "--optimizer", "kl_shampoo", "--grafting", "true"])),
        2
    );
    assert_eq!(code(&bin(&["claims", "--tol-profile", "loose"])), 2);
    assert_eq!(code(&bin(&["claims", "--seeds", "0"])), 2);
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no/such/dir/run.csv");
    let o = bin(&[
        "run", "--task", "kron_quadratic", "--optimizer", "sgd", "--steps", "2",
        "--out", missing.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    let cfg = dir.path().join("absent.cfg");
    let o = bin(&["compare", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn strict_claims_fail_with_exit_1_and_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = bin(&["claims", "--tol-profile", "strict", "--seeds", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("dominant residuals"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["profile"], "strict");
    assert_eq!(report["claims"].as_array().unwrap().len(), 13);
}

#[test]
fn compare_writes_csvs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("runs.cfg");
    std::fs::write(
        &cfg,
        "[run]\ntask = kron_quadratic\noptimizer = sgd\ngamma = 0.1\nsteps = 30\nbatch = 0\n\n\
         [run]\ntask = kron_quadratic\noptimizer = kl_shampoo\ngamma = 0.1\nsteps = 30\nbatch = 0\n",
    )
    .unwrap();
    let out = dir.path().join("cmp");
    let o = bin(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Path::new(&out.join("summary.json")).exists());
    let csvs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 2);
}
