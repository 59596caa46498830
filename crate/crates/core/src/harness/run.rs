use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::task::{build_problem, TaskSpec};
use crate::error::{Error, Result};
use crate::optimizers::{init_state, step, OptimizerConfig, ParamState};
use crate::random::seeded_rng;

pub const CSV_HEADER: &str = "step,loss,grad_norm,wall_ms,optimizer,seed";

/// One logged step. Step `0` is the initial point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub step: usize,
    pub loss: f64,
    /// Norm of the exact gradient at the logged point.
    pub grad_norm: f64,
    pub wall_ms: f64,
    pub optimizer: String,
    pub seed: u64,
    /// Set on the last record of a run that produced a non-finite value.
    pub diverged: bool,
}

/// Trains `cfg` on the task and logs every step.
///
/// The stochastic gradients depend only on the task seed, so every
/// optimizer sees the same noise stream. A run that produces a non-finite
/// value stops with a final record flagged `diverged`.
pub fn run_task(t: &TaskSpec, cfg: &OptimizerConfig) -> Result<Vec<RunRecord>> {
    Ok(run_task_detailed(t, cfg)?.records)
}

/// Records plus the final optimizer states and parameters.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub states: Vec<ParamState>,
    pub params: Vec<Vec<f64>>,
}

pub fn run_task_detailed(t: &TaskSpec, cfg: &OptimizerConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let problem = build_problem(t)?;
    let shapes = problem.shapes();
    let mut states: Vec<ParamState> = shapes
        .iter()
        .map(|s| init_state(s, cfg))
        .collect::<Result<_>>()?;
    let mut params = problem.init();
    let mut noise = seeded_rng(t.seed ^ 0x9e37_79b9_7f4a_7c15);
    let start = Instant::now();
    let optimizer = cfg.variant.name().to_string();

    let record = |step: usize, params: &[Vec<f64>], start: &Instant| {
        let loss = problem.loss(params);
        let grad_norm = problem
            .gradient(params, None)
            .iter()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        RunRecord {
            step,
            loss,
            grad_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            optimizer: optimizer.clone(),
            seed: t.seed,
            diverged: !(loss.is_finite() && grad_norm.is_finite()),
        }
    };

    let mut records = vec![record(0, &params, &start)];
    if records[0].diverged {
        return Ok(RunOutcome { records, states, params });
    }
    for k in 1..=t.steps {
        let grads = problem.gradient(&params, Some((&mut noise, t.batch)));
        let mut step_cfg = cfg.clone();
        step_cfg.gamma *= t.warmup_factor(k);
        let mut failed = false;
        for ((st, p), g) in states.iter_mut().zip(params.iter_mut()).zip(&grads) {
            match step(st, p, g, &step_cfg) {
                Ok(()) => {}
                Err(Error::Diverged(_)) | Err(Error::NotPositiveDefinite(_)) => failed = true,
                Err(e) => return Err(e),
            }
            if failed {
                break;
            }
        }
        let mut r = record(k, &params, &start);
        if failed {
            r.diverged = true;
            r.loss = f64::NAN;
        }
        let stop = r.diverged;
        records.push(r);
        if stop {
            break;
        }
    }
    Ok(RunOutcome { records, states, params })
}

/// Renders records as CSV. With `timing` off the `wall_ms` column is
/// written as `0` so identical runs give identical bytes.
pub fn records_to_csv(records: &[RunRecord], timing: bool) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let wall = if timing { r.wall_ms } else { 0.0 };
        let _ = writeln!(
            out,
            "{},{:e},{:e},{},{},{}",
            r.step, r.loss, r.grad_norm, wall, r.optimizer, r.seed
        );
    }
    out
}

pub fn write_csv(path: &Path, records: &[RunRecord], timing: bool) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(records_to_csv(records, timing).as_bytes())?;
    Ok(())
}

/// Parses CSV written by [`records_to_csv`]; `diverged` is inferred from
/// non-finite losses.
pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidInput("missing CSV header".to_string()));
    }
    let bad = |line: &str| Error::InvalidInput(format!("malformed CSV row '{line}'"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let loss = num(f[1])?;
            Ok(RunRecord {
                step: f[0].parse().map_err(|_| bad(line))?,
                loss,
                grad_norm: num(f[2])?,
                wall_ms: num(f[3])?,
                optimizer: f[4].to_string(),
                seed: f[5].parse().map_err(|_| bad(line))?,
                diverged: !loss.is_finite(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::TaskKind;
    use crate::optimizers::Variant;

    #[test]
    fn sgd_with_tiny_step_decreases_exact_loss() {
        let t = TaskSpec::new(TaskKind::KronQuadratic, 4, 50).with_batch(0);
        let cfg = OptimizerConfig::new(Variant::Sgd).with_gamma(1e-3);
        let r = run_task(&t, &cfg).unwrap();
        assert_eq!(r.len(), 51);
        assert!(r.windows(2).all(|w| w[1].loss < w[0].loss));
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let t = TaskSpec::new(TaskKind::SoftmaxClassification, 2, 10);
        let cfg = OptimizerConfig::new(Variant::KlShampoo);
        let a = records_to_csv(&run_task(&t, &cfg).unwrap(), false);
        let b = records_to_csv(&run_task(&t, &cfg).unwrap(), false);
        assert_eq!(a, b);
        let back = parse_csv(&a).unwrap();
        assert_eq!(back.len(), 11);
        assert_eq!(records_to_csv(&back, false), a);
    }

    #[test]
    fn divergence_is_flagged() {
        let t = TaskSpec::new(TaskKind::KronQuadratic, 1, 500).with_batch(0);
        let cfg = OptimizerConfig::new(Variant::Sgd).with_gamma(10.0);
        let r = run_task(&t, &cfg).unwrap();
        assert!(r.last().unwrap().diverged);
        assert!(r.len() < 501);
    }
}
