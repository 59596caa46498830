use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{run_task, write_csv, RunRecord};
use super::task::{TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::optimizers::{BasisRefresh, OptimizerConfig, Variant};

pub const DEFAULT_THRESHOLD: f64 = 1e-6;

/// One `[run]` block of a comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub task: TaskSpec,
    pub cfg: OptimizerConfig,
    /// Loss level for `steps_to_threshold`.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub file: String,
    pub task: TaskKind,
    pub optimizer: Variant,
    pub seed: u64,
    pub gamma: f64,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub best_loss: Option<f64>,
    pub threshold: f64,
    /// First logged step whose loss is below `threshold`.
    pub steps_to_threshold: Option<usize>,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub runs: Vec<RunSummary>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn summarize(spec: &RunSpec, file: String, records: &[RunRecord]) -> RunSummary {
    let last = records.last().expect("every run logs step 0");
    let best = records
        .iter()
        .map(|r| r.loss)
        .filter(|l| l.is_finite())
        .fold(f64::INFINITY, f64::min);
    RunSummary {
        file,
        task: spec.task.kind,
        optimizer: spec.cfg.variant,
        seed: spec.task.seed,
        gamma: spec.cfg.gamma,
        steps: spec.task.steps,
        final_loss: finite(last.loss),
        best_loss: finite(best),
        threshold: spec.threshold,
        steps_to_threshold: records.iter().find(|r| r.loss < spec.threshold).map(|r| r.step),
        diverged: last.diverged,
    }
}

/// Runs every spec (one thread each), writes one CSV per run and
/// `summary.json` into `out_dir`, and returns the summary in input order.
pub fn compare(runs: &[RunSpec], out_dir: &Path) -> Result<CompareSummary> {
    if runs.is_empty() {
        return Err(Error::Config("nothing to compare".to_string()));
    }
    std::fs::create_dir_all(out_dir)?;
    let results: Vec<Result<Vec<RunRecord>>> = std::thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .map(|r| s.spawn(move || run_task(&r.task, &r.cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let mut summaries = Vec::with_capacity(runs.len());
    for (i, (spec, records)) in runs.iter().zip(results).enumerate() {
        let records = records?;
        let name = format!(
            "{:03}_{}_{}_seed{}.csv",
            i, spec.task.kind, spec.cfg.variant, spec.task.seed
        );
        write_csv(&out_dir.join(&name), &records, false)?;
        summaries.push(summarize(spec, name, &records));
    }
    let summary = CompareSummary { runs: summaries };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::InvalidInput(format!("summary serialization: {e}")))?;
    std::fs::write(out_dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

/// Every task paired with every configuration.
pub fn compare_grid(
    tasks: &[TaskSpec],
    cfgs: &[OptimizerConfig],
    out_dir: &Path,
) -> Result<CompareSummary> {
    if tasks.is_empty() || cfgs.is_empty() {
        return Err(Error::Config("need at least one task and one config".to_string()));
    }
    let runs: Vec<RunSpec> = tasks
        .iter()
        .flat_map(|t| {
            cfgs.iter().map(move |c| RunSpec {
                task: t.clone(),
                cfg: c.clone(),
                threshold: DEFAULT_THRESHOLD,
            })
        })
        .collect();
    compare(&runs, out_dir)
}

/// Key-value settings shared by the `run` command and config files.
#[derive(Clone, Debug, Default)]
pub struct RunSettings {
    pairs: Vec<(String, String)>,
}

impl RunSettings {
    pub fn set(&mut self, key: &str, value: &str) {
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        self.pairs.push((key, value.trim().to_string()));
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'")))
            })
            .transpose()
    }

    /// Builds the task and optimizer configuration. `task` and `optimizer`
    /// are required; everything else falls back to library defaults
    /// (`steps = 200`, `seed = 0`, `batch = 1`).
    pub fn to_spec(&self) -> Result<RunSpec> {
        const KNOWN: [&str; 19] = [
            "task", "optimizer", "gamma", "beta1", "beta2", "kappa", "power",
            "refresh-interval", "weight-decay", "grafting", "steps", "seed", "batch",
            "dims", "warmup", "epsilon", "threshold", "bias-correction", "basis-refresh",
        ];
        if let Some((k, _)) = self.pairs.iter().find(|(k, _)| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        let kind: TaskKind = self
            .get("task")
            .ok_or_else(|| Error::Config("missing 'task'".to_string()))?
            .parse()?;
        let variant: Variant = self
            .get("optimizer")
            .ok_or_else(|| Error::Config("missing 'optimizer'".to_string()))?
            .parse()?;
        let mut task = TaskSpec::new(
            kind,
            self.parse("seed")?.unwrap_or(0),
            self.parse("steps")?.unwrap_or(200),
        );
        if let Some(d) = self.get("dims") {
            task.dims = d
                .split(|c| c == 'x' || c == ',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad dims '{d}'")))
                })
                .collect::<Result<_>>()?;
        }
        task.batch = self.parse("batch")?.unwrap_or(task.batch);
        task.warmup = self.parse("warmup")?.unwrap_or(0);
        task.validate()?;

        let mut cfg = OptimizerConfig::new(variant);
        macro_rules! apply {
            ($($key:literal => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.parse($key)? { cfg.$field = v; })*
            };
        }
        apply!(
            "gamma" => gamma,
            "beta1" => beta1,
            "beta2" => beta2,
            "kappa" => kappa,
            "power" => power,
            "refresh-interval" => refresh_interval,
            "weight-decay" => weight_decay,
            "grafting" => grafting,
            "epsilon" => epsilon,
            "bias-correction" => bias_correction,
        );
        if let Some(b) = self.get("basis-refresh") {
            cfg.basis_refresh = match b.to_ascii_lowercase().as_str() {
                "eigen" => BasisRefresh::Eigen,
                "qr" => BasisRefresh::Qr,
                _ => return Err(Error::Config(format!("bad basis refresh '{b}'"))),
            };
        }
        cfg.validate()?;
        Ok(RunSpec {
            task,
            cfg,
            threshold: self.parse("threshold")?.unwrap_or(DEFAULT_THRESHOLD),
        })
    }
}

/// Parses a config file: `#` comments, blank lines, and one `[run]` header
/// per run followed by `key = value` lines.
pub fn parse_config(text: &str) -> Result<Vec<RunSpec>> {
    let mut blocks: Vec<RunSettings> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "[run]" {
            blocks.push(RunSettings::default());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        blocks
            .last_mut()
            .ok_or_else(|| Error::Config(format!("line {}: setting outside a [run] block", n + 1)))?
            .set(k, v);
    }
    if blocks.is_empty() {
        return Err(Error::Config("config has no [run] blocks".to_string()));
    }
    blocks.iter().map(RunSettings::to_spec).collect()
}

pub fn compare_config(config: &Path, out_dir: &Path) -> Result<CompareSummary> {
    let text = std::fs::read_to_string(config)?;
    compare(&parse_config(&text)?, out_dir)
}

pub fn csv_path(out_dir: &Path, run: &RunSummary) -> PathBuf {
    out_dir.join(&run.file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_blocks_and_defaults() {
        let text = "# two runs\n[run]\ntask = kron_quadratic\noptimizer = sgd\ngamma = 0.05\n\n\
                    [run]\ntask=kron_quadratic\noptimizer=kl-shampoo\nrefresh_interval = 2\ndims = 4x3\n";
        let runs = parse_config(text).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].cfg.gamma, 0.05);
        assert_eq!(runs[0].task.steps, 200);
        assert_eq!(runs[1].cfg.variant, Variant::KlShampoo);
        assert_eq!(runs[1].cfg.refresh_interval, 2);
        assert_eq!(runs[1].task.dims, vec![4, 3]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(parse_config("").is_err());
        assert!(parse_config("task = sgd").is_err());
        assert!(parse_config("[run]\ntask = kron_quadratic").is_err());
        assert!(parse_config("[run]\ntask = kron_quadratic\noptimizer = sgd\nfoo = 1").is_err());
        assert!(parse_config("[run]\ntask = kron_quadratic\noptimizer = sgd\ngamma = x").is_err());
    }
}
