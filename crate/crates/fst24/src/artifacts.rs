//! On-disk run outputs.
//!
//! A run directory holds `loss.csv` (`step,loss`), `flips.csv` (`step,r_t`),
//! `report.json` and, when block statistics were collected, `blocks.csv`.
//! Steps are 1-based.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use fst24_core::optim::LambdaReport;
use fst24_core::trainer::{ComparisonReport, EvalMetrics, RunArtifacts, TrainConfig};
use serde::Serialize;

/// Fraction of steps averaged for the reported tail flip rate.
pub const TAIL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: TrainConfig,
    pub eval: EvalMetrics,
    pub final_loss: f64,
    pub tail_flip_rate: Option<f64>,
    pub mask_searches: usize,
}

impl RunSummary {
    pub fn new(run: &RunArtifacts) -> Self {
        RunSummary {
            config: run.config.clone(),
            eval: run.eval,
            final_loss: run.loss.last().copied().unwrap_or(f64::NAN),
            tail_flip_rate: (!run.flips.is_empty()).then(|| run.tail_flip_rate(TAIL_FRACTION)),
            mask_searches: run.mask_searches,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_series(path: &Path, header: [&str; 2], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for (t, v) in values.iter().enumerate() {
        w.serialize((t + 1, v))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_run(dir: &Path, run: &RunArtifacts) -> Result<()> {
    create_dir(dir)?;
    write_series(&dir.join("loss.csv"), ["step", "loss"], &run.loss)?;
    write_series(&dir.join("flips.csv"), ["step", "r_t"], &run.flips)?;
    write_json(&dir.join("report.json"), &RunSummary::new(run))?;
    if !run.blocks.is_empty() {
        let path = dir.join("blocks.csv");
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(["layer", "weight", "block", "flips", "gap"])?;
        for b in &run.blocks {
            w.serialize((b.layer, b.role.name(), b.block, b.flips, b.gap))?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct VariantSummary<'a> {
    variant: &'a str,
    #[serde(flatten)]
    summary: RunSummary,
}

/// One run directory per variant plus `summary.csv` and `report.json`.
pub fn write_comparison(dir: &Path, report: &ComparisonReport, lambda: Option<&LambdaReport>) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["variant", "eval_loss", "final_loss", "tail_flip_rate"])?;
    let mut runs = Vec::new();
    for r in &report.runs {
        write_run(&dir.join(r.variant.name()), &r.artifacts)?;
        let summary = RunSummary::new(&r.artifacts);
        w.serialize((
            r.variant.name(),
            summary.eval.loss,
            summary.final_loss,
            summary.tail_flip_rate,
        ))?;
        runs.push(VariantSummary {
            variant: r.variant.name(),
            summary,
        });
    }
    w.flush()?;
    write_json(
        &dir.join("report.json"),
        &serde_json::json!({ "runs": runs, "lambda_search": lambda }),
    )?;
    if let Some(l) = lambda {
        write_lambda_csv(&dir.join("lambda.csv"), l)?;
    }
    Ok(())
}

/// `lambda,mu,feasible`, one row per candidate.
pub fn write_lambda_csv(path: &Path, report: &LambdaReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["lambda", "mu", "feasible"])?;
    for e in &report.entries {
        w.serialize((e.lambda, e.mu, e.feasible))?;
    }
    w.flush()?;
    Ok(())
}
