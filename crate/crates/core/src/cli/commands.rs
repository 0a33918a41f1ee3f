use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::h2norm::{FullOrderOracle, H2Value};
use crate::modalsolve::to_modal;
use crate::model::{write_model, GainVector, SecondOrderSystem};
use crate::pmor::{
    build_surrogate, optimize_adaptive, optimize_full_order, optimize_predetermined,
    OptimizationReport, PmorRun, SamplingMode,
};

/// Whether a command finished with everything converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NonConverged,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).unwrap_or_default();
    s.push('\n');
    s
}

fn check_cap(cfg: &RunConfig, sys: &SecondOrderSystem) -> Result<()> {
    if cfg.oracle.enabled && sys.n() > cfg.oracle.cap {
        return Err(Error::OracleCapExceeded {
            n: sys.n(),
            cap: cfg.oracle.cap,
        });
    }
    Ok(())
}

fn gains(values: &[Vec<f64>]) -> Result<Vec<GainVector>> {
    values.iter().map(|g| GainVector::new(g.clone())).collect()
}

pub fn generate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    let dir =
        cfg.output.dir.as_ref().ok_or_else(|| {
            Error::InvalidInput("generate needs an output directory (--out)".into())
        })?;
    let sys = cfg.build_model()?;
    write_model(&sys, dir)?;
    writeln!(
        out,
        "wrote model with n = {}, {} gains, {} inputs, {} outputs to {}",
        sys.n(),
        sys.num_gains(),
        sys.input_map().ncols(),
        sys.output_map().nrows(),
        dir.display()
    )?;
    Ok(Outcome::Success)
}

/// Run the configured sampling loop on an already built model.
pub fn run_pipeline(cfg: &RunConfig, sys: &SecondOrderSystem) -> Result<PmorRun> {
    let ms = to_modal(sys)?;
    let settings = cfg.pmor_settings();
    match cfg.sampling.mode {
        SamplingMode::Predetermined => {
            optimize_predetermined(&ms, &gains(&cfg.sampling.samples)?, &settings)
        }
        SamplingMode::Adaptive => optimize_adaptive(
            &ms,
            &GainVector::new(cfg.sampling.g0.clone())?,
            &gains(&cfg.sampling.warm_start)?,
            &settings,
        ),
    }
}

/// Build, optimize and optionally evaluate the oracle at the optimum.
pub fn optimize_report(cfg: &RunConfig, keep_timings: bool) -> Result<OptimizationReport> {
    cfg.validate()?;
    let sys = cfg.build_model()?;
    check_cap(cfg, &sys)?;
    let mut report = run_pipeline(cfg, &sys)?.report;
    if cfg.oracle.enabled {
        let oracle = FullOrderOracle::with_cap(&sys, cfg.oracle.cap)?;
        report.full_h2 = Some(
            oracle
                .evaluate(&GainVector::unchecked(report.gains.clone()))?
                .value,
        );
    }
    if !keep_timings {
        report.timings = None;
    }
    Ok(report)
}

pub fn optimize(cfg: &RunConfig, keep_timings: bool, out: &mut dyn Write) -> Result<Outcome> {
    let report = optimize_report(cfg, keep_timings)?;
    let text = to_json(&report);
    if let Some(path) = &cfg.output.json {
        write_text(path, &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(if report.converged {
        Outcome::Success
    } else {
        Outcome::NonConverged
    })
}

/// One damper configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub j: usize,
    pub k: usize,
    pub status: String,
    pub gains: Vec<f64>,
    pub surrogate_h2: Option<f64>,
    pub full_h2: Option<f64>,
    pub oracle_gains: Vec<f64>,
    pub oracle_h2: Option<f64>,
    pub rel_gain_error: Option<f64>,
    pub rel_h2_error: Option<f64>,
    pub reduced_dim: Option<usize>,
    pub reduced_seconds: f64,
    pub oracle_seconds: Option<f64>,
}

pub const SWEEP_HEADER: [&str; 13] = [
    "j",
    "k",
    "status",
    "gains",
    "surrogate_h2",
    "full_h2",
    "oracle_gains",
    "oracle_h2",
    "rel_gain_error",
    "rel_h2_error",
    "reduced_dim",
    "reduced_seconds",
    "oracle_seconds",
];

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

impl SweepRow {
    fn record(&self) -> [String; 13] {
        [
            self.j.to_string(),
            self.k.to_string(),
            self.status.clone(),
            fmt_vec(&self.gains),
            fmt_opt(self.surrogate_h2),
            fmt_opt(self.full_h2),
            fmt_vec(&self.oracle_gains),
            fmt_opt(self.oracle_h2),
            fmt_opt(self.rel_gain_error),
            fmt_opt(self.rel_h2_error),
            self.reduced_dim.map(|d| d.to_string()).unwrap_or_default(),
            fmt_f64(self.reduced_seconds),
            fmt_opt(self.oracle_seconds),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub failed: usize,
    pub nonconverged: usize,
    pub mean_rel_gain_error: Option<f64>,
    pub max_rel_gain_error: Option<f64>,
    pub mean_rel_h2_error: Option<f64>,
    pub max_rel_h2_error: Option<f64>,
    /// Mean of reduced-path time over oracle time.
    pub mean_time_ratio: Option<f64>,
    pub mean_reduced_dim: Option<f64>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sweep_row(cfg: &RunConfig, j: usize, k: usize) -> SweepRow {
    let mut row = SweepRow {
        j,
        k,
        status: String::new(),
        gains: Vec::new(),
        surrogate_h2: None,
        full_h2: None,
        oracle_gains: Vec::new(),
        oracle_h2: None,
        rel_gain_error: None,
        rel_h2_error: None,
        reduced_dim: None,
        reduced_seconds: 0.0,
        oracle_seconds: None,
    };
    let mut cfg = cfg.clone();
    cfg.model.j = j;
    cfg.model.k = k;
    let result = (|| -> Result<()> {
        let sys = cfg.build_model()?;
        let t = Instant::now();
        let run = run_pipeline(&cfg, &sys)?;
        row.reduced_seconds = t.elapsed().as_secs_f64();
        let report = run.report;
        row.status = if report.converged {
            "ok"
        } else {
            "nonconverged"
        }
        .into();
        row.surrogate_h2 = Some(report.surrogate_h2);
        row.reduced_dim = Some(report.reduced_dim);
        row.gains = report.gains;
        if cfg.oracle.enabled {
            let oracle = FullOrderOracle::with_cap(&sys, cfg.oracle.cap)?;
            let full = oracle
                .evaluate(&GainVector::unchecked(row.gains.clone()))?
                .value;
            row.full_h2 = Some(full);
            let t = Instant::now();
            let best = optimize_full_order(
                &sys,
                &cfg.optimizer.x0,
                &cfg.optimizer_settings(),
                cfg.oracle.cap,
            )?;
            row.oracle_seconds = Some(t.elapsed().as_secs_f64());
            let diff: Vec<f64> = row
                .gains
                .iter()
                .zip(&best.gains)
                .map(|(a, b)| a - b)
                .collect();
            row.rel_gain_error = Some(norm2(&diff) / norm2(&best.gains));
            row.rel_h2_error = Some((full - best.h2).abs() / best.h2);
            row.oracle_h2 = Some(best.h2);
            row.oracle_gains = best.gains;
        }
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("sweep row (j = {j}, k = {k}) failed: {e}");
        row.status = format!("error: {e}");
    }
    row
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn max(v: &[f64]) -> Option<f64> {
    v.iter().copied().reduce(f64::max)
}

pub fn summarize(rows: &[SweepRow]) -> SweepSummary {
    let gain_err: Vec<f64> = rows.iter().filter_map(|r| r.rel_gain_error).collect();
    let h2_err: Vec<f64> = rows.iter().filter_map(|r| r.rel_h2_error).collect();
    let ratio: Vec<f64> = rows
        .iter()
        .filter_map(|r| {
            r.oracle_seconds
                .filter(|t| *t > 0.0)
                .map(|t| r.reduced_seconds / t)
        })
        .collect();
    let dims: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.reduced_dim.map(|d| d as f64))
        .collect();
    SweepSummary {
        rows: rows.len(),
        failed: rows
            .iter()
            .filter(|r| r.status.starts_with("error"))
            .count(),
        nonconverged: rows.iter().filter(|r| r.status == "nonconverged").count(),
        mean_rel_gain_error: mean(&gain_err),
        max_rel_gain_error: max(&gain_err),
        mean_rel_h2_error: mean(&h2_err),
        max_rel_h2_error: max(&h2_err),
        mean_time_ratio: mean(&ratio),
        mean_reduced_dim: mean(&dims),
    }
}

pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let grid = cfg.sweep_grid()?;
    if cfg.oracle.enabled {
        let first = {
            let mut c = cfg.clone();
            (c.model.j, c.model.k) = grid[0];
            c.build_model()?
        };
        check_cap(cfg, &first)?;
    }
    Ok(grid
        .par_iter()
        .map(|&(j, k)| sweep_row(cfg, j, k))
        .collect())
}

pub fn write_csv(rows: &[SweepRow], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for row in rows {
        w.write_record(row.record()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    let rows = sweep_rows(cfg)?;
    let summary = summarize(&rows);
    match &cfg.output.csv {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            write_csv(&rows, std::fs::File::create(path)?)?;
            out.write_all(to_json(&summary).as_bytes())?;
        }
        None => write_csv(&rows, &mut *out)?,
    }
    if let Some(path) = &cfg.output.json {
        write_text(path, &to_json(&summary))?;
    }
    Ok(if summary.failed + summary.nonconverged == 0 {
        Outcome::Success
    } else {
        Outcome::NonConverged
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H2Entry {
    pub status: &'static str,
    pub value: Option<f64>,
}

impl From<H2Value> for H2Entry {
    fn from(v: H2Value) -> Self {
        if v.stable {
            H2Entry {
                status: "stable",
                value: Some(v.value),
            }
        } else {
            H2Entry {
                status: "unstable",
                value: None,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H2Output {
    pub gains: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<H2Entry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<H2Entry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_gap: Option<f64>,
}

/// Evaluate the surrogate (built from the predetermined samples) and/or the
/// full-order oracle at `g`. Negative gains are accepted.
pub fn h2_values(cfg: &RunConfig, g: &[f64], surrogate: bool, oracle: bool) -> Result<H2Output> {
    cfg.validate()?;
    let sys = cfg.build_model()?;
    if g.len() != sys.num_gains() {
        return Err(Error::InvalidGain(format!(
            "{} gains given, model has {}",
            g.len(),
            sys.num_gains()
        )));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGain("gains must be finite".into()));
    }
    let gv = GainVector::unchecked(g.to_vec());
    let oracle_value = if oracle {
        Some(FullOrderOracle::with_cap(&sys, cfg.oracle.cap)?.evaluate(&gv)?)
    } else {
        None
    };
    let surrogate_value = if surrogate {
        let ms = to_modal(&sys)?;
        let s = build_surrogate(&ms, &gains(&cfg.sampling.samples)?, &cfg.pmor_settings())?;
        Some(s.model.h2(&gv)?)
    } else {
        None
    };
    let relative_gap = match (&surrogate_value, &oracle_value) {
        (Some(s), Some(o)) if s.stable && o.stable => Some((o.value - s.value).abs() / o.value),
        _ => None,
    };
    Ok(H2Output {
        gains: g.to_vec(),
        surrogate: surrogate_value.map(H2Entry::from),
        oracle: oracle_value.map(H2Entry::from),
        relative_gap,
    })
}

pub fn h2(
    cfg: &RunConfig,
    g: &[f64],
    surrogate: bool,
    oracle: bool,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let res = h2_values(cfg, g, surrogate, oracle)?;
    let text = to_json(&res);
    if let Some(path) = &cfg.output.json {
        write_text(path, &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(Outcome::Success)
}
