//! CSV and JSON report writers.
//!
//! Reports carry the configuration echo, version and seed and are otherwise a
//! pure function of the configuration, so reruns are byte-identical. The
//! wall-clock duration lives in a separate timing record.

use std::io::Write;

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::experiments::config::{ExperimentConfig, OutputFormat};
use crate::experiments::convergence::ConvergenceReport;
use crate::experiments::variance::VarianceReport;
use crate::experiments::version;
use crate::sgd::TRAJECTORY_HEADER;

pub const VARIANCE_COLUMNS: &str =
    "estimator,p,replicates,trace_cov,trace_cov_stderr,mean_sq_norm,mean_sq_norm_stderr,exact_trace_cov,clipped,\
saturation_gap";
pub const SLOPE_COLUMNS: &str = "estimator,p_min,slope,slope_stderr,intercept,points";
pub const CURVE_COLUMNS: &str = "estimator,p,t,budget,grad_norm_mean,grad_norm_sem,dist_to_opt_mean,dist_to_opt_sem,\
objective_mean,objective_sem,test_error_mean,test_error_sem";

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Metadata { command: command.into(), version: version(), seed: cfg.seed, config: cfg.echo() }
    }

    fn write_comment<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# command={}", self.command)?;
        writeln!(w, "# version={}", self.version)?;
        writeln!(w, "# seed={}", self.seed)?;
        for (k, v) in &self.config {
            writeln!(w, "# config.{k}={v}")?;
        }
        Ok(())
    }

    fn json(&self) -> serde_json::Value {
        let cfg: serde_json::Map<String, serde_json::Value> =
            self.config.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        json!({ "command": self.command, "version": self.version, "seed": self.seed, "config": cfg })
    }
}

/// Wall-clock record written next to a report.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
}

pub fn write_variance<W: Write>(w: &mut W, meta: &Metadata, rep: &VarianceReport, fmt: OutputFormat) -> Result<()> {
    match fmt {
        OutputFormat::Csv => {
            meta.write_comment(w)?;
            writeln!(w, "# dpp_dim={}", rep.dpp_dim)?;
            writeln!(w, "# n={}", rep.n)?;
            writeln!(w, "# full_grad_sq_norm={:e}", rep.full_grad_sq_norm)?;
            writeln!(w, "{VARIANCE_COLUMNS}")?;
            for v in &rep.points {
                writeln!(
                    w,
                    "{},{},{},{:e},{:e},{:e},{:e},{:e},{},{}",
                    v.estimator.name(),
                    v.p,
                    v.replicates,
                    v.trace_cov,
                    v.trace_cov_stderr,
                    v.mean_sq_norm,
                    v.mean_sq_norm_stderr,
                    v.exact_trace_cov,
                    v.clipped,
                    opt(v.saturation_gap)
                )?;
            }
            writeln!(w)?;
            writeln!(w, "{SLOPE_COLUMNS}")?;
            for s in &rep.slopes {
                writeln!(
                    w,
                    "{},{},{:e},{:e},{:e},{}",
                    s.estimator.name(),
                    s.p_min,
                    s.fit.slope,
                    s.fit.stderr,
                    s.fit.intercept,
                    s.fit.points
                )?;
            }
        }
        OutputFormat::Json => {
            let v = json!({ "metadata": meta.json(), "report": rep });
            serde_json::to_writer_pretty(&mut *w, &v).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn write_convergence<W: Write>(w: &mut W, meta: &Metadata, rep: &ConvergenceReport, fmt: OutputFormat) -> Result<()> {
    match fmt {
        OutputFormat::Csv => {
            meta.write_comment(w)?;
            writeln!(w, "# n={}", rep.n)?;
            for c in &rep.curves {
                writeln!(w, "# runs,{},{},replicates={},diverged={}", c.estimator.name(), c.p, c.replicates, c.diverged)?;
            }
            writeln!(w, "{CURVE_COLUMNS}")?;
            for c in &rep.curves {
                for r in &c.rows {
                    writeln!(
                        w,
                        "{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                        c.estimator.name(),
                        c.p,
                        r.t,
                        r.budget,
                        r.grad_norm.mean,
                        r.grad_norm.sem,
                        r.dist_to_opt.mean,
                        r.dist_to_opt.sem,
                        r.objective.mean,
                        r.objective.sem,
                        opt(r.test_error.map(|s| s.mean)),
                        opt(r.test_error.map(|s| s.sem))
                    )?;
                }
            }
        }
        OutputFormat::Json => {
            let v = json!({ "metadata": meta.json(), "report": rep });
            serde_json::to_writer_pretty(&mut *w, &v).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Raw per-replicate trajectories, prefixed by estimator and batch size.
pub fn write_trajectories<W: Write>(w: &mut W, meta: &Metadata, rep: &ConvergenceReport) -> Result<()> {
    meta.write_comment(w)?;
    writeln!(w, "estimator,p,{TRAJECTORY_HEADER}")?;
    for c in &rep.curves {
        for (r, tr) in c.trajectories.iter().enumerate() {
            let mut buf = Vec::new();
            tr.write_csv_rows(r, &mut buf)?;
            for line in String::from_utf8_lossy(&buf).lines() {
                writeln!(w, "{},{},{line}", c.estimator.name(), c.p)?;
            }
        }
    }
    Ok(())
}
