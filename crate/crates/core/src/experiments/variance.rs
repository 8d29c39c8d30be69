//! Variance-decay study: trace-covariance of the gradient estimators at the
//! optimum as a function of the batch size, with log-log slope fits.

use serde::Serialize;

use crate::dataset::DataSet;
use crate::dpp::DppSampler;
use crate::error::{Error, Result};
use crate::estimators::{dpp_moments_exact, grad_full_data, poisson_trace_covariance, xi_dpp, xi_poisson, LossFn};
use crate::experiments::config::ExperimentConfig;
use crate::experiments::pipeline::{kernel_points, load_data, prepare_kernel};
use crate::experiments::slope::{default_p_min, loglog_fit, SlopeFit};
use crate::rng::{stream_id, stream_rng};
use crate::sgd::{exact_minimizer, EstimatorKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariancePoint {
    pub estimator: EstimatorKind,
    pub p: usize,
    pub replicates: usize,
    /// Monte Carlo estimate of `E‖Ξ_A − Ξ_N‖²`.
    pub trace_cov: f64,
    pub trace_cov_stderr: f64,
    /// Monte Carlo estimate of `E‖Ξ_A‖²` (data part).
    pub mean_sq_norm: f64,
    pub mean_sq_norm_stderr: f64,
    /// Closed-form trace-covariance for the same kernel or inclusion rate.
    pub exact_trace_cov: f64,
    /// Set when a slightly negative value was clipped to 0.
    pub clipped: bool,
    /// `‖(1/N)·K - P‖₂` of the DPP kernel.
    pub saturation_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeEntry {
    pub estimator: EstimatorKind,
    pub p_min: usize,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    /// Dimension of the space the DPP lives on.
    pub dpp_dim: usize,
    pub n: usize,
    /// `‖Ξ_N(θ*)‖²`, data part.
    pub full_grad_sq_norm: f64,
    pub points: Vec<VariancePoint>,
    pub slopes: Vec<SlopeEntry>,
}

impl VarianceReport {
    pub fn point(&self, estimator: EstimatorKind, p: usize) -> Option<&VariancePoint> {
        self.points.iter().find(|v| v.estimator == estimator && v.p == p)
    }

    pub fn slope(&self, estimator: EstimatorKind) -> Option<&SlopeEntry> {
        self.slopes.iter().find(|s| s.estimator == estimator)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn tag(e: EstimatorKind) -> u8 {
    match e {
        EstimatorKind::Poisson => 1,
        EstimatorKind::Dpp => 2,
    }
}

/// Per-replicate `(‖Ξ_A − Ξ_N‖², ‖Ξ_A‖²)` of the data part at `theta`.
fn draws<F>(cfg: &ExperimentConfig, est: EstimatorKind, p: usize, full: &[f64], lambda_theta: &[f64], draw: F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>> + Sync + Send,
{
    let out = cfg.execution.map(cfg.replicates, |r| {
        let mut rng = stream_rng(cfg.seed, stream_id(tag(est), p, r));
        draw(&mut rng).map(|mut g| {
            // strip the deterministic ridge term
            g.iter_mut().zip(lambda_theta).for_each(|(a, l)| *a -= l);
            (sq_dist(&g, full), g.iter().map(|x| x * x).sum())
        })
    });
    out.into_iter().collect()
}

fn summarize(est: EstimatorKind, p: usize, d: &[(f64, f64)], exact: f64) -> VariancePoint {
    let (tc, tc_se) = mean_and_stderr(&d.iter().map(|x| x.0).collect::<Vec<_>>());
    let (ms, ms_se) = mean_and_stderr(&d.iter().map(|x| x.1).collect::<Vec<_>>());
    let clipped = exact < 0.0;
    VariancePoint {
        estimator: est,
        p,
        replicates: d.len(),
        trace_cov: tc,
        trace_cov_stderr: tc_se,
        mean_sq_norm: ms,
        mean_sq_norm_stderr: ms_se,
        exact_trace_cov: exact.max(0.0),
        clipped,
        saturation_gap: None,
    }
}

/// Runs the study on an already loaded dataset.
pub fn variance_study_on(ds: &DataSet, cfg: &ExperimentConfig) -> Result<VarianceReport> {
    let loss = LossFn::new(cfg.loss, cfg.lambda0)?;
    let theta = exact_minimizer(ds, &loss)?;
    let full = grad_full_data(ds, &loss, &theta);
    let lambda_theta: Vec<f64> = theta.iter().map(|t| cfg.lambda0 * t).collect();
    let kpts = kernel_points(ds, cfg.kernel_space);

    let mut points = Vec::new();
    for &p in &cfg.batch_sizes {
        if p > ds.len() {
            return Err(Error::InvalidInput(format!("batch size {p} exceeds N={}", ds.len())));
        }
        for &est in &cfg.estimators {
            let vp = match est {
                EstimatorKind::Poisson => {
                    let d = draws(cfg, est, p, &full, &lambda_theta, |rng| {
                        Ok(xi_poisson(ds, &loss, &theta, p as f64, rng)?.vector)
                    })?;
                    summarize(est, p, &d, poisson_trace_covariance(ds, &loss, &theta, p as f64))
                }
                EstimatorKind::Dpp => {
                    let (_, pk) = prepare_kernel(&kpts, p, cfg)?;
                    let d = draws(cfg, est, p, &full, &lambda_theta, |rng| {
                        let batch = DppSampler::new(&pk).sample(rng)?;
                        Ok(xi_dpp(ds, &loss, &theta, &pk, &batch)?.vector)
                    })?;
                    let mut vp = summarize(est, p, &d, dpp_moments_exact(ds, &loss, &theta, &pk).1);
                    vp.saturation_gap = pk.saturation_gap();
                    vp
                }
            };
            log::info!("{} p={p}: trace-cov {:.4e} ± {:.2e}", est.name(), vp.trace_cov, vp.trace_cov_stderr);
            points.push(vp);
        }
    }

    let p_min = cfg.slope_p_min.unwrap_or_else(|| default_p_min(kpts.dim()));
    let mut slopes = Vec::new();
    for &est in &cfg.estimators {
        let (ps, vs): (Vec<usize>, Vec<f64>) = points
            .iter()
            .filter(|v| v.estimator == est && v.p >= p_min && v.trace_cov > 0.0)
            .map(|v| (v.p, v.trace_cov))
            .unzip();
        slopes.push(SlopeEntry { estimator: est, p_min, fit: loglog_fit(&ps, &vs)? });
    }
    Ok(VarianceReport {
        dpp_dim: kpts.dim(),
        n: ds.len(),
        full_grad_sq_norm: full.iter().map(|x| x * x).sum(),
        points,
        slopes,
    })
}

pub fn variance_study(cfg: &ExperimentConfig) -> Result<VarianceReport> {
    let data = load_data(cfg)?;
    variance_study_on(&data.train, cfg)
}
