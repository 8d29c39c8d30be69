//! Convergence study: replicate SGD trajectories per (estimator, p), averaged
//! against the budget `t·p`.

use serde::Serialize;

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::estimators::{LossFn, LossKind};
use crate::experiments::config::ExperimentConfig;
use crate::experiments::pipeline::{kernel_points, load_data, prepare_kernel};
use crate::rng::{stream_id, stream_rng};
use crate::sgd::{exact_minimizer, run_sgd_with_rng, EstimatorKind, SamplerResources, SgdConfig, Trajectory};

/// Mean and standard deviation of the mean of one diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub sem: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Stat { mean, sem: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Stat { mean, sem: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub t: usize,
    pub budget: usize,
    pub grad_norm: Stat,
    pub dist_to_opt: Stat,
    pub objective: Stat,
    /// Held-out error: misclassification rate for the logistic loss, mean
    /// squared residual for the linear loss.
    pub test_error: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub estimator: EstimatorKind,
    pub p: usize,
    pub replicates: usize,
    pub diverged: usize,
    pub rows: Vec<CurveRow>,
    /// Per-replicate final `‖θ_T − θ*‖`, index-aligned across curves.
    pub final_dist: Vec<f64>,
    /// Per-replicate final objective.
    pub final_objective: Vec<f64>,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub n: usize,
    pub theta_star: Vec<f64>,
    pub curves: Vec<Curve>,
}

impl ConvergenceReport {
    pub fn curve(&self, estimator: EstimatorKind, p: usize) -> Option<&Curve> {
        self.curves.iter().find(|c| c.estimator == estimator && c.p == p)
    }
}

pub fn test_error(test: &DataSet, kind: LossKind, theta: &[f64]) -> f64 {
    let n = test.len() as f64;
    let mut acc = 0.0;
    for i in 0..test.len() {
        let m: f64 = test.features(i).iter().zip(theta).map(|(a, b)| a * b).sum();
        let y = test.label(i);
        acc += match kind {
            LossKind::Logistic => f64::from(u8::from(m * y <= 0.0)),
            LossKind::Linear => (m - y).powi(2),
        };
    }
    acc / n
}

fn tag(e: EstimatorKind) -> u8 {
    match e {
        EstimatorKind::Poisson => 11,
        EstimatorKind::Dpp => 12,
    }
}

fn aggregate(trs: &[Trajectory], test: Option<&DataSet>, kind: LossKind) -> Vec<CurveRow> {
    // diverged runs are truncated; rows are averaged over the runs that reached them
    let len = trs.iter().map(|t| t.records.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let alive: Vec<&Trajectory> = trs.iter().filter(|t| t.records.len() > k).collect();
            let col = |f: &dyn Fn(&Trajectory) -> f64| Stat::of(&alive.iter().map(|t| f(t)).collect::<Vec<_>>());
            let r0 = alive[0].records[k];
            CurveRow {
                t: r0.t,
                budget: r0.budget,
                grad_norm: col(&|t| t.records[k].grad_norm),
                dist_to_opt: col(&|t| t.records[k].dist_to_opt),
                objective: col(&|t| t.records[k].objective),
                test_error: test.map(|te| col(&|t| test_error(te, kind, &t.iterates[k]))),
            }
        })
        .collect()
}

pub fn convergence_study_on(train: &DataSet, test: Option<&DataSet>, cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let loss = LossFn::new(cfg.loss, cfg.lambda0)?;
    let theta_star = exact_minimizer(train, &loss)?;
    let kpts = kernel_points(train, cfg.kernel_space);
    let mut curves = Vec::new();
    for &p in &cfg.batch_sizes {
        let iterations = cfg.budget / p;
        if iterations == 0 {
            return Err(Error::InvalidInput(format!("budget {} is below batch size {p}", cfg.budget)));
        }
        let kernel = if cfg.estimators.contains(&EstimatorKind::Dpp) {
            Some(prepare_kernel(&kpts, p, cfg)?.1)
        } else {
            None
        };
        for &est in &cfg.estimators {
            let mut sc = SgdConfig::new(est, p, iterations, cfg.seed);
            sc.alpha = cfg.step_alpha;
            sc.scale = cfg.step_scale;
            sc.record_every = cfg.record_every;
            let res = SamplerResources { theta_star: &theta_star, kernel: kernel.as_ref() };
            let trs: Vec<Trajectory> = cfg
                .execution
                .map(cfg.replicates, |r| {
                    let mut rng = stream_rng(cfg.seed, stream_id(tag(est), p, r));
                    run_sgd_with_rng(train, &loss, &sc, res, &mut rng)
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let diverged = trs.iter().filter(|t| t.diverged).count();
            if diverged > 0 {
                log::warn!("{} p={p}: {diverged} of {} runs diverged", est.name(), trs.len());
            }
            let last = |t: &Trajectory, f: fn(&crate::sgd::Record) -> f64| t.records.last().map(f).unwrap_or(f64::NAN);
            curves.push(Curve {
                estimator: est,
                p,
                replicates: trs.len(),
                diverged,
                rows: aggregate(&trs, test, cfg.loss),
                final_dist: trs.iter().map(|t| last(t, |r| r.dist_to_opt)).collect(),
                final_objective: trs.iter().map(|t| last(t, |r| r.objective)).collect(),
                trajectories: trs,
            });
        }
    }
    Ok(ConvergenceReport { n: train.len(), theta_star, curves })
}

pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let data = load_data(cfg)?;
    convergence_study_on(&data.train, data.test.as_ref(), cfg)
}
