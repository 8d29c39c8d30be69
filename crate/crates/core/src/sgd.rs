//! SGD with decreasing stepsizes `η_t = scale / t^alpha`, the exact minimizer
//! used as reference, and per-iteration diagnostics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::dpp::{DppSampler, ProjectionKernel};
use crate::error::{Error, Result};
use crate::estimators::{grad_full, objective, xi_dpp, xi_poisson, LossFn, LossKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Poisson,
    Dpp,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Poisson => "poisson",
            EstimatorKind::Dpp => "dpp",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "poisson" => Ok(EstimatorKind::Poisson),
            "dpp" => Ok(EstimatorKind::Dpp),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub alpha: f64,
    pub scale: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub estimator: EstimatorKind,
    /// `None` starts from zero.
    pub theta0: Option<Vec<f64>>,
    pub seed: u64,
    /// Keep every `record_every`-th iteration; the first and last are always kept.
    pub record_every: usize,
}

impl SgdConfig {
    pub fn new(estimator: EstimatorKind, batch_size: usize, iterations: usize, seed: u64) -> Self {
        SgdConfig {
            alpha: 0.9,
            scale: 1.0,
            iterations,
            batch_size,
            estimator,
            theta0: None,
            seed,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("stepsize exponent {} must lie in (0,1)", self.alpha)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidInput(format!("stepsize scale {} must be positive", self.scale)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be positive".into()));
        }
        Ok(())
    }

    pub fn stepsize(&self, t: usize) -> f64 {
        self.scale / (t as f64).powf(self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: usize,
    pub budget: usize,
    pub grad_norm: f64,
    pub dist_to_opt: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    /// `θ_t` at each recorded iteration.
    pub iterates: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub diverged: bool,
}

pub const TRAJECTORY_HEADER: &str = "replicate,t,budget,grad_norm,dist_to_opt,objective";

impl Trajectory {
    pub fn write_csv_rows<W: Write>(&self, replicate: usize, w: &mut W) -> Result<()> {
        for r in &self.records {
            writeln!(w, "{replicate},{},{},{:e},{:e},{:e}", r.t, r.budget, r.grad_norm, r.dist_to_opt, r.objective)?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn design(ds: &DataSet) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let labels = ds.labels().ok_or_else(|| Error::InvalidInput("loss needs labels".into()))?;
    let k = ds.feature_dim();
    let x = DMatrix::from_fn(ds.len(), k, |i, j| ds.features(i)[j]);
    Ok((x, DVector::from_column_slice(labels)))
}

const NEWTON_MAX_STEPS: usize = 200;
const NEWTON_TOL: f64 = 1e-10;
const STATIONARITY_TOL: f64 = 1e-8;

/// `argmin_θ (1/N) Σ L(z_i,θ) + λ0/2 ‖θ‖²`.
pub fn exact_minimizer(ds: &DataSet, loss: &LossFn) -> Result<Vec<f64>> {
    if !(loss.lambda0 > 0.0) {
        return Err(Error::InvalidInput("exact minimizer needs lambda0 > 0".into()));
    }
    let (x, y) = design(ds)?;
    let n = ds.len() as f64;
    let k = ds.feature_dim();
    let theta = match loss.kind {
        LossKind::Linear => {
            let a = x.tr_mul(&x) / n + DMatrix::identity(k, k) * loss.lambda0;
            let b = x.tr_mul(&y) / n;
            let chol = a.cholesky().ok_or_else(|| Error::Degenerate("normal equations not positive definite".into()))?;
            chol.solve(&b).as_slice().to_vec()
        }
        LossKind::Logistic => newton_logistic(ds, loss, &x, &y)?,
    };
    let g = norm(&grad_full(ds, loss, &theta)?);
    if !(g <= STATIONARITY_TOL) {
        return Err(Error::NoConvergence(format!("gradient norm {g:e} at the computed minimizer")));
    }
    Ok(theta)
}

fn newton_logistic(ds: &DataSet, loss: &LossFn, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    let n = ds.len() as f64;
    let k = ds.feature_dim();
    let mut theta = vec![0.0; k];
    let mut f = objective(ds, loss, &theta);
    for _ in 0..NEWTON_MAX_STEPS {
        let g = grad_full(ds, loss, &theta)?;
        if norm(&g) <= NEWTON_TOL {
            return Ok(theta);
        }
        let th = DVector::from_column_slice(&theta);
        let margins = x * &th;
        let mut h = DMatrix::identity(k, k) * loss.lambda0;
        for i in 0..ds.len() {
            let s = 1.0 / (1.0 + (-y[i] * margins[i]).exp());
            let c = s * (1.0 - s) / n;
            let row = x.row(i);
            h += row.transpose() * row * c;
        }
        let chol = h.cholesky().ok_or_else(|| Error::Degenerate("Newton Hessian not positive definite".into()))?;
        let step = chol.solve(&DVector::from_column_slice(&g));
        let slope: f64 = -step.dot(&DVector::from_column_slice(&g));
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let fc = objective(ds, loss, &cand);
            if fc <= f + 1e-4 * t * slope || t < 1e-10 {
                theta = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
    }
    let g = norm(&grad_full(ds, loss, &theta)?);
    if g <= NEWTON_TOL {
        return Ok(theta);
    }
    Err(Error::NoConvergence(format!("Newton stopped after {NEWTON_MAX_STEPS} steps with gradient norm {g:e}")))
}

/// What `run_sgd` needs besides the data: the reference minimizer and, for
/// the DPP estimator, the precomputed projection kernel.
#[derive(Debug, Clone, Copy)]
pub struct SamplerResources<'a> {
    pub theta_star: &'a [f64],
    pub kernel: Option<&'a ProjectionKernel>,
}

pub fn run_sgd(ds: &DataSet, loss: &LossFn, cfg: &SgdConfig, res: SamplerResources<'_>) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_sgd_with_rng(ds, loss, cfg, res, &mut rng)
}

/// As [`run_sgd`] with an externally supplied generator; `cfg.seed` is ignored.
pub fn run_sgd_with_rng(
    ds: &DataSet,
    loss: &LossFn,
    cfg: &SgdConfig,
    res: SamplerResources<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    cfg.validate()?;
    let k = ds.feature_dim();
    if res.theta_star.len() != k {
        return Err(Error::InvalidInput("theta_star has the wrong dimension".into()));
    }
    let mut theta = match &cfg.theta0 {
        Some(t) if t.len() == k => t.clone(),
        Some(_) => return Err(Error::InvalidInput("theta0 has the wrong dimension".into())),
        None => vec![0.0; k],
    };
    let mut sampler = match cfg.estimator {
        EstimatorKind::Dpp => {
            let pk = res.kernel.ok_or_else(|| Error::InvalidInput("dpp estimator needs a projection kernel".into()))?;
            if pk.rank() != cfg.batch_size {
                return Err(Error::InvalidInput(format!(
                    "kernel rank {} differs from batch size {}",
                    pk.rank(),
                    cfg.batch_size
                )));
            }
            Some((DppSampler::new(pk), pk))
        }
        EstimatorKind::Poisson => {
            if cfg.batch_size > ds.len() {
                return Err(Error::InvalidInput("batch size exceeds dataset size".into()));
            }
            None
        }
    };

    let record = |t: usize, theta: &[f64]| -> Result<Record> {
        let dist = theta.iter().zip(res.theta_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok(Record {
            t,
            budget: t * cfg.batch_size,
            grad_norm: norm(&grad_full(ds, loss, theta)?),
            dist_to_opt: dist,
            objective: objective(ds, loss, theta),
        })
    };

    let mut records = vec![record(0, &theta)?];
    let mut iterates = vec![theta.clone()];
    let mut diverged = false;
    for t in 1..=cfg.iterations {
        let est = match &mut sampler {
            Some((s, pk)) => {
                let batch = s.sample(rng)?;
                xi_dpp(ds, loss, &theta, pk, &batch)?
            }
            None => xi_poisson(ds, loss, &theta, cfg.batch_size as f64, rng)?,
        };
        let eta = cfg.stepsize(t);
        theta.iter_mut().zip(&est.vector).for_each(|(a, g)| *a -= eta * g);
        if theta.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        if t % cfg.record_every == 0 || t == cfg.iterations {
            records.push(record(t, &theta)?);
            iterates.push(theta.clone());
        }
    }
    Ok(Trajectory { records, iterates, theta, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, FeatureLaw, SyntheticConfig, Task};

    fn linear_data() -> DataSet {
        generate_synthetic(&SyntheticConfig::new(200, 3, FeatureLaw::Uniform, Task::Linear, 3)).unwrap()
    }

    #[test]
    fn ridge_minimizer_is_stationary() {
        let ds = linear_data();
        let loss = LossFn::new(LossKind::Linear, 0.1).unwrap();
        let th = exact_minimizer(&ds, &loss).unwrap();
        assert!(norm(&grad_full(&ds, &loss, &th).unwrap()) < 1e-12);
    }

    #[test]
    fn logistic_minimizer_is_stationary() {
        let ds = generate_synthetic(&SyntheticConfig::new(300, 3, FeatureLaw::Uniform, Task::Logistic, 4)).unwrap();
        let loss = LossFn::new(LossKind::Logistic, 0.01).unwrap();
        let th = exact_minimizer(&ds, &loss).unwrap();
        assert!(norm(&grad_full(&ds, &loss, &th).unwrap()) <= 1e-10);
    }

    #[test]
    fn minimizer_needs_penalty() {
        let ds = linear_data();
        assert!(exact_minimizer(&ds, &LossFn::new(LossKind::Linear, 0.0).unwrap()).is_err());
    }

    #[test]
    fn record_count_and_budget() {
        let ds = linear_data();
        let loss = LossFn::new(LossKind::Linear, 0.1).unwrap();
        let th = exact_minimizer(&ds, &loss).unwrap();
        let cfg = SgdConfig::new(EstimatorKind::Poisson, 5, 40, 1);
        let tr = run_sgd(&ds, &loss, &cfg, SamplerResources { theta_star: &th, kernel: None }).unwrap();
        assert_eq!(tr.records.len(), 41);
        assert_eq!(tr.records.last().unwrap().budget, 200);
        assert!(tr.records.windows(2).all(|w| w[0].budget <= w[1].budget));
    }

    #[test]
    fn bad_exponent_rejected() {
        let mut cfg = SgdConfig::new(EstimatorKind::Poisson, 5, 10, 1);
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let ds = linear_data();
        let loss = LossFn::new(LossKind::Linear, 0.1).unwrap();
        let th = exact_minimizer(&ds, &loss).unwrap();
        let mut cfg = SgdConfig::new(EstimatorKind::Poisson, 5, 25, 1);
        cfg.record_every = 10;
        let tr = run_sgd(&ds, &loss, &cfg, SamplerResources { theta_star: &th, kernel: None }).unwrap();
        let ts: Vec<usize> = tr.records.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![0, 10, 20, 25]);
    }
}
