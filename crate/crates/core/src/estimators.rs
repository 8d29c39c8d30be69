//! Losses, per-item gradients and the minibatch gradient estimators.
//!
//! All estimators return the data part plus the ridge term `λ0·θ`, which is
//! known exactly and therefore added deterministically.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::dpp::{GridOpe, Minibatch, ProjectionKernel};
use crate::error::{Error, Result};
use crate::kde::{smoothed_gradient, Kde};
use crate::ope::OpeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `0.5 (⟨x,θ⟩ - y)²`
    Linear,
    /// `log(1 + exp(-y⟨x,θ⟩))`
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossFn {
    pub kind: LossKind,
    pub lambda0: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LossFn {
    pub fn new(kind: LossKind, lambda0: f64) -> Result<Self> {
        if !(lambda0 >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda0 = {lambda0} must be >= 0")));
        }
        Ok(LossFn { kind, lambda0 })
    }

    pub fn item_loss(&self, x: &[f64], y: f64, theta: &[f64]) -> f64 {
        let m = dot(x, theta);
        match self.kind {
            LossKind::Linear => 0.5 * (m - y).powi(2),
            LossKind::Logistic => softplus(-y * m),
        }
    }

    /// Per-item gradient into `out`, without the ridge term.
    pub fn item_gradient(&self, x: &[f64], y: f64, theta: &[f64], out: &mut [f64]) {
        let m = dot(x, theta);
        let c = match self.kind {
            LossKind::Linear => m - y,
            LossKind::Logistic => -y * sigmoid(-y * m),
        };
        out.iter_mut().zip(x).for_each(|(o, &xi)| *o = c * xi);
    }

    fn add_penalty(&self, theta: &[f64], g: &mut [f64]) {
        g.iter_mut().zip(theta).for_each(|(a, t)| *a += self.lambda0 * t);
    }
}

/// `∇_θ L(z_i, θ)` for item `i` of `ds`.
pub fn item_gradient(loss: &LossFn, ds: &DataSet, i: usize, theta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    loss.item_gradient(ds.features(i), ds.label(i), theta, &mut g);
    g
}

fn check_dims(ds: &DataSet, theta: &[f64]) -> Result<()> {
    if theta.len() != ds.feature_dim() {
        return Err(Error::InvalidInput(format!(
            "theta has {} entries, dataset has {} features",
            theta.len(),
            ds.feature_dim()
        )));
    }
    if ds.labels().is_none() {
        return Err(Error::InvalidInput("loss needs labels".into()));
    }
    Ok(())
}

/// `(1/N) Σ_i ∇L(z_i, θ)`, without the ridge term.
pub fn grad_full_data(ds: &DataSet, loss: &LossFn, theta: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; theta.len()];
    let mut g = vec![0.0; theta.len()];
    for i in 0..ds.len() {
        loss.item_gradient(ds.features(i), ds.label(i), theta, &mut g);
        acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
    }
    let n = ds.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// The exact gradient `Ξ_N(θ) + λ0·θ`.
pub fn grad_full(ds: &DataSet, loss: &LossFn, theta: &[f64]) -> Result<Vec<f64>> {
    check_dims(ds, theta)?;
    let mut g = grad_full_data(ds, loss, theta);
    loss.add_penalty(theta, &mut g);
    Ok(g)
}

/// Regularized empirical risk.
pub fn objective(ds: &DataSet, loss: &LossFn, theta: &[f64]) -> f64 {
    let n = ds.len() as f64;
    let risk: f64 = (0..ds.len())
        .map(|i| loss.item_loss(ds.features(i), ds.label(i), theta))
        .sum::<f64>()
        / n;
    risk + 0.5 * loss.lambda0 * dot(theta, theta)
}

/// One estimator draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub vector: Vec<f64>,
    /// Item-gradient evaluations charged to the budget.
    pub items_touched: usize,
}

/// Poisson minibatch: each item independently with probability `p/N`,
/// weight `1/p`.
pub fn xi_poisson<R: Rng + ?Sized>(
    ds: &DataSet,
    loss: &LossFn,
    theta: &[f64],
    p: f64,
    rng: &mut R,
) -> Result<GradientEstimate> {
    check_dims(ds, theta)?;
    let n = ds.len() as f64;
    if !(p > 0.0 && p <= n) {
        return Err(Error::InvalidInput(format!("expected batch size {p} must lie in (0, N]")));
    }
    let incl = p / n;
    let mut acc = vec![0.0; theta.len()];
    let mut g = vec![0.0; theta.len()];
    let mut touched = 0;
    for i in 0..ds.len() {
        if incl >= 1.0 || rng.random::<f64>() < incl {
            loss.item_gradient(ds.features(i), ds.label(i), theta, &mut g);
            acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v / p);
            touched += 1;
        }
    }
    loss.add_penalty(theta, &mut acc);
    Ok(GradientEstimate { vector: acc, items_touched: touched })
}

/// `Σ_{i∈A} ∇L(z_i,θ)/(N·P_ii) + λ0·θ` for a DPP minibatch.
pub fn xi_dpp(
    ds: &DataSet,
    loss: &LossFn,
    theta: &[f64],
    pk: &ProjectionKernel,
    batch: &Minibatch,
) -> Result<GradientEstimate> {
    check_dims(ds, theta)?;
    if pk.len() != ds.len() {
        return Err(Error::InvalidInput(format!("kernel over {} items, dataset has {}", pk.len(), ds.len())));
    }
    let n = ds.len() as f64;
    let mut acc = vec![0.0; theta.len()];
    let mut g = vec![0.0; theta.len()];
    for &i in &batch.items {
        let m = pk.marginals()[i];
        if !(m >= 1e-12) {
            return Err(Error::Degenerate(format!("marginal of item {i} is {m:e}")));
        }
        loss.item_gradient(ds.features(i), ds.label(i), theta, &mut g);
        let w = 1.0 / (n * m);
        acc.iter_mut().zip(&g).for_each(|(a, v)| *a += w * v);
    }
    loss.add_penalty(theta, &mut acc);
    Ok(GradientEstimate { vector: acc, items_touched: batch.items.len() })
}

/// `Σ_j ĝ(w_j)/(q(w_j) K(w_j,w_j)) + λ0·θ` over continuous OPE points.
pub fn xi_smoothed(
    ds: &DataSet,
    loss: &LossFn,
    theta: &[f64],
    spec: &OpeSpec,
    kde: &Kde<'_>,
    points: &[Vec<f64>],
) -> Result<GradientEstimate> {
    check_dims(ds, theta)?;
    let mut acc = vec![0.0; theta.len()];
    for w in points {
        let denom = spec.density(w) * spec.kernel_diag(w)?;
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(Error::Degenerate(format!("q·K(w,w) = {denom:e} at {w:?}")));
        }
        let g = smoothed_gradient(kde, loss, theta, w);
        acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v / denom);
    }
    loss.add_penalty(theta, &mut acc);
    Ok(GradientEstimate { vector: acc, items_touched: ds.len() * points.len() })
}

/// `E[Ξ_s]` (data part) under the grid-discretized OPE, summing every node
/// against its inclusion probability.
pub fn xi_smoothed_grid_expectation(
    loss: &LossFn,
    theta: &[f64],
    spec: &OpeSpec,
    kde: &Kde<'_>,
    grid: &GridOpe,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; theta.len()];
    for m in 0..grid.len() {
        let w = grid.node(m);
        let pm = grid.kernel.marginals()[m];
        let denom = spec.density(w) * spec.kernel_diag(w)?;
        if pm == 0.0 {
            continue;
        }
        let g = smoothed_gradient(kde, loss, theta, w);
        acc.iter_mut().zip(&g).for_each(|(a, v)| *a += pm * v / denom);
    }
    Ok(acc)
}

/// `E[Ξ_s]` (data part) under the continuous OPE in closed form:
/// `(1/N) Σ_i ∇L(z_i,θ) · ∫_{[-1,1]^d} h^{-d} k((w - z_i)/h) dw`.
pub fn xi_smoothed_expectation(loss: &LossFn, theta: &[f64], kde: &Kde<'_>) -> Vec<f64> {
    let ds = kde.data();
    let mut acc = vec![0.0; theta.len()];
    let mut g = vec![0.0; theta.len()];
    for i in 0..ds.len() {
        loss.item_gradient(ds.features(i), ds.label(i), theta, &mut g);
        let mass = kde.cube_mass(i);
        acc.iter_mut().zip(&g).for_each(|(a, v)| *a += mass * v);
    }
    let n = ds.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Exact conditional mean and trace-covariance of the data part of `Ξ_DPP`:
/// with `f_i = ∇L_i/(N P_ii)`, mean `Σ_i P_ii f_i` and
/// `Σ_i P_ii ‖f_i‖² - Σ_{i,j} P_ij² ⟨f_i, f_j⟩`. O(N²p).
pub fn dpp_moments_exact(ds: &DataSet, loss: &LossFn, theta: &[f64], pk: &ProjectionKernel) -> (Vec<f64>, f64) {
    let n = ds.len();
    let dim = theta.len();
    let mut f = vec![0.0; n * dim];
    for i in 0..n {
        let row = &mut f[i * dim..(i + 1) * dim];
        loss.item_gradient(ds.features(i), ds.label(i), theta, row);
        let w = 1.0 / (n as f64 * pk.marginals()[i]);
        row.iter_mut().for_each(|v| *v *= w);
    }
    let mut mean = vec![0.0; dim];
    let mut second = 0.0;
    for i in 0..n {
        let fi = &f[i * dim..(i + 1) * dim];
        let pii = pk.marginals()[i];
        mean.iter_mut().zip(fi).for_each(|(m, v)| *m += pii * v);
        second += pii * dot(fi, fi);
    }
    let mut cross = 0.0;
    for i in 0..n {
        let fi = &f[i * dim..(i + 1) * dim];
        for j in 0..n {
            let pij = pk.entry(i, j);
            cross += pij * pij * dot(fi, &f[j * dim..(j + 1) * dim]);
        }
    }
    (mean, second - cross)
}

/// Closed-form trace-covariance of the Poisson estimator:
/// `p^{-2} (p/N)(1 - p/N) Σ_i ‖∇L_i‖²`.
pub fn poisson_trace_covariance(ds: &DataSet, loss: &LossFn, theta: &[f64], p: f64) -> f64 {
    let n = ds.len() as f64;
    let mut g = vec![0.0; theta.len()];
    let sq: f64 = (0..ds.len())
        .map(|i| {
            loss.item_gradient(ds.features(i), ds.label(i), theta, &mut g);
            dot(&g, &g)
        })
        .sum();
    (p / n) * (1.0 - p / n) * sq / (p * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> DataSet {
        DataSet::new(vec![0.5, -0.2, 0.3, 0.4, -0.9, 0.1], 3, 2, Some(vec![0.3, 0.1]), "toy").unwrap()
    }

    #[test]
    fn linear_gradient_at_zero() {
        let loss = LossFn::new(LossKind::Linear, 0.0).unwrap();
        let mut g = [0.0; 2];
        loss.item_gradient(&[0.5, -0.2], 0.3, &[0.0, 0.0], &mut g);
        assert_eq!(g, [-0.3 * 0.5, 0.3 * 0.2]);
    }

    #[test]
    fn logistic_saturates() {
        let loss = LossFn::new(LossKind::Logistic, 0.0).unwrap();
        let mut g = [0.0; 1];
        loss.item_gradient(&[1.0], 1.0, &[800.0], &mut g);
        assert!(g[0].abs() < 1e-300);
        assert!(loss.item_loss(&[1.0], -1.0, &[800.0]).is_finite());
    }

    #[test]
    fn full_gradient_single_item() {
        let ds = DataSet::new(vec![0.5, 0.3], 2, 1, Some(vec![0.3]), "one").unwrap();
        let loss = LossFn::new(LossKind::Linear, 0.5).unwrap();
        let theta = [0.7];
        let g = grad_full(&ds, &loss, &theta).unwrap();
        assert!((g[0] - ((0.35 - 0.3) * 0.5 + 0.35)).abs() < 1e-15);
    }

    #[test]
    fn poisson_full_inclusion() {
        let ds = toy();
        let loss = LossFn::new(LossKind::Linear, 0.0).unwrap();
        let theta = [0.2, -0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let est = xi_poisson(&ds, &loss, &theta, 2.0, &mut rng).unwrap();
        assert_eq!(est.items_touched, 2);
        let full = grad_full(&ds, &loss, &theta).unwrap();
        for (a, b) in est.vector.iter().zip(&full) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let ds = toy();
        let loss = LossFn::new(LossKind::Linear, 0.0).unwrap();
        assert!(grad_full(&ds, &loss, &[0.0; 3]).is_err());
    }
}
