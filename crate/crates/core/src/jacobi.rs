//! Univariate orthonormal Jacobi polynomials.
//!
//! The reference density on [-1,1] is the probability-normalized
//! `q(x) ∝ (1+x)^α (1-x)^β`, so `φ_0 ≡ 1`. Polynomials are orthonormal in
//! `L²(q)` and satisfy
//!
//! ```text
//! b_{n+1} φ_{n+1}(x) = (x - a_n) φ_n(x) - b_n φ_{n-1}(x)
//! ```

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{golub_welsch, Rule};

pub const PARAM_MIN: f64 = -0.5;
pub const PARAM_MAX: f64 = 0.5;

/// Exponents of the weight `(1+x)^alpha (1-x)^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for JacobiParams {
    fn default() -> Self {
        JacobiParams { alpha: 0.0, beta: 0.0 }
    }
}

impl JacobiParams {
    /// Clips both exponents into `[-1/2, 1/2]`.
    pub fn new(alpha: f64, beta: f64) -> Self {
        JacobiParams {
            alpha: alpha.clamp(PARAM_MIN, PARAM_MAX),
            beta: beta.clamp(PARAM_MIN, PARAM_MAX),
        }
    }

    /// Mean and variance of the normalized density.
    pub fn moments(&self) -> (f64, f64) {
        let (a, b) = (self.alpha, self.beta);
        let s = a + b + 2.0;
        let mean = (a - b) / s;
        let var = 4.0 * (a + 1.0) * (b + 1.0) / (s * s * (s + 1.0));
        (mean, var)
    }

    /// `ln ∫ (1+x)^α (1-x)^β dx = (α+β+1) ln 2 + ln B(α+1, β+1)`.
    pub fn log_norm(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        (a + b + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
            - ln_gamma(a + b + 2.0)
    }

    /// Density `q(x)`; zero outside [-1,1].
    pub fn pdf(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.pdf_from_complements(1.0 + x, 1.0 - x)
    }

    /// `q` evaluated from `1+x` and `1-x` supplied separately, for callers
    /// that hold them without cancellation near the endpoints.
    pub fn pdf_from_complements(&self, one_plus: f64, one_minus: f64) -> f64 {
        (self.alpha * one_plus.ln() + self.beta * one_minus.ln() - self.log_norm()).exp()
    }
}

fn moment_mismatch(params: (f64, f64), mean: f64, var: f64) -> f64 {
    let (m, v) = JacobiParams { alpha: params.0, beta: params.1 }.moments();
    (m - mean).powi(2) + (v - var).powi(2)
}

/// Fits `(α, β)` to a target mean and variance.
///
/// The two moment equations invert in closed form: with `s = α+β+2`,
/// `Var = (1 - mean²)/(s + 1)`. When the exact solution falls outside the
/// parameter square, the squared moment mismatch is minimized over the square
/// (grid at resolution 1e-3, then a projected Gauss–Newton polish).
pub fn fit_jacobi_params(mean: f64, var: f64) -> Result<JacobiParams> {
    if !(mean.abs() < 1.0) || !(var > 0.0 && var < 1.0) {
        return Err(Error::InvalidInput(format!(
            "moment targets out of range: mean={mean}, var={var}"
        )));
    }
    let s = (1.0 - mean * mean) / var - 1.0;
    let alpha = s * (1.0 + mean) / 2.0 - 1.0;
    let beta = s * (1.0 - mean) / 2.0 - 1.0;
    let inside = |v: f64| (PARAM_MIN..=PARAM_MAX).contains(&v);
    if s > 0.0 && inside(alpha) && inside(beta) {
        return Ok(JacobiParams { alpha, beta });
    }

    let steps = 1000;
    let h = (PARAM_MAX - PARAM_MIN) / steps as f64;
    let mut best = (0.0, 0.0);
    let mut best_val = f64::INFINITY;
    for i in 0..=steps {
        let a = PARAM_MIN + i as f64 * h;
        for j in 0..=steps {
            let b = PARAM_MIN + j as f64 * h;
            let val = moment_mismatch((a, b), mean, var);
            let tie = (val - best_val).abs() <= 1e-15 * best_val.max(1e-300);
            if val < best_val && !tie
                || tie && a * a + b * b < best.0 * best.0 + best.1 * best.1
            {
                best = (a, b);
                best_val = val;
            }
        }
    }
    Ok(polish(best, mean, var))
}

// Projected Gauss–Newton on the two moment residuals, accepting only descent.
fn polish(start: (f64, f64), mean: f64, var: f64) -> JacobiParams {
    let residual = |p: (f64, f64)| {
        let (m, v) = JacobiParams { alpha: p.0, beta: p.1 }.moments();
        [m - mean, v - var]
    };
    let clip = |p: (f64, f64)| (p.0.clamp(PARAM_MIN, PARAM_MAX), p.1.clamp(PARAM_MIN, PARAM_MAX));
    let mut x = start;
    let mut fx = moment_mismatch(x, mean, var);
    for _ in 0..50 {
        let r = residual(x);
        let eps = 1e-7;
        let ra = residual((x.0 + eps, x.1));
        let rb = residual((x.0, x.1 + eps));
        let j = [
            [(ra[0] - r[0]) / eps, (rb[0] - r[0]) / eps],
            [(ra[1] - r[1]) / eps, (rb[1] - r[1]) / eps],
        ];
        // normal equations JᵀJ δ = -Jᵀr with light damping
        let jtj = [
            [j[0][0] * j[0][0] + j[1][0] * j[1][0] + 1e-12, j[0][0] * j[0][1] + j[1][0] * j[1][1]],
            [j[0][0] * j[0][1] + j[1][0] * j[1][1], j[0][1] * j[0][1] + j[1][1] * j[1][1] + 1e-12],
        ];
        let g = [
            -(j[0][0] * r[0] + j[1][0] * r[1]),
            -(j[0][1] * r[0] + j[1][1] * r[1]),
        ];
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let delta = (
            (g[0] * jtj[1][1] - g[1] * jtj[0][1]) / det,
            (jtj[0][0] * g[1] - jtj[1][0] * g[0]) / det,
        );
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-6 {
            let cand = clip((x.0 + step * delta.0, x.1 + step * delta.1));
            let fc = moment_mismatch(cand, mean, var);
            if fc < fx {
                x = cand;
                fx = fc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    JacobiParams { alpha: x.0, beta: x.1 }
}

/// Recurrence coefficients `(a_0..a_m, b_0..b_m)` of the orthonormal family.
/// `b_0` is set to 0 (there is no `φ_{-1}`).
pub fn recurrence_coeffs(params: JacobiParams, m: usize) -> (Vec<f64>, Vec<f64>) {
    // classical Jacobi convention: weight (1-x)^ca (1+x)^cb
    let ca = params.beta;
    let cb = params.alpha;
    let mut a = Vec::with_capacity(m + 1);
    let mut b = Vec::with_capacity(m + 1);
    for n in 0..=m {
        let nf = n as f64;
        let s = 2.0 * nf + ca + cb;
        let an = if n == 0 {
            (cb - ca) / (ca + cb + 2.0)
        } else {
            (cb * cb - ca * ca) / (s * (s + 2.0))
        };
        a.push(an);
        let bn = match n {
            0 => 0.0,
            1 => {
                let t = ca + cb + 2.0;
                (4.0 * (1.0 + ca) * (1.0 + cb) / (t * t * (t + 1.0))).sqrt()
            }
            _ => (4.0 * nf * (nf + ca) * (nf + cb) * (nf + ca + cb)
                / (s * s * (s + 1.0) * (s - 1.0)))
                .sqrt(),
        };
        b.push(bn);
    }
    (a, b)
}

/// Orthonormal Jacobi family up to a fixed degree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobiBasis {
    pub params: JacobiParams,
    pub max_degree: usize,
    pub recur_a: Vec<f64>,
    pub recur_b: Vec<f64>,
    pub log_norm: f64,
}

impl JacobiBasis {
    pub fn new(params: JacobiParams, max_degree: usize) -> Self {
        let (recur_a, recur_b) = recurrence_coeffs(params, max_degree);
        JacobiBasis { params, max_degree, recur_a, recur_b, log_norm: params.log_norm() }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.params.pdf(x)
    }

    /// `φ_n(x)` by forward recurrence.
    pub fn eval(&self, n: usize, x: f64) -> Result<f64> {
        if n > self.max_degree {
            return Err(Error::DegreeTooHigh { requested: n, max: self.max_degree });
        }
        let mut buf = vec![0.0; n + 1];
        self.eval_all(x, &mut buf);
        Ok(buf[n])
    }

    /// Writes `φ_0(x), …, φ_{out.len()-1}(x)` into `out`.
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        debug_assert!(out.len() <= self.max_degree + 1);
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        if out.len() > 1 {
            out[1] = (x - self.recur_a[0]) / self.recur_b[1];
        }
        for n in 1..out.len().saturating_sub(1) {
            out[n + 1] =
                ((x - self.recur_a[n]) * out[n] - self.recur_b[n] * out[n - 1]) / self.recur_b[n + 1];
        }
    }

    /// Gauss rule with `nodes` points for `q`, from the same recurrence.
    pub fn gauss_rule(&self, nodes: usize) -> Result<Rule> {
        let (a, b) = recurrence_coeffs(self.params, nodes);
        golub_welsch(&a[..nodes], &b[1..nodes])
    }
}

/// Below this separation the confluent (diagonal) branch is used.
pub const CONFLUENT_EPS: f64 = 1e-8;

/// Rank-`m` kernel `Σ_{k<m} φ_k(x) φ_k(y)` through the Christoffel–Darboux
/// formula `b_m (φ_m(x) φ_{m-1}(y) - φ_{m-1}(x) φ_m(y)) / (x - y)`.
pub fn cd_kernel_1d(basis: &JacobiBasis, m: usize, x: f64, y: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidInput("cd_kernel_1d needs m >= 1".into()));
    }
    if m > basis.max_degree {
        return Err(Error::DegreeTooHigh { requested: m, max: basis.max_degree });
    }
    let mut px = vec![0.0; m + 1];
    basis.eval_all(x, &mut px);
    if (x - y).abs() < CONFLUENT_EPS {
        return Ok(px[..m].iter().map(|v| v * v).sum());
    }
    let mut py = vec![0.0; m + 1];
    basis.eval_all(y, &mut py);
    Ok(basis.recur_b[m] * (px[m] * py[m - 1] - px[m - 1] * py[m]) / (x - y))
}
