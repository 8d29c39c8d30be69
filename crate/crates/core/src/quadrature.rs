//! Quadrature rules on [-1,1].

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A quadrature rule: `∫ f dμ ≈ Σ weights[i]·f(nodes[i])`, nodes ascending.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre rule for Lebesgue measure on [-1,1], by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Double-exponential (tanh-sinh) quadrature of `∫_{-1}^{1} f`.
///
/// `f` receives `(x, 1 + x, 1 - x)` with the complements computed without
/// cancellation, so integrable endpoint singularities are handled.
pub fn tanh_sinh<F: Fn(f64, f64, f64) -> f64>(f: F, step: f64) -> f64 {
    let half_pi = 0.5 * PI;
    let mut sum = 0.0;
    let mut k: i64 = 0;
    loop {
        let t = k as f64 * step;
        let u = half_pi * t.sinh();
        let ch = u.cosh();
        let w = half_pi * t.cosh() / (ch * ch);
        // 1 - tanh(u) = 2 / (1 + e^{2u})
        let one_minus = 2.0 / (1.0 + (2.0 * u).exp());
        let one_plus = 2.0 - one_minus;
        let x = u.tanh();
        if w < 1e-300 || one_minus == 0.0 {
            break;
        }
        sum += w * f(x, one_plus, one_minus);
        if k > 0 {
            // mirrored node: -x, 1+(-x) = one_minus, 1-(-x) = one_plus
            sum += w * f(-x, one_minus, one_plus);
        }
        k += 1;
    }
    sum * step
}

/// Golub–Welsch: nodes and weights of the Gauss rule of the probability
/// measure whose orthonormal recurrence has diagonal `diag` and off-diagonal
/// `off` (`off[i]` couples i and i+1, length `diag.len() - 1`).
///
/// Implicit QL on the Jacobi matrix tracking only the first eigenvector row,
/// O(n²) work and O(n) memory.
pub fn golub_welsch(diag: &[f64], off: &[f64]) -> Result<Rule> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::InvalidInput("golub_welsch: inconsistent lengths".into()));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::NoConvergence(format!("implicit QL at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok(Rule {
        nodes: order.iter().map(|&i| d[i]).collect(),
        weights: order.iter().map(|&i| z[i] * z[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(10);
        // exact for degree <= 19
        for k in 0..20 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            let got = rule.integrate(|x| x.powi(k));
            assert!((got - exact).abs() < 1e-13, "k={k} got={got}");
        }
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫ (1-x)^{-1/2} dx over [-1,1] = 2√2
        let got = tanh_sinh(|_, _, om| om.powf(-0.5), 1.0 / 64.0);
        assert!((got - 2.0 * 2f64.sqrt()).abs() < 1e-12, "{got}");
    }

    #[test]
    fn golub_welsch_reproduces_legendre() {
        // uniform probability on [-1,1]: a_n = 0, b_n = n/sqrt(4n²-1)
        let n = 12;
        let diag = vec![0.0; n];
        let off: Vec<f64> = (1..n)
            .map(|k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            })
            .collect();
        let gw = golub_welsch(&diag, &off).unwrap();
        let gl = gauss_legendre(n);
        for i in 0..n {
            assert!((gw.nodes[i] - gl.nodes[i]).abs() < 1e-13);
            assert!((gw.weights[i] - 0.5 * gl.weights[i]).abs() < 1e-13);
        }
    }
}
