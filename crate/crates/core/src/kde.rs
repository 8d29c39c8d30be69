//! Fixed-bandwidth product-kernel density estimate of the data law, and the
//! kernel-smoothed gradient field built from the same weights.

use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::estimators::LossFn;

/// Compactly supported univariate smoothing kernels on [-1,1], unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingKernel {
    #[default]
    Epanechnikov,
    Biweight,
    Triweight,
}

impl SmoothingKernel {
    pub fn eval(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        let s = 1.0 - u * u;
        match self {
            SmoothingKernel::Epanechnikov => 0.75 * s,
            SmoothingKernel::Biweight => 15.0 / 16.0 * s * s,
            SmoothingKernel::Triweight => 35.0 / 32.0 * s * s * s,
        }
    }

    /// `∫_{-1}^{u} k`.
    pub fn cdf(self, u: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        let (u2, u3) = (u * u, u * u * u);
        match self {
            SmoothingKernel::Epanechnikov => 0.5 + 0.75 * u - 0.25 * u3,
            SmoothingKernel::Biweight => 0.5 + 15.0 / 16.0 * (u - 2.0 / 3.0 * u3 + 0.2 * u3 * u2),
            SmoothingKernel::Triweight => {
                0.5 + 35.0 / 32.0 * (u - u3 + 0.6 * u3 * u2 - u3 * u2 * u2 / 7.0)
            }
        }
    }
}

/// `γ̃(z) = (N h^d)^{-1} Σ_i k((z - z_i)/h)` over the points of a dataset.
#[derive(Debug, Clone)]
pub struct Kde<'a> {
    data: &'a DataSet,
    pub bandwidth: f64,
    pub kernel: SmoothingKernel,
}

/// `h = N^{-1/d}`.
pub fn default_bandwidth(n: usize, d: usize) -> f64 {
    (n as f64).powf(-1.0 / d as f64)
}

impl<'a> Kde<'a> {
    pub fn new(data: &'a DataSet, bandwidth: f64, kernel: SmoothingKernel) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!("bandwidth {bandwidth} must be positive")));
        }
        Ok(Kde { data, bandwidth, kernel })
    }

    pub fn with_default_bandwidth(data: &'a DataSet) -> Self {
        Kde {
            data,
            bandwidth: default_bandwidth(data.len(), data.dim()),
            kernel: SmoothingKernel::default(),
        }
    }

    pub fn data(&self) -> &DataSet {
        self.data
    }

    fn norm(&self) -> f64 {
        1.0 / (self.data.len() as f64 * self.bandwidth.powi(self.data.dim() as i32))
    }

    /// `k((z - z_i)/h)` without normalization; 0 outside the support.
    pub fn weight(&self, z: &[f64], i: usize) -> f64 {
        let mut w = 1.0;
        for (&a, &b) in z.iter().zip(self.data.point(i)) {
            let u = (a - b) / self.bandwidth;
            if u.abs() > 1.0 {
                return 0.0;
            }
            w *= self.kernel.eval(u);
        }
        w
    }

    pub fn density(&self, z: &[f64]) -> f64 {
        let s: f64 = (0..self.data.len()).map(|i| self.weight(z, i)).sum();
        s * self.norm()
    }

    /// `(N h^d)^{-1} Σ_i g_i · k((w - z_i)/h)` for per-item vectors `g_i`
    /// supplied by `item(i, out)`.
    pub fn smooth<F>(&self, w: &[f64], dim: usize, mut item: F) -> Vec<f64>
    where
        F: FnMut(usize, &mut [f64]),
    {
        let mut acc = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        for i in 0..self.data.len() {
            let k = self.weight(w, i);
            if k == 0.0 {
                continue;
            }
            item(i, &mut g);
            acc.iter_mut().zip(&g).for_each(|(a, v)| *a += k * v);
        }
        let c = self.norm();
        acc.iter_mut().for_each(|a| *a *= c);
        acc
    }

    /// `∫_{[-1,1]^d} h^{-d} k((w - z_i)/h) dw`, the part of item `i`'s
    /// smoothing mass that falls inside the cube.
    pub fn cube_mass(&self, i: usize) -> f64 {
        self.data
            .point(i)
            .iter()
            .map(|&z| {
                self.kernel.cdf((1.0 - z) / self.bandwidth) - self.kernel.cdf((-1.0 - z) / self.bandwidth)
            })
            .product()
    }
}

/// Kernel-smoothed gradient field `(N h^d)^{-1} Σ_i ∇L(z_i,θ) k((w - z_i)/h)`.
pub fn smoothed_gradient(kde: &Kde<'_>, loss: &LossFn, theta: &[f64], w: &[f64]) -> Vec<f64> {
    let ds = kde.data();
    kde.smooth(w, theta.len(), |i, out| loss.item_gradient(ds.features(i), ds.label(i), theta, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    #[test]
    fn kernels_have_unit_mass_and_consistent_cdf() {
        let rule = gauss_legendre(20);
        for k in [SmoothingKernel::Epanechnikov, SmoothingKernel::Biweight, SmoothingKernel::Triweight] {
            assert!((rule.integrate(|u| k.eval(u)) - 1.0).abs() < 1e-13);
            assert!(k.cdf(-1.0).abs() < 1e-15 && (k.cdf(1.0) - 1.0).abs() < 1e-15);
            // ∫_{-1}^{0.3} k by an affine change of variables
            let part = 0.65 * rule.integrate(|t| k.eval(-1.0 + 0.65 * (t + 1.0)));
            assert!((k.cdf(0.3) - part).abs() < 1e-13);
        }
    }

    #[test]
    fn single_point_density() {
        let ds = DataSet::new(vec![0.2, -0.1], 2, 2, None, "t").unwrap();
        let kde = Kde::new(&ds, 0.3, SmoothingKernel::Epanechnikov).unwrap();
        let at = kde.density(&[0.2, -0.1]);
        assert!((at - 0.75 * 0.75 / 0.09).abs() < 1e-12);
        assert_eq!(kde.density(&[0.9, 0.9]), 0.0);
    }

    #[test]
    fn constant_gradients_factor_out() {
        let ds = DataSet::new(vec![0.1, 0.15, -0.3, 0.5], 1, 1, None, "t").unwrap();
        let kde = Kde::new(&ds, 0.2, SmoothingKernel::Epanechnikov).unwrap();
        let w = [0.12];
        let g = kde.smooth(&w, 2, |_, out| out.copy_from_slice(&[2.0, -1.0]));
        let dens = kde.density(&w);
        assert!((g[0] - 2.0 * dens).abs() < 1e-12 && (g[1] + dens).abs() < 1e-12);
    }

    #[test]
    fn cube_mass_interior_and_edge() {
        let ds = DataSet::new(vec![0.0, 1.0], 1, 1, None, "t").unwrap();
        let kde = Kde::new(&ds, 0.1, SmoothingKernel::Epanechnikov).unwrap();
        assert!((kde.cube_mass(0) - 1.0).abs() < 1e-15);
        assert!((kde.cube_mass(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_bandwidth() {
        let ds = DataSet::new(vec![0.0], 1, 1, None, "t").unwrap();
        assert!(Kde::new(&ds, 0.0, SmoothingKernel::Epanechnikov).is_err());
    }
}
