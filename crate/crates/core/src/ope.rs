//! Multivariate orthogonal polynomial ensemble kernel on [-1,1]^d for a
//! product reference density `q = q_1 ⊗ … ⊗ q_d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobi::{cd_kernel_1d, JacobiBasis, JacobiParams};

/// Exponents of a monomial `x_1^{e_1} ⋯ x_d^{e_d}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }
}

// All compositions of `total` into `d` parts, ascending lexicographic with
// coordinate 0 most significant.
fn compositions(d: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>, cap: usize) {
    if out.len() >= cap {
        return;
    }
    if prefix.len() + 1 == d {
        prefix.push(total);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in 0..=total {
        prefix.push(first);
        compositions(d, total - first, prefix, out, cap);
        prefix.pop();
        if out.len() >= cap {
            return;
        }
    }
}

/// First `p` multi-indices in graded lexical order: by total degree, then
/// ascending lexicographic with coordinate 0 most significant.
pub fn graded_lex_indices(d: usize, p: usize) -> Vec<MultiIndex> {
    assert!(d >= 1 && p >= 1);
    let mut out = Vec::with_capacity(p);
    let mut total = 0;
    while out.len() < p {
        compositions(d, total, &mut Vec::with_capacity(d), &mut out, p);
        total += 1;
    }
    out
}

/// The full box `{0..m-1}^d` in graded lexical order (`p = m^d`).
pub fn tensor_box_indices(d: usize, m: usize) -> Vec<MultiIndex> {
    assert!(d >= 1 && m >= 1);
    let mut all = Vec::with_capacity(m.pow(d as u32));
    let max_total = d * (m - 1);
    for total in 0..=max_total {
        let mut layer = Vec::new();
        compositions(d, total, &mut Vec::with_capacity(d), &mut layer, usize::MAX);
        all.extend(layer.into_iter().filter(|mi| mi.0.iter().all(|&e| e < m)));
    }
    all
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexSet {
    /// The first `p` monomials in graded lexical order.
    GradedLex,
    /// `{0..m-1}^d` with `p = m^d`; the kernel factorizes over coordinates.
    TensorBox,
}

/// The rank-`p` OPE kernel `K(x,y) = Σ_{k<p} φ_k(x) φ_k(y)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpeSpec {
    pub d: usize,
    pub indices: Vec<MultiIndex>,
    pub bases: Vec<JacobiBasis>,
    /// Per-axis size `m` when the indices are the box `{0..m-1}^d`.
    box_side: Option<usize>,
}

impl OpeSpec {
    /// Graded-lex OPE of rank `p` for the product of the given Jacobi densities.
    pub fn new(params: &[JacobiParams], p: usize) -> Result<Self> {
        if params.is_empty() || p == 0 {
            return Err(Error::InvalidInput("OPE needs d >= 1 and p >= 1".into()));
        }
        Self::from_indices(params, graded_lex_indices(params.len(), p))
    }

    pub fn with_index_set(params: &[JacobiParams], p: usize, set: IndexSet) -> Result<Self> {
        match set {
            IndexSet::GradedLex => Self::new(params, p),
            IndexSet::TensorBox => {
                let d = params.len();
                let m = (p as f64).powf(1.0 / d as f64).round() as usize;
                if m == 0 || m.pow(d as u32) != p {
                    return Err(Error::InvalidInput(format!("p={p} is not a perfect {d}-th power")));
                }
                Self::from_indices(params, tensor_box_indices(d, m))
            }
        }
    }

    pub fn from_indices(params: &[JacobiParams], indices: Vec<MultiIndex>) -> Result<Self> {
        let d = params.len();
        if indices.is_empty() || indices.iter().any(|mi| mi.0.len() != d) {
            return Err(Error::InvalidInput("multi-index dimension mismatch".into()));
        }
        // the CD fast path needs φ_m, one degree above the largest exponent
        let bases = (0..d)
            .map(|j| {
                let top = indices.iter().map(|mi| mi.0[j]).max().unwrap_or(0);
                JacobiBasis::new(params[j], top + 1)
            })
            .collect();
        let p = indices.len();
        let m = (p as f64).powf(1.0 / d as f64).round() as usize;
        let is_box = m >= 1
            && m.pow(d as u32) == p
            && indices.iter().all(|mi| mi.0.iter().all(|&e| e < m));
        Ok(OpeSpec { d, indices, bases, box_side: is_box.then_some(m) })
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn params(&self) -> Vec<JacobiParams> {
        self.bases.iter().map(|b| b.params).collect()
    }

    /// Side `m` when `K` factorizes as `∏_j K_{q_j}^{(m)}`.
    pub fn tensor_side(&self) -> Option<usize> {
        self.box_side
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::InvalidInput(format!("point has {} coords, expected {}", x.len(), self.d)));
        }
        for (coord, &value) in x.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::OutOfCube { coord, value });
            }
        }
        Ok(())
    }

    /// `q(x) = ∏_j q_j(x_j)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.bases.iter().zip(x).map(|(b, &v)| b.pdf(v)).product()
    }

    /// Writes `φ_0(x), …, φ_{p-1}(x)` into `out` (length `p`).
    pub fn features(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_point(x)?;
        let tables: Vec<Vec<f64>> = self
            .bases
            .iter()
            .zip(x)
            .map(|(b, &v)| {
                let mut t = vec![0.0; b.max_degree + 1];
                b.eval_all(v, &mut t);
                t
            })
            .collect();
        for (o, mi) in out.iter_mut().zip(&self.indices) {
            *o = mi.0.iter().zip(&tables).map(|(&e, t)| t[e]).product();
        }
        Ok(())
    }

    pub fn eval_phi(&self, k: usize, x: &[f64]) -> Result<f64> {
        if k >= self.rank() {
            return Err(Error::InvalidInput(format!("basis index {k} >= p={}", self.rank())));
        }
        self.check_point(x)?;
        let mut v = 1.0;
        for ((b, &e), &xj) in self.bases.iter().zip(&self.indices[k].0).zip(x) {
            v *= b.eval(e, xj)?;
        }
        Ok(v)
    }

    /// `K(x,y) = Σ_{k<p} φ_k(x) φ_k(y)`, summed in index order.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let p = self.rank();
        let mut fx = vec![0.0; p];
        let mut fy = vec![0.0; p];
        self.features(x, &mut fx)?;
        self.features(y, &mut fy)?;
        Ok(fx.iter().zip(&fy).map(|(a, b)| a * b).sum())
    }

    /// `∏_j K_{q_j}^{(m)}(x_j, y_j)` through Christoffel–Darboux; only for
    /// tensor-box index sets.
    pub fn kernel_tensor_cd(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let m = self
            .box_side
            .ok_or_else(|| Error::InvalidInput("index set is not a tensor box".into()))?;
        self.check_point(x)?;
        self.check_point(y)?;
        let mut v = 1.0;
        for ((b, &xj), &yj) in self.bases.iter().zip(x).zip(y) {
            v *= cd_kernel_1d(b, m, xj, yj)?;
        }
        Ok(v)
    }

    /// `K(x,x) = Σ_{k<p} φ_k(x)²`.
    pub fn kernel_diag(&self, x: &[f64]) -> Result<f64> {
        let mut fx = vec![0.0; self.rank()];
        self.features(x, &mut fx)?;
        Ok(fx.iter().map(|v| v * v).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(v: &[&[usize]]) -> Vec<MultiIndex> {
        v.iter().map(|s| MultiIndex(s.to_vec())).collect()
    }

    #[test]
    fn graded_lex_examples() {
        assert_eq!(graded_lex_indices(1, 4), idx(&[&[0], &[1], &[2], &[3]]));
        assert_eq!(graded_lex_indices(2, 4), idx(&[&[0, 0], &[0, 1], &[1, 0], &[0, 2]]));
        assert_eq!(graded_lex_indices(3, 1), idx(&[&[0, 0, 0]]));
    }

    #[test]
    fn graded_lex_is_ordered_and_distinct() {
        let ix = graded_lex_indices(3, 40);
        assert_eq!(ix.len(), 40);
        for w in ix.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!(a.total_degree() < b.total_degree() || a.total_degree() == b.total_degree() && a < b);
        }
    }

    #[test]
    fn box_indices() {
        let ix = tensor_box_indices(2, 2);
        assert_eq!(ix, idx(&[&[0, 0], &[0, 1], &[1, 0], &[1, 1]]));
        assert_eq!(tensor_box_indices(3, 3).len(), 27);
    }

    #[test]
    fn phi_values() {
        let params = [JacobiParams::default(); 2];
        let spec = OpeSpec::with_index_set(&params, 4, IndexSet::TensorBox).unwrap();
        let x = [0.5, 0.9];
        assert_eq!(spec.eval_phi(0, &x).unwrap(), 1.0);
        let k10 = spec.indices.iter().position(|m| m.0 == vec![1, 0]).unwrap();
        assert!((spec.eval_phi(k10, &x).unwrap() - 3f64.sqrt() * 0.5).abs() < 1e-14);
        let k11 = spec.indices.iter().position(|m| m.0 == vec![1, 1]).unwrap();
        assert!((spec.eval_phi(k11, &[0.3, -0.7]).unwrap() - 3.0 * 0.3 * -0.7).abs() < 1e-14);
        assert!(matches!(spec.eval_phi(0, &[1.5, 0.0]), Err(Error::OutOfCube { .. })));
    }

    #[test]
    fn rank_one_kernel_is_one() {
        let spec = OpeSpec::new(&[JacobiParams::new(0.2, -0.3)], 1).unwrap();
        assert_eq!(spec.kernel(&[0.1], &[-0.9]).unwrap(), 1.0);
        assert_eq!(spec.kernel_diag(&[0.4]).unwrap(), 1.0);
    }

    #[test]
    fn tensor_fast_path_matches_sum() {
        let params = [JacobiParams::new(0.1, -0.2), JacobiParams::new(-0.5, 0.5)];
        let spec = OpeSpec::with_index_set(&params, 9, IndexSet::TensorBox).unwrap();
        let (x, y) = ([0.3, -0.6], [-0.2, 0.8]);
        let a = spec.kernel(&x, &y).unwrap();
        let b = spec.kernel_tensor_cd(&x, &y).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        // graded-lex prefix of size 4 in d=2 is not a box
        assert!(OpeSpec::new(&params, 4).unwrap().tensor_side().is_none());
    }

    #[test]
    fn kernel_symmetric() {
        let spec = OpeSpec::new(&[JacobiParams::new(0.3, 0.1); 3], 10).unwrap();
        let (x, y) = ([0.1, 0.2, -0.3], [0.9, -0.5, 0.0]);
        assert_eq!(spec.kernel(&x, &y).unwrap(), spec.kernel(&y, &x).unwrap());
    }
}
