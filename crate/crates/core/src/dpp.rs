//! Discrete projection DPPs over the dataset.
//!
//! The OPE kernel is reweighted by `√(q/γ̃)`, restricted to the data points,
//! and its spectrum saturated to an exact rank-`p` projection. Sampling uses
//! the sequential chain rule on the `N×p` factor in O(Np²).
//!
//! Measure convention: the restricted matrix lives on `L²(γ̂_N)`; we
//! eigendecompose `(1/N)·K` and work with the counting-measure projection
//! `P = V Vᵀ`. The weight-space diagonal is then `N·P_ii`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::kde::Kde;
use crate::ope::OpeSpec;
use crate::par::Execution;

/// Eigengaps below this raise the tie warning.
pub const EIGENGAP_TOL: f64 = 1e-12;
/// The sampler gives up when the residual mass drops below this.
pub const RESIDUAL_FLOOR: f64 = 1e-14;

/// Points closer than `1/N` to a face of the cube have `q` evaluated at
/// distance `1/N` from it. A Jacobi density is 0 or infinite on the faces, and
/// `1/N` is the resolution of the empirical measure.
pub fn boundary_inset(n: usize) -> f64 {
    1.0 / n.max(1) as f64
}

/// `√(q(z_i)/γ̃(z_i))` for every data point.
pub fn importance_weights(spec: &OpeSpec, kde: &Kde<'_>, ds: &DataSet, exec: Execution) -> Result<Vec<f64>> {
    if ds.dim() != spec.d {
        return Err(Error::InvalidInput(format!("dataset d={} but OPE d={}", ds.dim(), spec.d)));
    }
    let eps = boundary_inset(ds.len());
    let w = exec.map(ds.len(), |i| {
        let z = ds.point(i);
        let inner: Vec<f64> = z.iter().map(|v| v.clamp(-1.0 + eps, 1.0 - eps)).collect();
        (spec.density(&inner) / kde.density(z)).sqrt()
    });
    if let Some(i) = w.iter().position(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::NonFinite(format!("importance weight of item {i} = {}", w[i])));
    }
    Ok(w)
}

/// Row `i` is `√(q(z_i)/γ̃(z_i))·(φ_0(z_i), …, φ_{p-1}(z_i))`, so that the
/// restricted kernel matrix is `F Fᵀ`.
pub fn reweighted_features(spec: &OpeSpec, kde: &Kde<'_>, ds: &DataSet, exec: Execution) -> Result<DMatrix<f64>> {
    let p = spec.rank();
    let n = ds.len();
    let weights = importance_weights(spec, kde, ds, exec)?;
    let mut rows = vec![0.0; n * p];
    let failures = std::sync::Mutex::new(None);
    exec.fill_chunks(&mut rows, p, |i, row| {
        if let Err(e) = spec.features(ds.point(i), row) {
            failures.lock().unwrap().get_or_insert((i, e));
            return;
        }
        row.iter_mut().for_each(|v| *v *= weights[i]);
    });
    if let Some((i, e)) = failures.into_inner().unwrap() {
        return Err(Error::InvalidInput(format!("item {i}: {e}")));
    }
    Ok(DMatrix::from_row_slice(n, p, &rows))
}

/// The `N×N` matrix `K_{q,γ̃}(z_i, z_j)`.
#[derive(Debug, Clone)]
pub struct RestrictedKernel {
    pub matrix: DMatrix<f64>,
}

/// Dense assembly, O(N²p). Entries are summed in basis-index order so the
/// matrix is exactly symmetric.
pub fn assemble_kernel_matrix(spec: &OpeSpec, kde: &Kde<'_>, ds: &DataSet, exec: Execution) -> Result<RestrictedKernel> {
    let f = reweighted_features(spec, kde, ds, exec)?;
    let n = ds.len();
    let p = spec.rank();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| f.row(i).iter().copied().collect()).collect();
    let mut flat = vec![0.0; n * n];
    exec.fill_chunks(&mut flat, n, |i, out| {
        for (j, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..p {
                s += rows[i][k] * rows[j][k];
            }
            *o = s;
        }
    });
    if let Some(pos) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("kernel entry ({}, {})", pos / n, pos % n)));
    }
    Ok(RestrictedKernel { matrix: DMatrix::from_row_slice(n, n, &flat) })
}

/// Rank-`p` orthogonal projection `P = V Vᵀ` over `N` items.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionKernel {
    n: usize,
    p: usize,
    /// `V` row-major, `N×p`, orthonormal columns.
    rows: Vec<f64>,
    marginals: Vec<f64>,
    /// Leading eigenvalues of the operator `(1/N)·K` before saturation.
    pub spectrum: Vec<f64>,
    /// Set when the gap between the p-th and (p+1)-th eigenvalue is below
    /// [`EIGENGAP_TOL`]; the eigenvectors inside the tie are then arbitrary.
    pub eigengap_warning: bool,
}

impl ProjectionKernel {
    /// From a factor with orthonormal columns.
    pub fn from_factor(v: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = v.shape();
        if p == 0 || n < p {
            return Err(Error::InvalidInput(format!("factor of shape {n}x{p}")));
        }
        let mut rows = vec![0.0; n * p];
        for i in 0..n {
            for k in 0..p {
                rows[i * p + k] = v[(i, k)];
            }
        }
        let marginals = rows.chunks(p).map(|r| r.iter().map(|x| x * x).sum()).collect();
        Ok(ProjectionKernel { n, p, rows, marginals, spectrum: Vec::new(), eigengap_warning: false })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn rank(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.p..(i + 1) * self.p]
    }

    /// `P_ii`, the inclusion probability of item `i`.
    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    /// `P_ij = ⟨V_i, V_j⟩`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
    }

    pub fn factor(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.p, &self.rows)
    }

    /// `‖VᵀV - I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        let v = self.factor();
        let g = v.transpose() * &v;
        let mut worst = 0.0f64;
        for a in 0..self.p {
            for b in 0..self.p {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g[(a, b)] - target).abs());
            }
        }
        worst
    }

    /// Spectral distance `‖(1/N)·K - P‖₂` between the restricted kernel and
    /// its saturation; `None` when the spectrum was not recorded.
    pub fn saturation_gap(&self) -> Option<f64> {
        if self.spectrum.is_empty() {
            return None;
        }
        let gap = self
            .spectrum
            .iter()
            .enumerate()
            .map(|(k, &l)| if k < self.p { (l - 1.0).abs() } else { l.abs() })
            .fold(0.0, f64::max);
        Some(gap)
    }

    /// Text artifact: a comment line, `n,p`, then one line per item with
    /// the `p` factor entries followed by the marginal. Floats use the
    /// shortest round-trip representation, so reading back is bit-exact.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# dppsgd projection kernel v1")?;
        writeln!(w, "{},{}", self.n, self.p)?;
        for i in 0..self.n {
            let mut line: Vec<String> = self.row(i).iter().map(|v| format!("{v:e}")).collect();
            line.push(format!("{:e}", self.marginals[i]));
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map(|s| !s.trim_start().starts_with('#') && !s.trim().is_empty()).unwrap_or(true)
        });
        let parse_err = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let (hl, header) = lines.next().ok_or_else(|| Error::InvalidInput("empty kernel artifact".into()))?;
        let header = header?;
        let (n, p) = header
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| parse_err(hl, format!("bad header {header:?}")))?;
        let mut rows = Vec::with_capacity(n * p);
        let mut marginals = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines.next().ok_or_else(|| Error::InvalidInput("truncated kernel artifact".into()))?;
            let line = line?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(ln, e.to_string()))?;
            if vals.len() != p + 1 {
                return Err(parse_err(ln, format!("expected {} fields, got {}", p + 1, vals.len())));
            }
            rows.extend_from_slice(&vals[..p]);
            marginals.push(vals[p]);
        }
        if n < p || p == 0 {
            return Err(Error::InvalidInput(format!("artifact shape {n}x{p}")));
        }
        Ok(ProjectionKernel { n, p, rows, marginals, spectrum: Vec::new(), eigengap_warning: false })
    }
}

fn sorted_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// Saturates the dense restricted kernel: eigendecompose `(1/N)·K`, keep the
/// top-`p` eigenvectors, and set their eigenvalues to one.
pub fn saturate(rk: &RestrictedKernel, p: usize) -> Result<ProjectionKernel> {
    let n = rk.matrix.nrows();
    if p == 0 || n < p {
        return Err(Error::InvalidInput(format!("cannot saturate N={n} to rank p={p}")));
    }
    let eig = SymmetricEigen::new(&rk.matrix / n as f64);
    let order = sorted_desc(eig.eigenvalues.as_slice());
    let mut v = DMatrix::zeros(n, p);
    for (c, &k) in order.iter().take(p).enumerate() {
        v.set_column(c, &eig.eigenvectors.column(k));
    }
    let mut pk = ProjectionKernel::from_factor(&v)?;
    pk.spectrum = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if n > p && pk.spectrum[p - 1] - pk.spectrum[p] < EIGENGAP_TOL {
        log::warn!("eigengap at rank {p} below {EIGENGAP_TOL:e}; selection inside the tie is arbitrary");
        pk.eigengap_warning = true;
    }
    Ok(pk)
}

/// Saturation through the `N×p` factor `F` with `K = F Fᵀ`.
///
/// `(1/N)·K` has rank at most `p`, so its top-`p` eigenspace is the column
/// space of `F`; an orthonormal basis comes from a thin QR in O(Np²). The
/// nonzero spectrum is that of the `p×p` Gram matrix `FᵀF/N`.
pub fn saturate_factored(features: &DMatrix<f64>) -> Result<ProjectionKernel> {
    let (n, p) = features.shape();
    if p == 0 || n < p {
        return Err(Error::InvalidInput(format!("cannot saturate N={n} to rank p={p}")));
    }
    let gram = features.transpose() * features / n as f64;
    let eig = SymmetricEigen::new(gram);
    let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    spectrum.sort_by(|a, b| b.total_cmp(a));

    let q = features.clone().qr().q();
    let mut pk = ProjectionKernel::from_factor(&q)?;
    if !(spectrum[p - 1] > EIGENGAP_TOL) {
        log::warn!("restricted kernel has rank below {p}; projection is not unique");
        pk.eigengap_warning = true;
    }
    pk.spectrum = spectrum;
    Ok(pk)
}

/// Reweight, restrict and saturate in one O(Np²) pass.
pub fn build_projection_kernel(spec: &OpeSpec, kde: &Kde<'_>, ds: &DataSet, exec: Execution) -> Result<ProjectionKernel> {
    let f = reweighted_features(spec, kde, ds, exec)?;
    saturate_factored(&f)
}

/// A minibatch: distinct item indices and their estimator weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub items: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Sequential chain-rule sampler for a projection DPP with reusable scratch.
///
/// Step `t` draws item `i` with probability `‖r_i‖²/(p - t)` where `r_i` is
/// the residual of row `i` orthogonal to the rows already chosen, then
/// projects the chosen direction out of every row.
pub struct DppSampler<'a> {
    kernel: &'a ProjectionKernel,
    scratch: Vec<f64>,
    norms: Vec<f64>,
}

impl<'a> DppSampler<'a> {
    pub fn new(kernel: &'a ProjectionKernel) -> Self {
        DppSampler {
            kernel,
            scratch: vec![0.0; kernel.rows.len()],
            norms: vec![0.0; kernel.n],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Minibatch> {
        let (n, p) = (self.kernel.n, self.kernel.p);
        self.scratch.copy_from_slice(&self.kernel.rows);
        self.norms.copy_from_slice(&self.kernel.marginals);
        let mut items = Vec::with_capacity(p);
        let mut dir = vec![0.0; p];
        for _ in 0..p {
            let total: f64 = self.norms.iter().sum();
            if !(total > RESIDUAL_FLOOR) {
                return Err(Error::Degenerate(format!(
                    "residual mass {total:e} exhausted after {} of {p} items",
                    items.len()
                )));
            }
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in self.norms.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the running sum
            let chosen = chosen.unwrap_or_else(|| {
                (0..n).rev().find(|&i| self.norms[i] > 0.0).expect("positive total mass")
            });
            items.push(chosen);

            let row = &self.scratch[chosen * p..(chosen + 1) * p];
            let len = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter_mut().zip(row).for_each(|(d, &r)| *d = r / len);
            for (i, r) in self.scratch.chunks_mut(p).enumerate() {
                let c: f64 = r.iter().zip(&dir).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(&dir).for_each(|(a, b)| *a -= c * b);
                self.norms[i] = r.iter().map(|v| v * v).sum::<f64>();
            }
            self.norms[chosen] = 0.0;
        }
        let weights = items
            .iter()
            .map(|&i| 1.0 / (n as f64 * self.kernel.marginals[i]))
            .collect();
        Ok(Minibatch { items, weights })
    }
}

/// One exact draw from the projection DPP with kernel `pk`.
pub fn sample_projection_dpp<R: Rng + ?Sized>(pk: &ProjectionKernel, rng: &mut R) -> Result<Minibatch> {
    DppSampler::new(pk).sample(rng)
}

/// Largest grid accepted by [`GridOpe`].
pub const MAX_GRID_NODES: usize = 1_000_000;

/// The continuous OPE discretized on a tensor Gauss–Jacobi grid.
///
/// Features `√ω_m φ_k(x_m)` are re-orthonormalized (QR) so the discrete kernel
/// is an exact projection over the nodes.
#[derive(Debug, Clone)]
pub struct GridOpe {
    d: usize,
    nodes: Vec<f64>,
    /// Product quadrature weights for `q` (they sum to 1).
    pub weights: Vec<f64>,
    pub kernel: ProjectionKernel,
}

impl GridOpe {
    pub fn new(spec: &OpeSpec, nodes_per_axis: usize, exec: Execution) -> Result<Self> {
        let d = spec.d;
        if d > 3 {
            return Err(Error::InvalidInput(format!("grid sampler supports d <= 3, got {d}")));
        }
        let total = (nodes_per_axis as u128).pow(d as u32);
        if total > MAX_GRID_NODES as u128 {
            return Err(Error::InvalidInput(format!(
                "grid of {nodes_per_axis}^{d} nodes exceeds {MAX_GRID_NODES}"
            )));
        }
        let total = total as usize;
        let p = spec.rank();
        if total < p {
            return Err(Error::InvalidInput(format!("grid of {total} nodes is smaller than p={p}")));
        }
        let rules = spec
            .bases
            .iter()
            .map(|b| b.gauss_rule(nodes_per_axis))
            .collect::<Result<Vec<_>>>()?;

        let mut nodes = vec![0.0; total * d];
        let mut weights = vec![1.0; total];
        for m in 0..total {
            let mut rem = m;
            for j in (0..d).rev() {
                let k = rem % nodes_per_axis;
                rem /= nodes_per_axis;
                nodes[m * d + j] = rules[j].nodes[k];
                weights[m] *= rules[j].weights[k];
            }
        }
        let mut feats = vec![0.0; total * p];
        exec.fill_chunks(&mut feats, p, |m, row| {
            spec.features(&nodes[m * d..(m + 1) * d], row).expect("Gauss nodes lie in the cube");
            let s = weights[m].sqrt();
            row.iter_mut().for_each(|v| *v *= s);
        });
        let f = DMatrix::from_row_slice(total, p, &feats);
        let q = f.qr().q();
        let kernel = ProjectionKernel::from_factor(&q)?;
        Ok(GridOpe { d, nodes, weights, kernel })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, m: usize) -> &[f64] {
        &self.nodes[m * self.d..(m + 1) * self.d]
    }

    /// Node indices of one draw.
    pub fn sample_nodes<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        Ok(sample_projection_dpp(&self.kernel, rng)?.items)
    }

    /// One draw, mapped back to points of [-1,1]^d.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        Ok(self.sample_nodes(rng)?.into_iter().map(|m| self.node(m).to_vec()).collect())
    }
}

/// Builds the grid and draws one OPE sample of `p` points.
pub fn grid_ope_sampler<R: Rng + ?Sized>(spec: &OpeSpec, nodes_per_axis: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    GridOpe::new(spec, nodes_per_axis, Execution::default())?.sample(rng)
}
