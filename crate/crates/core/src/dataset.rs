//! Datasets on the cube [-1,1]^d: synthetic generators, LIBSVM ingestion,
//! affine scaling and empirical marginal moments.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Margin used when scaling real data into the cube.
pub const DEFAULT_MARGIN: f64 = 0.05;

/// Affine column map `x ↦ lo + (x - min)/(max - min)·(hi - lo)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub min: f64,
    pub max: f64,
    pub margin: f64,
}

impl ColumnMap {
    pub fn is_constant(&self) -> bool {
        !(self.max > self.min)
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.is_constant() {
            return 0.0;
        }
        let lo = -1.0 + self.margin;
        let hi = 1.0 - self.margin;
        lo + (x - self.min) / (self.max - self.min) * (hi - lo)
    }

    pub fn invert(&self, y: f64) -> f64 {
        if self.is_constant() {
            return self.min;
        }
        let lo = -1.0 + self.margin;
        let hi = 1.0 - self.margin;
        self.min + (y - lo) / (hi - lo) * (self.max - self.min)
    }
}

/// `N` points in `d` dimensions, row-major.
///
/// `points` holds what the sampling kernel sees. The first `feature_dim`
/// columns are the regression features; when `feature_dim < dim` the last
/// column is the label fused into the point.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    points: Vec<f64>,
    n: usize,
    dim: usize,
    feature_dim: usize,
    labels: Option<Vec<f64>>,
    pub name: String,
    pub scaling: Option<Vec<ColumnMap>>,
    /// Columns that were constant when scaled (mapped to 0).
    pub constant_columns: Vec<usize>,
}

impl DataSet {
    pub fn new(
        points: Vec<f64>,
        dim: usize,
        feature_dim: usize,
        labels: Option<Vec<f64>>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "point buffer of length {} is not a non-empty multiple of d={dim}",
                points.len()
            )));
        }
        if feature_dim > dim || feature_dim + 1 < dim {
            return Err(Error::InvalidInput(format!(
                "feature_dim {feature_dim} must be d or d-1 (d={dim})"
            )));
        }
        let n = points.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidInput(format!("{} labels for {n} points", l.len())));
            }
        }
        if feature_dim < dim && labels.is_none() {
            return Err(Error::InvalidInput("fused label column without labels".into()));
        }
        Ok(DataSet {
            points,
            n,
            dim,
            feature_dim,
            labels,
            name: name.into(),
            scaling: None,
            constant_columns: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn has_fused_label(&self) -> bool {
        self.feature_dim < self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..i * self.dim + self.feature_dim]
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels.as_ref().map_or(0.0, |l| l[i])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().skip(j).step_by(self.dim).copied()
    }

    /// True when every coordinate lies in [-1,1].
    pub fn in_cube(&self) -> bool {
        self.points.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    /// Drops the fused label column, keeping labels alongside.
    pub fn features_only(&self) -> DataSet {
        if !self.has_fused_label() {
            return self.clone();
        }
        let points = (0..self.n).flat_map(|i| self.features(i).iter().copied()).collect();
        DataSet {
            points,
            n: self.n,
            dim: self.feature_dim,
            feature_dim: self.feature_dim,
            labels: self.labels.clone(),
            name: self.name.clone(),
            scaling: self.scaling.as_ref().map(|s| s[..self.feature_dim].to_vec()),
            constant_columns: self
                .constant_columns
                .iter()
                .copied()
                .filter(|&c| c < self.feature_dim)
                .collect(),
        }
    }

    /// Rows `idx` as a new dataset.
    pub fn subset(&self, idx: &[usize]) -> DataSet {
        let points = idx.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        DataSet {
            points,
            n: idx.len(),
            dim: self.dim,
            feature_dim: self.feature_dim,
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            name: self.name.clone(),
            scaling: self.scaling.clone(),
            constant_columns: self.constant_columns.clone(),
        }
    }

    /// CSV with header `x0,…,x{f-1},y` (features then label).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.feature_dim).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},y", header.join(","))?;
        for i in 0..self.n {
            let row: Vec<String> = self.features(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{},{}", row.join(","), self.label(i))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureLaw {
    Uniform,
    GaussianMixture2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Total dimension; features live in `[-1,1]^{d-1}`.
    pub d: usize,
    pub feature_law: FeatureLaw,
    pub theta_true: Vec<f64>,
    pub noise_sd: f64,
    pub task: Task,
    pub seed: u64,
    /// Mixture components sit at `±mixture_offset·1`.
    pub mixture_offset: f64,
    pub mixture_sd: f64,
}

impl SyntheticConfig {
    pub fn new(n: usize, d: usize, feature_law: FeatureLaw, task: Task, seed: u64) -> Self {
        SyntheticConfig {
            n,
            d,
            feature_law,
            theta_true: vec![1.0; d.saturating_sub(1)],
            noise_sd: 0.1,
            task,
            seed,
            mixture_offset: 0.5,
            mixture_sd: 0.15,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidInput(format!("d={} leaves no feature column", self.d)));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("N must be positive".into()));
        }
        if self.theta_true.len() != self.d - 1 {
            return Err(Error::InvalidInput(format!(
                "theta_true has length {}, expected {}",
                self.theta_true.len(),
                self.d - 1
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidInput("noise_sd must be >= 0".into()));
        }
        if self.feature_law == FeatureLaw::GaussianMixture2
            && !(self.mixture_offset > 0.0 && self.mixture_offset < 1.0 && self.mixture_sd > 0.0)
        {
            return Err(Error::InvalidInput("mixture offset must lie in (0,1), sd > 0".into()));
        }
        Ok(())
    }
}

/// Synthetic regression or classification data.
///
/// Linear task: `y = ⟨x, θ_true⟩ + ε` rescaled by `‖y‖_∞`, fused as the last
/// point column. Logistic task: `y = sign(⟨x, θ_true⟩ + ε)` kept aside, and the
/// points are the features alone.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<DataSet> {
    cfg.validate()?;
    let f = cfg.d - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let comp = Normal::new(0.0, cfg.mixture_sd).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut x = vec![0.0; cfg.n * f];
    for row in x.chunks_mut(f) {
        match cfg.feature_law {
            FeatureLaw::Uniform => row.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0)),
            FeatureLaw::GaussianMixture2 => loop {
                let c = if rng.random::<bool>() { cfg.mixture_offset } else { -cfg.mixture_offset };
                row.iter_mut().for_each(|v| *v = c + comp.sample(&mut rng));
                if row.iter().all(|v| (-1.0..=1.0).contains(v)) {
                    break;
                }
            },
        }
    }
    let mut y: Vec<f64> = x
        .chunks(f)
        .map(|row| {
            let clean: f64 = row.iter().zip(&cfg.theta_true).map(|(a, b)| a * b).sum();
            clean + if cfg.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 }
        })
        .collect();

    let name = format!("synthetic-{:?}-{:?}-d{}-n{}", cfg.task, cfg.feature_law, cfg.d, cfg.n)
        .to_lowercase();
    match cfg.task {
        Task::Linear => {
            let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if ymax > 0.0 {
                y.iter_mut().for_each(|v| *v /= ymax);
            }
            let points = x
                .chunks(f)
                .zip(&y)
                .flat_map(|(row, &yi)| row.iter().copied().chain(std::iter::once(yi)))
                .collect();
            DataSet::new(points, cfg.d, f, Some(y), name)
        }
        Task::Logistic => {
            y.iter_mut().for_each(|v| *v = if *v >= 0.0 { 1.0 } else { -1.0 });
            DataSet::new(x, f, f, Some(y), name)
        }
    }
}

/// Parses LIBSVM text (`label idx:val idx:val …`, 1-based increasing indices)
/// into a dense dataset. With `n_features = None` the width is the largest
/// index seen. Blank lines and `#` comments are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<DataSet> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label {label_tok:?}"),
        })?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad index in {tok:?}"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad value in {tok:?}"),
            })?;
            if idx == 0 || idx <= last {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("index {idx} not increasing (previous {last})"),
                });
            }
            if let Some(nf) = n_features {
                if idx > nf {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("index {idx} exceeds {nf} features"),
                    });
                }
            }
            last = idx;
            row.push((idx - 1, val));
        }
        width = width.max(last);
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no data lines".into()));
    }
    let width = n_features.unwrap_or(width).max(1);
    let mut points = vec![0.0; rows.len() * width];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            points[i * width + j] = v;
        }
    }
    DataSet::new(points, width, width, Some(labels), "libsvm")
}

/// Maps the 26 letter classes to ±1: classes 1–13 against 14–26.
pub fn binarize_letter(ds: &DataSet) -> Result<DataSet> {
    let labels = ds
        .labels()
        .ok_or_else(|| Error::InvalidInput("dataset has no labels".into()))?;
    let mut out = Vec::with_capacity(labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if l.fract() != 0.0 || !(1.0..=26.0).contains(&l) {
            return Err(Error::InvalidInput(format!("row {i}: label {l} is not in 1..26")));
        }
        out.push(if l <= 13.0 { 1.0 } else { -1.0 });
    }
    let mut res = DataSet::new(ds.points.clone(), ds.dim, ds.feature_dim, Some(out), ds.name.clone())?;
    res.scaling = ds.scaling.clone();
    res.constant_columns = ds.constant_columns.clone();
    Ok(res)
}

/// Column maps fitted on `ds` for the given margin.
pub fn fit_scaling(ds: &DataSet, margin: f64) -> Result<Vec<ColumnMap>> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidInput(format!("margin {margin} must lie in [0,1)")));
    }
    (0..ds.dim)
        .map(|j| {
            let (min, max) = ds
                .column(j)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if !min.is_finite() || !max.is_finite() {
                return Err(Error::NonFinite(format!("column {j}")));
            }
            Ok(ColumnMap { min, max, margin })
        })
        .collect()
}

/// Applies previously fitted column maps (e.g. train maps to test data).
/// Values outside the fitted range are clipped to the cube.
pub fn apply_scaling(ds: &DataSet, maps: &[ColumnMap]) -> Result<DataSet> {
    if maps.len() != ds.dim {
        return Err(Error::InvalidInput(format!("{} maps for d={}", maps.len(), ds.dim)));
    }
    let points: Vec<f64> = ds
        .points
        .chunks(ds.dim)
        .flat_map(|row| row.iter().zip(maps).map(|(&v, m)| m.apply(v).clamp(-1.0, 1.0)))
        .collect();
    let labels = if ds.has_fused_label() {
        Some(points.iter().skip(ds.dim - 1).step_by(ds.dim).copied().collect())
    } else {
        ds.labels.clone()
    };
    let mut out = DataSet::new(points, ds.dim, ds.feature_dim, labels, ds.name.clone())?;
    out.constant_columns = maps
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_constant())
        .map(|(j, _)| j)
        .collect();
    if !out.constant_columns.is_empty() {
        log::warn!("constant columns mapped to 0: {:?}", out.constant_columns);
    }
    out.scaling = Some(maps.to_vec());
    Ok(out)
}

/// Per-column affine map onto `[-1+margin, 1-margin]`.
pub fn scale_to_cube(ds: &DataSet, margin: f64) -> Result<DataSet> {
    let maps = fit_scaling(ds, margin)?;
    apply_scaling(ds, &maps)
}

/// Sample mean and population (1/N) variance of column `j`.
pub fn marginal_moments(ds: &DataSet, j: usize) -> Result<(f64, f64)> {
    if j >= ds.dim {
        return Err(Error::InvalidInput(format!("coordinate {j} out of range d={}", ds.dim)));
    }
    let n = ds.n as f64;
    let mean = ds.column(j).sum::<f64>() / n;
    let var = ds.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var))
}
