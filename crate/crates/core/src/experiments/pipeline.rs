//! Dataset loading and DPP kernel preparation shared by the experiments.

use std::fs::File;
use std::io::BufReader;

use crate::dataset::{
    apply_scaling, binarize_letter, fit_scaling, generate_synthetic, marginal_moments, parse_libsvm, DataSet,
    SyntheticConfig,
};
use crate::dpp::{build_projection_kernel, ProjectionKernel};
use crate::error::{Error, Result};
use crate::experiments::config::{DataSource, ExperimentConfig, KernelSpace};
use crate::jacobi::{fit_jacobi_params, JacobiParams};
use crate::kde::{default_bandwidth, Kde};
use crate::ope::OpeSpec;

/// Training data in the cube, plus held-out data scaled with the training maps.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub train: DataSet,
    pub test: Option<DataSet>,
}

fn read_libsvm(path: &std::path::Path, width: Option<usize>) -> Result<DataSet> {
    let f = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    parse_libsvm(BufReader::new(f), width)
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Loaded> {
    match &cfg.data {
        DataSource::Synthetic { n, d, law, task, noise_sd, seed } => {
            let mut sc = SyntheticConfig::new(*n, *d, *law, *task, *seed);
            sc.noise_sd = *noise_sd;
            Ok(Loaded { train: generate_synthetic(&sc)?, test: None })
        }
        DataSource::Libsvm { train, test, binarize_letter: bin, limit } => {
            let mut tr = read_libsvm(train, None)?;
            if let Some(l) = limit {
                let idx: Vec<usize> = (0..tr.len().min(*l)).collect();
                tr = tr.subset(&idx);
            }
            let mut te = test.as_ref().map(|p| read_libsvm(p, Some(tr.dim()))).transpose()?;
            if *bin {
                tr = binarize_letter(&tr)?;
                te = te.map(|t| binarize_letter(&t)).transpose()?;
            }
            let maps = fit_scaling(&tr, cfg.margin)?;
            let train = apply_scaling(&tr, &maps)?;
            let test = te.map(|t| apply_scaling(&t, &maps)).transpose()?;
            Ok(Loaded { train, test })
        }
    }
}

/// The points the DPP is built on.
pub fn kernel_points(ds: &DataSet, space: KernelSpace) -> DataSet {
    match space {
        KernelSpace::Joint => ds.clone(),
        KernelSpace::Features => ds.features_only(),
    }
}

/// Per-coordinate Jacobi parameters matched to the empirical marginal
/// moments; degenerate columns fall back to the uniform density.
pub fn reference_params(ds: &DataSet) -> Vec<JacobiParams> {
    (0..ds.dim())
        .map(|j| {
            let fitted = marginal_moments(ds, j).and_then(|(m, v)| fit_jacobi_params(m, v));
            fitted.unwrap_or_else(|e| {
                log::warn!("coordinate {j}: {e}; using the uniform reference density");
                JacobiParams::default()
            })
        })
        .collect()
}

/// Builds the rank-`p` projection kernel over the kernel points.
pub fn prepare_kernel(points: &DataSet, p: usize, cfg: &ExperimentConfig) -> Result<(OpeSpec, ProjectionKernel)> {
    if p > points.len() {
        return Err(Error::InvalidInput(format!("batch size {p} exceeds N={}", points.len())));
    }
    let params = reference_params(points);
    let spec = OpeSpec::with_index_set(&params, p, cfg.index_set)?;
    let h = cfg.bandwidth.unwrap_or_else(|| default_bandwidth(points.len(), points.dim()));
    let kde = Kde::new(points, h, cfg.smoothing_kernel)?;
    let pk = build_projection_kernel(&spec, &kde, points, cfg.execution)?;
    if let Some(g) = pk.saturation_gap() {
        log::info!("p={p}: saturation gap {g:.3e}");
    }
    if pk.eigengap_warning {
        log::warn!("p={p}: small eigengap in the restricted kernel");
    }
    Ok((spec, pk))
}
