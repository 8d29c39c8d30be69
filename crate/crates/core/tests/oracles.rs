//! Independent oracles for the numerical building blocks.

use nalgebra::DMatrix;
use rand::Rng;

use dppsgd::dataset::{generate_synthetic, DataSet, FeatureLaw, SyntheticConfig, Task};
use dppsgd::dpp::{assemble_kernel_matrix, build_projection_kernel, saturate, GridOpe, ProjectionKernel};
use dppsgd::estimators::{dpp_moments_exact, grad_full_data, item_gradient, poisson_trace_covariance, LossFn, LossKind};
use dppsgd::experiments::pipeline::reference_params;
use dppsgd::jacobi::{fit_jacobi_params, JacobiBasis, JacobiParams};
use dppsgd::kde::Kde;
use dppsgd::ope::OpeSpec;
use dppsgd::quadrature::tanh_sinh;
use dppsgd::rng::master_rng;
use dppsgd::sgd::exact_minimizer;
use dppsgd::Execution;

const STEP: f64 = 0.02;

fn chebyshev(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return a;
    }
    for _ in 1..n {
        let c = 2.0 * x * b - a;
        a = b;
        b = c;
    }
    b
}

fn integrate_q(params: JacobiParams, f: impl Fn(f64) -> f64) -> f64 {
    tanh_sinh(|x, op, om| f(x) * params.pdf_from_complements(op, om), STEP)
}

/// Orthonormal polynomials by modified Gram–Schmidt on Chebyshev polynomials,
/// as coefficient vectors in the Chebyshev basis.
fn gram_schmidt(params: JacobiParams, m: usize) -> Vec<Vec<f64>> {
    let eval = |c: &[f64], x: f64| c.iter().enumerate().map(|(k, a)| a * chebyshev(k, x)).sum::<f64>();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for n in 0..=m {
        let mut c = vec![0.0; m + 1];
        c[n] = 1.0;
        for prev in &out {
            let ip = integrate_q(params, |x| eval(&c, x) * eval(prev, x));
            c.iter_mut().zip(prev).for_each(|(a, b)| *a -= ip * b);
        }
        let norm = integrate_q(params, |x| eval(&c, x).powi(2)).sqrt();
        c.iter_mut().for_each(|a| *a /= norm);
        out.push(c);
    }
    out
}

#[test]
fn recurrence_matches_gram_schmidt() {
    let m = 9;
    for (a, b) in [(0.0, 0.0), (0.5, -0.5), (-0.35, 0.2), (0.45, 0.45)] {
        let params = JacobiParams::new(a, b);
        let basis = JacobiBasis::new(params, m);
        let gs = gram_schmidt(params, m);
        let mut phi = vec![0.0; m + 1];
        for x in [-0.97, -0.6, -0.1, 0.0, 0.33, 0.8, 0.999] {
            basis.eval_all(x, &mut phi);
            for (n, c) in gs.iter().enumerate() {
                let oracle: f64 = c.iter().enumerate().map(|(k, a)| a * chebyshev(k, x)).sum();
                assert!((phi[n] - oracle).abs() < 1e-8, "({a},{b}) n={n} x={x}: {} vs {oracle}", phi[n]);
            }
        }
    }
}

#[test]
fn christoffel_darboux_second_moment() {
    // ∬ (x-y)² K_m(x,y)² q(x) q(y) dx dy = 2 b_m²
    let params = JacobiParams::new(-0.3, 0.4);
    let basis = JacobiBasis::new(params, 8);
    for m in [1, 3, 6] {
        let k = |x: f64, y: f64| {
            let mut px = [0.0; 9];
            let mut py = [0.0; 9];
            basis.eval_all(x, &mut px);
            basis.eval_all(y, &mut py);
            (0..m).map(|j| px[j] * py[j]).sum::<f64>()
        };
        let v = integrate_q(params, |x| integrate_q(params, |y| ((x - y) * k(x, y)).powi(2)));
        let want = 2.0 * basis.recur_b[m].powi(2);
        assert!((v - want).abs() < 1e-9, "m={m}: {v} vs {want}");
    }
}

#[test]
fn fitted_density_reproduces_moments() {
    for (mean, var) in [(0.0, 1.0 / 3.0), (0.1, 0.3), (-0.2, 0.28), (0.05, 0.4)] {
        let p = fit_jacobi_params(mean, var).unwrap();
        let m1 = integrate_q(p, |x| x);
        let m2 = integrate_q(p, |x| (x - m1).powi(2));
        assert!((m1 - mean).abs() < 1e-8 && (m2 - var).abs() < 1e-8, "({mean},{var}) -> {p:?}: ({m1},{m2})");
    }
}

fn projector(pk: &ProjectionKernel) -> DMatrix<f64> {
    let f = pk.factor();
    &f * f.transpose()
}

#[test]
fn factored_and_dense_saturation_agree() {
    let mut sc = SyntheticConfig::new(200, 3, FeatureLaw::Uniform, Task::Linear, 11);
    sc.noise_sd = 0.1;
    let ds = generate_synthetic(&sc).unwrap();
    let spec = OpeSpec::new(&reference_params(&ds), 12).unwrap();
    let kde = Kde::with_default_bandwidth(&ds);
    let fast = build_projection_kernel(&spec, &kde, &ds, Execution::Sequential).unwrap();
    let rk = assemble_kernel_matrix(&spec, &kde, &ds, Execution::Sequential).unwrap();
    let dense = saturate(&rk, 12).unwrap();
    let diff = (projector(&fast) - projector(&dense)).amax();
    assert!(diff < 1e-8, "projectors differ by {diff:e}");
    for k in 0..12 {
        let rel = (fast.spectrum[k] - dense.spectrum[k]).abs() / dense.spectrum[k];
        assert!(rel < 1e-8, "eigenvalue {k}: {} vs {}", fast.spectrum[k], dense.spectrum[k]);
    }
    assert!(dense.spectrum[12].abs() < 1e-10 * dense.spectrum[0]);
}

#[test]
fn grid_marginals_are_christoffel_weights() {
    // a Gauss rule with M nodes is exact to degree 2M-1, so the projection
    // onto the first p polynomials has P_mm = w_m K(x_m, x_m)
    let params = [JacobiParams::new(0.2, -0.4)];
    for (p, nodes) in [(4, 10), (7, 40)] {
        let spec = OpeSpec::new(&params, p).unwrap();
        let grid = GridOpe::new(&spec, nodes, Execution::Sequential).unwrap();
        for m in 0..grid.len() {
            let want = grid.weights[m] * spec.kernel_diag(grid.node(m)).unwrap();
            assert!((grid.kernel.marginals()[m] - want).abs() < 1e-10);
        }
        let total: f64 = grid.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn grid_sampler_marginal_frequencies() {
    let params = [JacobiParams::new(0.0, 0.0), JacobiParams::new(-0.5, 0.5)];
    let spec = OpeSpec::new(&params, 3).unwrap();
    let grid = GridOpe::new(&spec, 3, Execution::Sequential).unwrap();
    let mut rng = master_rng(5);
    let draws = 40_000;
    let mut counts = vec![0usize; grid.len()];
    for _ in 0..draws {
        let s = grid.sample_nodes(&mut rng).unwrap();
        assert_eq!(s.len(), 3);
        s.into_iter().for_each(|m| counts[m] += 1);
    }
    for (m, &c) in counts.iter().enumerate() {
        let q = grid.kernel.marginals()[m];
        let sigma = (q * (1.0 - q) / draws as f64).sqrt();
        assert!((c as f64 / draws as f64 - q).abs() <= 4.5 * sigma + 1e-12, "node {m}");
    }
}

fn toy(n: usize, seed: u64) -> DataSet {
    let mut sc = SyntheticConfig::new(n, 3, FeatureLaw::Uniform, Task::Linear, seed);
    sc.noise_sd = 0.2;
    generate_synthetic(&sc).unwrap()
}

#[test]
fn poisson_trace_covariance_by_enumeration() {
    let n = 10;
    let ds = toy(n, 3);
    let loss = LossFn::new(LossKind::Linear, 0.1).unwrap();
    let theta = [0.3, -0.7];
    let full = grad_full_data(&ds, &loss, &theta);
    let grads: Vec<Vec<f64>> = (0..n).map(|i| item_gradient(&loss, &ds, i, &theta)).collect();
    let p = 3.0;
    let pi = p / n as f64;
    let mut tc = 0.0;
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as i32;
        let pr = pi.powi(k) * (1.0 - pi).powi(n as i32 - k);
        let mut xi = vec![0.0; 2];
        for i in (0..n).filter(|i| mask >> i & 1 == 1) {
            xi.iter_mut().zip(&grads[i]).for_each(|(a, g)| *a += g / p);
        }
        tc += pr * xi.iter().zip(&full).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    let closed = poisson_trace_covariance(&ds, &loss, &theta, p);
    assert!((tc - closed).abs() < 1e-12 * closed.max(1.0), "{tc} vs {closed}");
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (k - 1..n)
        .flat_map(|last| {
            subsets(last, k - 1).into_iter().map(move |mut s| {
                s.push(last);
                s
            })
        })
        .collect()
}

#[test]
fn dpp_moments_by_enumeration() {
    let n = 9;
    let ds = toy(n, 4);
    let loss = LossFn::new(LossKind::Linear, 0.1).unwrap();
    let theta = [-0.2, 0.5];
    let pts = ds.features_only();
    let spec = OpeSpec::new(&reference_params(&pts), 3).unwrap();
    let pk = build_projection_kernel(&spec, &Kde::with_default_bandwidth(&pts), &pts, Execution::Sequential).unwrap();
    let pm = projector(&pk);
    let (mean, tc) = dpp_moments_exact(&ds, &loss, &theta, &pk);
    let full = grad_full_data(&ds, &loss, &theta);
    let mut e = vec![0.0; 2];
    let mut e_sq = 0.0;
    for s in subsets(n, 3) {
        let pr = pm.select_rows(&s).select_columns(&s).determinant();
        let mut xi = vec![0.0; 2];
        for &i in &s {
            let g = item_gradient(&loss, &ds, i, &theta);
            xi.iter_mut().zip(&g).for_each(|(a, v)| *a += v / (n as f64 * pk.marginals()[i]));
        }
        e.iter_mut().zip(&xi).for_each(|(a, v)| *a += pr * v);
        e_sq += pr * xi.iter().zip(&full).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    for k in 0..2 {
        assert!((mean[k] - full[k]).abs() < 1e-12 && (e[k] - full[k]).abs() < 1e-12);
    }
    assert!((tc - e_sq).abs() < 1e-12, "{tc} vs {e_sq}");
}

#[test]
fn ridge_minimizer_matches_dense_solve() {
    let ds = toy(3, 9);
    let loss = LossFn::new(LossKind::Linear, 0.25).unwrap();
    let theta = exact_minimizer(&ds, &loss).unwrap();
    let x = DMatrix::from_fn(3, 2, |i, j| ds.features(i)[j]);
    let y = DMatrix::from_fn(3, 1, |i, _| ds.label(i));
    let a = x.transpose() * &x / 3.0 + DMatrix::identity(2, 2) * 0.25;
    let b = x.transpose() * y / 3.0;
    let want = a.lu().solve(&b).unwrap();
    for k in 0..2 {
        assert!((theta[k] - want[k]).abs() < 1e-12);
    }
}

#[test]
fn ridge_minimizer_vanishes_under_heavy_penalty() {
    let ds = toy(50, 2);
    let loss = LossFn::new(LossKind::Linear, 1e9).unwrap();
    let theta = exact_minimizer(&ds, &loss).unwrap();
    assert!(theta.iter().all(|t| t.abs() < 1e-9));
}

#[test]
fn full_batch_dpp_has_no_variance() {
    let n = 40;
    let ds = toy(n, 6);
    let loss = LossFn::new(LossKind::Linear, 0.1).unwrap();
    let mut rng = master_rng(1);
    let theta: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pk = ProjectionKernel::from_factor(&DMatrix::identity(n, n)).unwrap();
    let (_, tc) = dpp_moments_exact(&ds, &loss, &theta, &pk);
    assert!(tc.abs() < 1e-16, "{tc:e}");
}
