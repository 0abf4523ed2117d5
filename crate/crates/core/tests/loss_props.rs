use std::f64::consts::PI;
use std::sync::Arc;

use fosls::auxiliary::AuxiliarySet;
use fosls::geometry::{sample_interior, stream_rng, BoundaryKind, PointSet};
use fosls::loss::{compose_phi, compose_u, discrete_loss, grad_loss, grad_loss_weighted, residual_at, AnalyticPair, LossWeights};
use fosls::{make_example1, make_example2, make_remark1d, Activation, Network, PdeProblem, TrialFields};
use proptest::prelude::*;
use rand::Rng;

fn random_trial(problem: &PdeProblem, hidden: &[usize], act: Activation, seed: u64) -> TrialFields {
    let aux = Arc::new(AuxiliarySet::analytic_for(problem).unwrap());
    let mut rng = stream_rng(seed, 1);
    let mut t = TrialFields::init(problem.dim(), hidden, act, aux, 1e-3, &mut rng).unwrap();
    let theta: Vec<f64> = t.params().iter().map(|p| p + rng.random_range(-0.5..0.5)).collect();
    t.set_params(&theta).unwrap();
    t
}

#[test]
fn boundary_conditions_hold_for_any_parameters() {
    let problem = make_example1(2, 1).unwrap();
    let dir = problem.patches_of(BoundaryKind::Dirichlet).next().unwrap().clone();
    let neu = problem.patches_of(BoundaryKind::Neumann).next().unwrap().clone();
    let mut rng = stream_rng(3, 7);
    for seed in 0..20 {
        let t = random_trial(&problem, &[6, 6], Activation::Tanh, seed);
        for x in dir.sample(100, &mut rng).iter() {
            assert!((compose_u(&t, x) - problem.g_dirichlet(x)).abs() <= 1e-12);
        }
        for x in neu.sample(100, &mut rng).iter() {
            let phi = compose_phi(&t, x);
            let nu = neu.normal(x);
            let flux: f64 = phi.iter().zip(&nu).map(|(a, b)| a * b).sum();
            assert!((flux - problem.g_neumann(x)).abs() <= 1e-12);
        }
    }
}

#[test]
fn batched_loss_matches_pointwise_loss() {
    for problem in [make_example1(2, 1).unwrap(), make_example2(0.1).unwrap()] {
        let t = random_trial(&problem, &[7], Activation::Sigmoid, 4);
        let pts = sample_interior(&problem.domain, 300, &mut stream_rng(1, 0)).unwrap();
        let a = discrete_loss(&problem, &t, &pts, t.fd_step).unwrap();
        let b = grad_loss(&problem, &t, &pts).unwrap().loss;
        assert!((a.total - b.total).abs() <= 1e-10 * a.total);
        assert!((a.flux - b.flux).abs() <= 1e-10 * a.flux);
        assert!((a.div - b.div).abs() <= 1e-10 * a.div);
    }
}

#[test]
fn gradient_matches_finite_differences_with_mixed_boundaries() {
    let problem = make_example1(2, 1).unwrap();
    let mut t = random_trial(&problem, &[5], Activation::Tanh, 9);
    let pts = sample_interior(&problem.domain, 8, &mut stream_rng(2, 0)).unwrap();
    let g = grad_loss(&problem, &t, &pts).unwrap().joint();
    let theta = t.params();
    let h = 1e-6;
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..theta.len() {
        let mut eval = |delta: f64| {
            let mut p = theta.clone();
            p[k] += delta;
            t.set_params(&p).unwrap();
            discrete_loss(&problem, &t, &pts, t.fd_step).unwrap().total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        // normwise: the loss is O(100), so FD noise is ~1e-6 absolute
        let rel = (fd - g[k]).abs() / scale;
        assert!(rel <= 1e-5, "param {k}: {fd} vs {}", g[k]);
    }
}

#[test]
fn gradient_vanishes_where_residuals_vanish() {
    // u = x exactly through the lifting (v ≡ 0), φ = ψ ≡ 1
    let problem = make_remark1d().unwrap();
    let aux = Arc::new(AuxiliarySet::analytic_for(&problem).unwrap());
    let v = Network::zeros(vec![1, 4, 1], Activation::Sigmoid).unwrap();
    let mut psi = Network::zeros(vec![1, 4, 1], Activation::Sigmoid).unwrap();
    let m = psi.num_params();
    psi.params_mut()[m - 1] = 1.0;
    let t = TrialFields::new(v, psi, aux, 1e-3).unwrap();
    let pts = sample_interior(&problem.domain, 500, &mut stream_rng(0, 0)).unwrap();
    let out = grad_loss(&problem, &t, &pts).unwrap();
    assert!(out.loss.total <= 1e-24);
    assert!(out.joint().iter().all(|g| g.abs() <= 1e-10), "{:?}", out.joint());
}

#[test]
fn doubled_weights_double_the_gradient_exactly() {
    let problem = make_example2(0.2).unwrap();
    let t = random_trial(&problem, &[6], Activation::Sigmoid, 1);
    let pts = sample_interior(&problem.domain, 200, &mut stream_rng(5, 0)).unwrap();
    let one = grad_loss_weighted(&problem, &t, &pts, LossWeights::default()).unwrap();
    let two = grad_loss_weighted(&problem, &t, &pts, LossWeights { flux: 2.0, div: 2.0 }).unwrap();
    assert_eq!(two.loss.total, 2.0 * one.loss.total);
    for (a, b) in one.joint().iter().zip(two.joint()) {
        assert_eq!(b, 2.0 * a);
    }
}

#[test]
fn result_does_not_depend_on_worker_count() {
    let problem = make_example1(2, 1).unwrap();
    let t = random_trial(&problem, &[9], Activation::Sigmoid, 2);
    let pts = sample_interior(&problem.domain, 1000, &mut stream_rng(8, 0)).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| grad_loss(&problem, &t, &pts).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.loss.total.to_bits(), b.loss.total.to_bits());
    assert_eq!(a.joint(), b.joint());
}

#[test]
fn monte_carlo_loss_is_unbiased() {
    let problem = make_example1(2, 1).unwrap();
    let t = random_trial(&problem, &[6], Activation::Sigmoid, 12);
    let h = t.fd_step;
    // midpoint rule on a 300×300 grid
    let n = 300;
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(vec![-1.0 + (i as f64 + 0.5) * 2.0 / n as f64, -1.0 + (j as f64 + 0.5) * 2.0 / n as f64]);
        }
    }
    let grid = PointSet::from_rows(2, &rows).unwrap();
    let quad = grad_loss(&problem, &t, &grid).unwrap().loss.total;

    let mut rng = stream_rng(40, 0);
    let est: Vec<f64> = (0..200)
        .map(|_| {
            let pts = sample_interior(&problem.domain, 200, &mut rng).unwrap();
            discrete_loss(&problem, &t, &pts, h).unwrap().total
        })
        .collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64;
    let se = (var / est.len() as f64).sqrt();
    assert!((mean - quad).abs() <= 3.0 * se, "mean {mean}, quadrature {quad}, se {se}");
}

#[test]
fn exact_pair_loss_converges_at_second_order() {
    let problem = make_example1(2, 1).unwrap();
    let exact = AnalyticPair::exact(&problem).unwrap();
    let pts = sample_interior(&problem.domain, 500, &mut stream_rng(3, 0)).unwrap();
    let losses: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&h| discrete_loss(&problem, &exact, &pts, h).unwrap().total).collect();
    for w in losses.windows(2) {
        // loss ∝ h⁴; order in h of the residual itself is log2(ratio)/2
        let order = (w[0] / w[1]).log2() / 2.0;
        assert!(order >= 1.8, "observed order {order}");
    }
}

#[test]
fn exact_pair_residual_is_within_truncation_bound() {
    let problem = make_example1(2, 1).unwrap();
    let exact = AnalyticPair::exact(&problem).unwrap();
    let h = 1e-3;
    // central differences err by h²/6 times a third derivative: π³ for ∇u, π⁴ for div φ
    let flux_bound = PI.powi(3) / 6.0 * h * h + 1e-12;
    let div_bound = PI.powi(4) / 6.0 * h * h + 1e-12;
    for x in sample_interior(&problem.domain, 200, &mut stream_rng(4, 0)).unwrap().iter() {
        let r = residual_at(&problem, &exact, x, h);
        assert!(r.r_flux.iter().all(|v| v.abs() <= flux_bound), "{r:?}");
        assert!(r.r_div.abs() <= div_bound, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loss_is_nonnegative(seed in 0u64..5000, n in 1usize..40) {
        let problem = make_example2(0.3).unwrap();
        let t = random_trial(&problem, &[4], Activation::Tanh, seed);
        let pts = sample_interior(&problem.domain, n, &mut stream_rng(seed, 0)).unwrap();
        let l = grad_loss(&problem, &t, &pts).unwrap().loss;
        prop_assert!(l.total >= 0.0 && l.flux >= 0.0 && l.div >= 0.0);
    }
}
