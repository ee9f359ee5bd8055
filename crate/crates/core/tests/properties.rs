//! Property tests over randomly generated matrices, targets and chains.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use precond::conditioning::{
    bound_thm1, bound_thm2_scale_consistent, bound_thm3, cosine_grid_kappa, hard_target_lower, kappa_after,
    kappa_over_probes, measure_all, ou_spectral_gap, rwm_gap_bounds,
};
use precond::diagnostics::{empirical_gap_upper, ess};
use precond::experiments::hyperbolic_probes;
use precond::linalg::{
    spectral_condition_number, sym_eigen, sym_sqrt, symmetrize_preconditioner, Matrix, SymMatrix, Vector,
};
use precond::preconditioners::{
    additive_base_preconditioner, dense_covariance_preconditioner, design_preconditioner, identity_preconditioner,
    pushforward, Preconditioner,
};
use precond::samplers::{run_chain, run_chain_pushforward, ChainConfig, SamplerKind};
use precond::targets::{
    binomial_gprior_target, cosine_hard_target, gaussian_target, hyperbolic_regression_target, synth_binomial_data,
    synth_regression_data, DifferentiableTarget, Model, Potential, Structure,
};

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn normal_vec(r: &mut ChaCha20Rng, d: usize) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| r.sample::<f64, _>(StandardNormal)))
}

fn random_spd(r: &mut ChaCha20Rng, d: usize, log10_span: f64) -> SymMatrix {
    let g = Matrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let ev = Vector::from_iterator(d, (0..d).map(|_| 10f64.powf(r.random_range(-log10_span..=log10_span))));
    SymMatrix::symmetrized(&q * Matrix::from_diagonal(&ev) * q.transpose())
}

fn random_matrix(r: &mut ChaCha20Rng, d: usize) -> Matrix {
    Matrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal)) + Matrix::identity(d, d) * 2.0
}

fn hyperbolic(seed: u64, d: usize, mult: usize) -> DifferentiableTarget {
    let data = synth_regression_data(d, mult * d, seed, false).unwrap();
    hyperbolic_regression_target(data.x, data.y, 1.0, data.lambda).unwrap()
}

fn binomial(seed: u64, d: usize, mu: f64) -> DifferentiableTarget {
    let data = synth_binomial_data(d, 5 * d, mu, seed).unwrap();
    binomial_gprior_target(data.x, data.y, data.w, 0.01 / (5 * d) as f64).unwrap()
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigen_reconstructs(seed in any::<u64>(), d in 1usize..40) {
        let a = random_spd(&mut rng(seed), d, 3.0);
        let e = sym_eigen(&a).unwrap();
        prop_assert!(rel(e.reconstruct().as_matrix(), a.as_matrix()) <= 1e-10);
    }

    #[test]
    fn sqrt_squares_back(seed in any::<u64>(), d in 1usize..20) {
        let a = random_spd(&mut rng(seed), d, 2.0);
        let s = sym_sqrt(&a).unwrap();
        prop_assert!(rel(&(s.as_matrix() * s.as_matrix()), a.as_matrix()) <= 1e-9);
    }

    #[test]
    fn symmetrize_is_idempotent(seed in any::<u64>(), d in 1usize..10) {
        let l = random_matrix(&mut rng(seed), d);
        let once = symmetrize_preconditioner(&l).unwrap();
        let twice = symmetrize_preconditioner(once.as_matrix()).unwrap();
        prop_assert!((once.as_matrix() - twice.as_matrix()).amax() <= 1e-12 * once.as_matrix().amax().max(1.0));
    }

    #[test]
    fn condition_number_is_scale_invariant(seed in any::<u64>(), d in 1usize..12, c in 1e-3f64..1e3) {
        let a = random_spd(&mut rng(seed), d, 2.0);
        let k1 = spectral_condition_number(&a).unwrap().cond;
        let k2 = spectral_condition_number(&a.scale(c)).unwrap().cond;
        prop_assert!((k1 - k2).abs() <= 1e-9 * k1);
    }

    #[test]
    fn regression_envelopes_and_structure(seed in any::<u64>(), d in 2usize..6, mu in 0.0f64..20.0) {
        let mut r = rng(seed ^ 1);
        for t in [hyperbolic(seed, d, 5), binomial(seed, d, mu)] {
            let env = t.envelope().unwrap();
            let tol = 1e-8 * env.big_m;
            for _ in 0..100 {
                let x = normal_vec(&mut r, d) * 3.0;
                let h = t.hessian(&x);
                let e = sym_eigen(&h).unwrap();
                prop_assert!(e.min() >= env.m - tol && e.max() <= env.big_m + tol);
                match (t.structure(), t.model()) {
                    (Structure::Additive { a }, Model::Hyperbolic { lambda, .. }) => {
                        let b = t.additive_b(&x).unwrap();
                        prop_assert!((h.as_matrix() - a.as_matrix() - b.as_matrix()).amax() <= 1e-10 * h.as_matrix().amax());
                        for v in b.diagonal().iter() {
                            prop_assert!(*v / lambda > 0.0 && *v / lambda <= 1.0);
                        }
                    }
                    (Structure::Multiplicative { x: xm, .. }, Model::Binomial { w, lambda_over_n, .. }) => {
                        let l = t.lambda_diag(&x).unwrap();
                        let xtlx = xm.transpose() * Matrix::from_diagonal(&l) * xm;
                        prop_assert!(rel(&xtlx, h.as_matrix()) <= 1e-10);
                        for i in 0..l.len() {
                            prop_assert!(l[i] >= w[i] * lambda_over_n * (1.0 - 1e-12));
                            prop_assert!(l[i] <= w[i] * (0.25 + lambda_over_n) * (1.0 + 1e-12));
                        }
                    }
                    _ => prop_assert!(false, "unexpected structure"),
                }
            }
        }
    }

    #[test]
    fn kappa_l_is_scale_invariant(seed in any::<u64>(), d in 2usize..6, c in 1e-2f64..1e2) {
        let t = hyperbolic(seed, d, 5);
        let Structure::Additive { a } = t.structure() else { unreachable!() };
        let cands = [
            additive_base_preconditioner(a).unwrap(),
            design_preconditioner(t.design().unwrap()).unwrap(),
            identity_preconditioner(d),
        ];
        for p in cands {
            let k1 = kappa_after(&t, p.l().as_matrix()).unwrap().kappa;
            let k2 = kappa_after(&t, p.scaled(c).unwrap().l().as_matrix()).unwrap().kappa;
            prop_assert!((k1 - k2).abs() <= 1e-9 * k1);
            let s = symmetrize_preconditioner(p.l().as_matrix()).unwrap();
            prop_assert!((s.as_matrix() - p.l().as_matrix()).amax() <= 1e-10 * p.l().as_matrix().amax());
        }
    }

    #[test]
    fn pushforward_round_trips(seed in any::<u64>(), d in 2usize..6) {
        let t = hyperbolic(seed, d, 5);
        let mut r = rng(seed ^ 2);
        let p = Preconditioner::from_spd("random", random_spd(&mut r, d, 1.0)).unwrap();
        let inv = Preconditioner::from_spd("inverse", p.l_inv().clone()).unwrap();
        let once = pushforward(&t, &p).unwrap();
        let back = precond::preconditioners::PreconditionedTarget::new(&once, &inv).unwrap();
        for _ in 0..10 {
            let x = normal_vec(&mut r, d);
            prop_assert!((back.potential(&x) - t.potential(&x)).abs() <= 1e-9 * t.potential(&x).abs().max(1.0));
            prop_assert!((back.gradient(&x) - t.gradient(&x)).norm() <= 1e-9 * t.gradient(&x).norm().max(1.0));
        }
    }

    #[test]
    fn probe_bounds_are_sound_and_ordered(seed in any::<u64>(), d in 2usize..7, shift in 0.0f64..1.0) {
        let t = hyperbolic(seed, d, 5);
        let (Structure::Additive { a }, Model::Hyperbolic { lambda, .. }) = (t.structure(), t.model()) else { unreachable!() };
        let p = Preconditioner::from_spd("shifted", sym_sqrt(&a.add_identity(shift * lambda)).unwrap()).unwrap();
        let probes = hyperbolic_probes(&Vector::zeros(d), 32, seed);
        let k = kappa_over_probes(&t, p.l().as_matrix(), &probes).unwrap().kappa;
        let sig = p.sigmas();
        let (eps_eig, delta, eps_norm) = measure_all(&t, &p, &probes).unwrap();
        let m_probe = probes.iter().map(|x| sym_eigen(&t.hessian(x)).unwrap().min()).fold(f64::INFINITY, f64::min);
        let b3 = bound_thm3(eps_norm, sig[0], m_probe).unwrap().upper().unwrap();
        prop_assert!(k <= b3 * (1.0 + 1e-8));
        if let Some(dl) = delta {
            let b1 = bound_thm1(eps_eig, dl, &sig).unwrap().upper().unwrap();
            prop_assert!(k <= b1 * (1.0 + 1e-8));
            // With a common ε, the Davis–Kahan δ only loosens the bound.
            if let (Ok(b1n), Ok(b2)) = (
                bound_thm1(eps_norm, dl, &sig),
                bound_thm2_scale_consistent(eps_norm, p.eigengap(), sig[d - 1], &sig),
            ) {
                prop_assert!(k <= b2.upper().unwrap() * (1.0 + 1e-8));
                prop_assert!(b2.upper().unwrap() >= b1n.upper().unwrap() * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn ou_gap_at_most_one(seed in any::<u64>(), d in 2usize..7) {
        let mut r = rng(seed);
        let sigma = random_spd(&mut r, d, 1.0);
        let w = dense_covariance_preconditioner(&sigma).unwrap().l().as_matrix().clone();
        let mut l = random_matrix(&mut r, d);
        l *= (w.determinant().abs() / l.determinant().abs()).powf(1.0 / d as f64);
        let g = ou_spectral_gap(&l, &sigma).unwrap();
        prop_assert!(g.det_constraint_satisfied);
        prop_assert!(g.gap <= 1.0 + 1e-9);
        prop_assert!((ou_spectral_gap(&w, &sigma).unwrap().gap - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn hard_target_floor_below_kappa(seed in any::<u64>()) {
        let l = random_matrix(&mut rng(seed), 2);
        let t = cosine_hard_target(1.0, 4.0).unwrap();
        let k = kappa_after(&t, &l).unwrap().kappa;
        let floor = hard_target_lower(&l, 1.0, 4.0).unwrap().lower().unwrap();
        prop_assert!(floor <= k * (1.0 + 1e-9));
        prop_assert!(cosine_grid_kappa(&l, 1.0, 4.0, 16).unwrap() <= k * (1.0 + 1e-9));
    }

    #[test]
    fn gap_bounds_ordered(kappa in 1.0f64..1e6, d in 1usize..1000, xi in 1e-3f64..10.0, eps in 0.0f64..10.0) {
        let b = rwm_gap_bounds(kappa, d, xi, eps, None).unwrap();
        prop_assert!(b.lower().unwrap() <= b.upper().unwrap());
    }

    #[test]
    fn chains_are_deterministic_and_views_agree(seed in any::<u64>(), d in 1usize..5, mala in any::<bool>(), c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let sigma = random_spd(&mut r, d, 1.0);
        let t = gaussian_target(Vector::zeros(d), sigma).unwrap();
        let p = Preconditioner::from_spd("random", random_spd(&mut r, d, 0.5)).unwrap();
        let kind = if mala { SamplerKind::Mala } else { SamplerKind::Rwm };
        let cfg = ChainConfig::new(kind, 0.5, p.clone(), 300, seed);
        let x0 = normal_vec(&mut r, d);
        let a = run_chain(&t, &x0, &cfg).unwrap();
        let b = run_chain(&t, &x0, &cfg).unwrap();
        prop_assert_eq!(&a.states, &b.states);
        let v = run_chain_pushforward(&t, &x0, &cfg).unwrap();
        prop_assert_eq!(&a.accepted, &v.accepted);
        if !mala {
            // (L, σ) and (cL, cσ) propose the same moves.
            let scaled = ChainConfig::new(kind, 0.5 * c, p.scaled(c).unwrap(), 300, seed);
            let s = run_chain(&t, &x0, &scaled).unwrap();
            prop_assert_eq!(&a.accepted, &s.accepted);
            for (x, y) in a.states.iter().zip(&s.states) {
                prop_assert!((x - y).norm() <= 1e-9 * x.norm().max(1.0));
            }
        }
    }

    #[test]
    fn ess_affine_and_reversal_invariant(seed in any::<u64>(), shift in -100.0f64..100.0, scale in 0.01f64..100.0) {
        let mut r = rng(seed);
        let mut x = 0.0;
        let s: Vec<f64> = (0..2000).map(|_| { x = 0.7 * x + r.sample::<f64, _>(StandardNormal); x }).collect();
        let e = ess(&s).unwrap();
        let t: Vec<f64> = s.iter().map(|v| shift + scale * v).collect();
        prop_assert!((ess(&t).unwrap() - e).abs() <= 1e-6 * e);
        let rev: Vec<f64> = s.iter().rev().copied().collect();
        prop_assert_eq!(ess(&rev).unwrap(), e);
    }
}

#[test]
fn eigen_reconstructs_at_d100() {
    let a = random_spd(&mut rng(100), 100, 3.0);
    let e = sym_eigen(&a).unwrap();
    assert!(rel(e.reconstruct().as_matrix(), a.as_matrix()) <= 1e-10);
}

#[test]
fn gap_estimate_above_lower_bound() {
    let d = 5;
    let h: Vec<f64> = (0..d).map(|j| 10f64.powf(-(j as f64) / (d - 1) as f64)).collect();
    let sigma = SymMatrix::from_diagonal(&h.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let t = gaussian_target(Vector::zeros(d), sigma).unwrap();
    let step = (1.0 / (h[0] * d as f64)).sqrt();
    let cfg = ChainConfig::new(SamplerKind::Rwm, step, identity_preconditioner(d), 100_000, 3);
    let tr = run_chain(&t, &Vector::zeros(d), &cfg).unwrap();
    let mut v = Vector::zeros(d);
    v[d - 1] = 1.0;
    let g = empirical_gap_upper(&tr.states, &v).unwrap();
    let b = rwm_gap_bounds(h[0] / h[d - 1], d, 1.0, 0.0, None).unwrap();
    assert!(b.lower().unwrap() <= g.estimate + 4.0 * g.se);
}
