//! Randomized invariants of the penalty, its constants and the alternating
//! solver.

use hiermap::frames::{make_groups, make_tight_frame, CovKind, FrameKind, GroupStructure, TightFrame};
use hiermap::model::{
    decomposable_norm, dual_norm, f_map, objective_f, objective_j, regularizer_eta, regularizer_grad,
    sandwich_bounds,
};
use hiermap::oracle::{finite_diff_grad, golden_section_theta};
use hiermap::rng::{rng_from_seed, standard_normal_matrix, standard_normal_vector};
use hiermap::solver::{solve, LinearSolver, NormalSystem, SolverConfig};
use hiermap::synth::{lq_mass, make_truth, normalize, threshold_support, TruthKind, TruthSpec};
use hiermap::theory::{ModelSubspace, Onto};
use hiermap::{Hypermodel, Problem, Structure, ThetaVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn groups() -> GroupStructure {
    make_groups(6, &[2, 3, 1], CovKind::RandomSpd, 5).unwrap()
}

fn frame() -> TightFrame {
    make_tight_frame(4, FrameKind::RandomRows { k: 7 }, 6).unwrap()
}

/// (hypermodel, d) for each variant.
fn models(eta: f64, lambda: f64) -> Vec<(Hypermodel, usize)> {
    vec![
        (Hypermodel::coordinate(eta, lambda).unwrap(), 5),
        (Hypermodel::group(eta, lambda, groups()).unwrap(), 6),
        (Hypermodel::frame(eta, lambda, frame()).unwrap(), 4),
    ]
}

fn vec_of(d: usize) -> impl Strategy<Value = DVector<f64>> {
    (prop::collection::vec(-5.0f64..5.0, d), -3.0f64..1.0)
        .prop_map(|(v, log_scale)| DVector::from_vec(v) * 10f64.powf(log_scale))
}

fn any_eta() -> impl Strategy<Value = f64> {
    prop_oneof![1e-3f64..0.49, Just(0.4), Just(0.1), Just(0.01)]
}

fn tol(scale: f64) -> f64 {
    1e-12 * scale.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sandwich_contains_the_penalty(u6 in vec_of(6), eta in any_eta()) {
        for (hm, d) in models(eta, 1.0) {
            let u = u6.rows(0, d).into_owned();
            let r = regularizer_eta(&u, &hm).unwrap();
            let b = sandwich_bounds(&u, &hm).unwrap();
            prop_assert!(b.lower <= r + tol(r) && r <= b.upper + tol(r), "{:?}: {} <= {} <= {}", hm.variant(), b.lower, r, b.upper);
        }
    }

    #[test]
    fn partial_minimization_identity(u6 in vec_of(6), eta in any_eta(), seed in any::<u64>()) {
        for (hm, d) in models(eta, 0.7) {
            let u = u6.rows(0, d).into_owned();
            let mut rng = rng_from_seed(seed);
            let p = Problem::new(standard_normal_matrix(3, d, &mut rng), standard_normal_vector(3, &mut rng)).unwrap();
            let f = objective_f(&u, &p, &hm).unwrap();
            let j_opt = objective_j(&u, &f_map(&u, &hm).unwrap(), &p, &hm).unwrap();
            prop_assert!((f - j_opt).abs() <= 1e-10 * f.abs().max(1.0));
            // Any other theta does no better.
            let units = hm.units(d);
            let theta = ThetaVector::new(DVector::from_fn(units, |i, _| 0.01 + (i as f64 + 1.0) * 0.37)).unwrap();
            prop_assert!(objective_j(&u, &theta, &p, &hm).unwrap() >= f - tol(f));
        }
    }

    #[test]
    fn theta_update_matches_golden_section(u in -10.0f64..10.0, eta in 1e-3f64..0.49) {
        let hm = Hypermodel::coordinate(eta, 1.0).unwrap();
        let closed = f_map(&DVector::from_element(1, u), &hm).unwrap()[0];
        prop_assert!((closed - golden_section_theta(u, eta)).abs() <= 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences(u6 in vec_of(6), eta in 0.01f64..0.49) {
        for (hm, d) in models(eta, 1.0) {
            let u = u6.rows(0, d).into_owned();
            let g = regularizer_grad(&u, &hm).unwrap();
            let fd = finite_diff_grad(|x| regularizer_eta(x, &hm).unwrap(), &u, 1e-6);
            prop_assert!((&g - &fd).amax() <= 1e-5, "{:?}: {} vs {}", hm.variant(), g, fd);
        }
    }

    #[test]
    fn hoelder_inequality(u6 in vec_of(6), v6 in vec_of(6)) {
        for (hm, d) in models(0.1, 1.0) {
            let u = u6.rows(0, d).into_owned();
            let v = v6.rows(0, d).into_owned();
            let bound = decomposable_norm(&u, &hm).unwrap() * dual_norm(&v, &hm).unwrap();
            prop_assert!(u.dot(&v).abs() <= bound + tol(bound));
        }
    }

    #[test]
    fn midpoint_convexity(u6 in vec_of(6), v6 in vec_of(6), eta in any_eta()) {
        for (hm, d) in models(eta, 1.0) {
            let u = u6.rows(0, d).into_owned();
            let v = v6.rows(0, d).into_owned();
            let r = |x: &DVector<f64>| regularizer_eta(x, &hm).unwrap();
            let mid = r(&((&u + &v) * 0.5));
            let avg = 0.5 * (r(&u) + r(&v));
            prop_assert!(mid <= avg + tol(avg));
        }
    }

    #[test]
    fn decomposability_on_coordinates_and_groups(u6 in vec_of(6), v6 in vec_of(6), mask in 0u32..64) {
        let cases: Vec<(Structure, Vec<usize>)> = vec![
            (Structure::Coordinate, (0..6).filter(|j| mask >> j & 1 == 1).collect()),
            (Structure::Group(groups()), (0..3).filter(|j| mask >> j & 1 == 1).collect()),
        ];
        for (structure, s) in cases {
            let hm = Hypermodel::new(0.1, 1.0, structure).unwrap();
            let m = ModelSubspace::new(s, hm.structure(), 6).unwrap();
            let a = m.project(&u6, Onto::M).unwrap();
            let b = m.project(&v6, Onto::MPerp).unwrap();
            let r = |x: &DVector<f64>| decomposable_norm(x, &hm).unwrap();
            let sum = r(&a) + r(&b);
            prop_assert!((r(&(&a + &b)) - sum).abs() <= 1e-12 * sum.max(1.0));
        }
    }

    #[test]
    fn decomposability_on_frames(u in vec_of(6), v in vec_of(6), seed in any::<u64>()) {
        // k = 7 > d = 6, S = five atoms: M has dimension 4. The perturbation
        // direction has vanishing analysis coefficients on S.
        let w = make_tight_frame(6, FrameKind::RandomRows { k: 7 }, seed).unwrap();
        let s = vec![0, 1, 2, 3, 4];
        let hm = Hypermodel::frame(0.1, 1.0, w.clone()).unwrap();
        let m = ModelSubspace::new(s.clone(), hm.structure(), 6).unwrap();
        prop_assert_eq!(m.dim(), 4);
        let a = m.project(&u, Onto::M).unwrap();
        let ws = w.matrix().select_columns(&s);
        let q = ws.clone().qr().q();
        let b = &v - &q * q.tr_mul(&v);
        prop_assert!((ws.tr_mul(&b)).amax() <= 1e-9 * v.norm().max(1.0));
        let r = |x: &DVector<f64>| decomposable_norm(x, &hm).unwrap();
        let sum = r(&a) + r(&b);
        prop_assert!((r(&(&a + &b)) - sum).abs() <= 1e-9 * sum.max(1.0));
    }

    #[test]
    fn square_frame_projection_is_orthogonal_split(u in vec_of(5), mask in 0u32..32, seed in any::<u64>()) {
        let q = hiermap::rng::random_orthogonal(5, &mut rng_from_seed(seed));
        let hm = Hypermodel::frame(0.1, 1.0, TightFrame::new(q, FrameKind::Custom).unwrap()).unwrap();
        let s: Vec<usize> = (0..5).filter(|j| mask >> j & 1 == 1).collect();
        let m = ModelSubspace::new(s.clone(), hm.structure(), 5).unwrap();
        prop_assert_eq!(m.dim(), s.len());
        let a = m.project(&u, Onto::M).unwrap();
        let b = m.project(&u, Onto::MPerp).unwrap();
        prop_assert!(a.dot(&b).abs() <= 1e-10 * u.norm_squared().max(1.0));
        let r = |x: &DVector<f64>| decomposable_norm(x, &hm).unwrap();
        prop_assert!((r(&u) - r(&a) - r(&b)).abs() <= 1e-10 * r(&u).max(1.0));
    }

    #[test]
    fn singleton_groups_and_square_identity_frame_reduce_to_coordinates(u in vec_of(5), eta in any_eta()) {
        let coord = Hypermodel::coordinate(eta, 1.0).unwrap();
        let single = Hypermodel::group(eta, 1.0, GroupStructure::with_identity((0..5).map(|i| vec![i]).collect()).unwrap()).unwrap();
        let square = Hypermodel::frame(eta, 1.0, TightFrame::new(DMatrix::identity(5, 5), FrameKind::Custom).unwrap()).unwrap();
        let r0 = regularizer_eta(&u, &coord).unwrap();
        let g0 = regularizer_grad(&u, &coord).unwrap();
        for hm in [&single, &square] {
            prop_assert!((regularizer_eta(&u, hm).unwrap() - r0).abs() <= 1e-12 * r0.max(1.0));
            prop_assert!((regularizer_grad(&u, hm).unwrap() - &g0).amax() <= 1e-12 * g0.amax().max(1.0));
            prop_assert!((dual_norm(&u, hm).unwrap() - dual_norm(&u, &coord).unwrap()).abs() <= 1e-12 * u.amax().max(1.0));
        }
    }

    #[test]
    fn lq_truth_counting_head_and_tail(q in 0.2f64..0.9, r_q in 0.5f64..30.0, delta in 0.01f64..1.0, seed in any::<u64>()) {
        let d = 64;
        let spec = TruthSpec { kind: TruthKind::LqBall { q, r_q, margin: 0.05 }, seed };
        let u = make_truth(d, &spec, &Structure::Coordinate).unwrap();
        let mass = lq_mass(&u, q, &Structure::Coordinate).unwrap();
        prop_assert!(mass <= r_q * (1.0 + 1e-10));
        let s = threshold_support(&u, delta, &Structure::Coordinate).unwrap();
        prop_assert!(s.size() as f64 <= r_q * delta.powf(-q) * (1.0 + 1e-10));
        let tail: f64 = (0..d).filter(|j| !s.indices().contains(j)).map(|j| u[j].abs()).sum();
        prop_assert!(tail <= r_q * delta.powf(1.0 - q) * (1.0 + 1e-10));
        let head: f64 = s.indices().iter().map(|&j| u[j].abs()).sum();
        prop_assert!(head <= (s.size() as f64).sqrt() * u.norm() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalization_is_idempotent(seed in any::<u64>(), which in 0usize..3) {
        let mut rng = rng_from_seed(seed);
        let d = 6;
        let structure = match which {
            0 => Structure::Coordinate,
            1 => Structure::Group(groups()),
            _ => Structure::Frame(make_tight_frame(6, FrameKind::RandomRows { k: 9 }, seed).unwrap()),
        };
        let hm = Hypermodel::new(0.1, 1.0, structure).unwrap();
        let a = standard_normal_matrix(20, d, &mut rng) * 3.0;
        let p = Problem::with_truth(a, standard_normal_vector(d, &mut rng), standard_normal_vector(20, &mut rng)).unwrap();
        let once = normalize(&p, &hm).unwrap();
        let twice = normalize(&once, &hm).unwrap();
        prop_assert!((once.a() - twice.a()).amax() <= 1e-12 * once.a().amax());
        prop_assert!((once.y() - twice.y()).amax() <= 1e-10 * once.y().amax().max(1.0));
        let flags = twice.flags();
        match hm.structure() {
            Structure::Coordinate => prop_assert!(flags.column),
            Structure::Group(_) => prop_assert!(flags.block),
            // One global factor: only the longest atom is unit length.
            Structure::Frame(w) => {
                let longest = (twice.a() * w.matrix()).column_iter().map(|c| c.norm()).fold(0.0, f64::max);
                prop_assert!((longest / 20f64.sqrt() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn solver_is_monotone_and_stationary(seed in any::<u64>(), which in 0usize..3, eta in 0.01f64..0.45) {
        let mut rng = rng_from_seed(seed);
        let (hm, d) = models(eta, 0.3).swap_remove(which);
        let p = Problem::new(standard_normal_matrix(12, d, &mut rng), standard_normal_vector(12, &mut rng) * 2.0).unwrap();
        let state = solve(&p, &hm, &SolverConfig::default()).unwrap();
        prop_assert!(state.converged);
        prop_assert!(state.trace.is_monotone(1e-12));
        let grad = NormalSystem::new(&p).gradient_f(&state.u, &hm).unwrap();
        prop_assert!(grad.amax() <= 1e-8);
        let theta = f_map(&state.u, &hm).unwrap();
        prop_assert!((theta.as_vector() - state.theta.as_vector()).amax() <= 1e-10);
    }

    #[test]
    fn conjugate_gradient_agrees_with_direct(seed in any::<u64>(), which in 0usize..3) {
        let mut rng = rng_from_seed(seed);
        let (hm, d) = models(0.05, 0.2).swap_remove(which);
        let p = Problem::new(standard_normal_matrix(10, d, &mut rng), standard_normal_vector(10, &mut rng)).unwrap();
        let direct = solve(&p, &hm, &SolverConfig::default()).unwrap();
        let cg = solve(&p, &hm, &SolverConfig { linear_solver: LinearSolver::ConjugateGradient, ..Default::default() }).unwrap();
        prop_assert!(direct.converged && cg.converged);
        prop_assert!((&direct.u - &cg.u).amax() <= 1e-7 * direct.u.amax().max(1.0));
    }
}
