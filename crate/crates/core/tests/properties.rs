use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sharpcert::certificates::{
    check_optimality, classify, classify_exact, decide, ic, strong_restricted_injectivity, tau, zeta, CertValue,
    DecisionInputs, Thresholds, ValueStatus, Verdict,
};
use sharpcert::cone::{solve_minmax_group_norm, ConeProgram, SolveStatus};
use sharpcert::groups::{block_soft_threshold, dual_group_norm, group_norm, nuclear_norm_2x2, GroupStructure};
use sharpcert::linalg::{
    affine_project, kernel_basis, pseudoinverse, restricted_smallest_gain, spectral_norm, Matrix, Vector,
    DEFAULT_RANK_TOL,
};
use sharpcert::model::{
    boundary_step, descent_cone_member, directional_derivative, second_subderivative, ModelDecomposition,
};
use sharpcert::problem::{AnalysisOperator, Problem};
use sharpcert::recovery::{solve_constrained, solve_lagrangian, sphere_noise, SolverOptions, MATCH_TOL};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random problem with groups of sizes 1..=3, some of them active.
fn random_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(2..6);
    let mut groups = Vec::new();
    let mut n = 0;
    for _ in 0..count {
        let size = rng.random_range(1..4);
        groups.push((n..n + size).collect::<Vec<_>>());
        n += size;
    }
    let m = rng.random_range(1..n.max(2));
    let groups = GroupStructure::new(n, groups).unwrap();
    let mut x0 = Vector::zeros(n);
    let active = rng.random_range(0..=count.min(2));
    for g in 0..active {
        for &i in groups.group(g) {
            x0[i] = StandardNormal.sample(&mut rng);
        }
    }
    Problem::new(gaussian(m, n, &mut rng), AnalysisOperator::Identity(n), groups, x0).unwrap()
}

/// Random problem with a small active part and plenty of measurements, which
/// makes `x0` optimal in most draws.
fn likely_optimal(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = rng.random_range(1..4);
    let count = rng.random_range(3..7);
    let n = size * count;
    let groups = GroupStructure::contiguous(count, size).unwrap();
    let m = (n * 3 / 4).max(size + 1).min(n - 1);
    let mut x0 = Vector::zeros(n);
    for i in 0..size {
        x0[i] = StandardNormal.sample(&mut rng);
    }
    Problem::new(gaussian(m, n, &mut rng), AnalysisOperator::Identity(n), groups, x0).unwrap()
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn penrose_identities(seed in any::<u64>(), rank in 1usize..21, tall in any::<bool>(), zero_rows in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = if tall { (30, 20) } else { (20, 30) };
        let mut a = gaussian(rows, rank, &mut rng) * gaussian(rank, cols, &mut rng);
        for i in 0..zero_rows {
            a.row_mut(2 * i).fill(0.0);
        }
        let ap = pseudoinverse(&a, DEFAULT_RANK_TOL).unwrap();
        let tol = 1e-10 * spectral_norm(&a).max(1.0) * 30.0;
        prop_assert!((&a * &ap * &a - &a).norm() <= tol);
        prop_assert!((&ap * &a * &ap - &ap).norm() <= tol * spectral_norm(&ap).powi(2).max(1.0));
        let aap = &a * &ap;
        let apa = &ap * &a;
        prop_assert!((&aap - aap.transpose()).norm() <= tol);
        prop_assert!((&apa - apa.transpose()).norm() <= tol);
    }

    #[test]
    fn kernel_basis_is_orthonormal_and_annihilated(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(rows, cols, &mut rng);
        let b = kernel_basis(&a, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(b.ncols(), cols.saturating_sub(rows));
        prop_assert!((b.tr_mul(&b) - Matrix::identity(b.ncols(), b.ncols())).norm() <= 1e-12 * (cols as f64));
        prop_assert!((&a * &b).norm() <= 1e-10 * spectral_norm(&a));
    }

    #[test]
    fn affine_projection_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = gaussian(4, 9, &mut rng);
        let pinv = pseudoinverse(&phi, DEFAULT_RANK_TOL).unwrap();
        let x_ref = gaussian_vec(9, &mut rng);
        let p = affine_project(&gaussian_vec(9, &mut rng), &phi, &x_ref, &pinv).unwrap();
        let pp = affine_project(&p, &phi, &x_ref, &pinv).unwrap();
        prop_assert!((&p - &pp).norm() <= 1e-12 * (1.0 + p.norm()));
        prop_assert!((&phi * &p - &phi * &x_ref).norm() <= 1e-10 * (1.0 + x_ref.norm()));
    }

    #[test]
    fn restricted_gain_is_smallest_singular_value(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = kernel_basis(&gaussian(3, 8, &mut rng), DEFAULT_RANK_TOL).unwrap();
        let b = gaussian(6, 8, &mut rng);
        let gain = restricted_smallest_gain(&b, &k).unwrap();
        let bk = &b * &k;
        let min_eig = bk.tr_mul(&bk).symmetric_eigen().eigenvalues.min();
        prop_assert!((gain * gain - min_eig).abs() <= 1e-10 * (1.0 + min_eig.abs()));
    }

    #[test]
    fn group_norm_duality(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GroupStructure::contiguous(rng.random_range(1..6), rng.random_range(1..4)).unwrap();
        let u = gaussian_vec(g.dim(), &mut rng);
        let w = gaussian_vec(g.dim(), &mut rng);
        prop_assert!(u.dot(&w) <= group_norm(&u, &g).unwrap() * dual_group_norm(&w, &g).unwrap() + 1e-12);
    }

    #[test]
    fn soft_threshold_subgradient_inclusion(seed in any::<u64>(), lambda in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GroupStructure::contiguous(rng.random_range(1..6), rng.random_range(1..4)).unwrap();
        let u = gaussian_vec(g.dim(), &mut rng);
        let z = block_soft_threshold(&u, lambda, &g).unwrap();
        let s = (&u - &z) / lambda;
        for k in 0..g.len() {
            let zk = g.block(&z, k);
            let sk = g.block(&s, k);
            if zk.norm() > 0.0 {
                prop_assert!((sk - &zk / zk.norm()).norm() <= 1e-10);
            } else {
                prop_assert!(sk.norm() <= 1.0 + 1e-10);
            }
        }
    }

    #[test]
    fn nuclear_norm_matches_svd(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(2, 2, &mut rng);
        let svd: f64 = x.clone().svd(false, false).singular_values.iter().sum();
        prop_assert!((nuclear_norm_2x2(&x).unwrap() - svd).abs() <= 1e-10);
    }

    #[test]
    fn directional_derivative_matches_difference_quotient(seed in any::<u64>()) {
        let prob = random_problem(seed);
        let decomp = ModelDecomposition::new(&prob).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let w = gaussian_vec(prob.n(), &mut rng);
        let w = &w / w.norm();
        let t = 1e-7;
        let dq = (prob.objective(&(&prob.x0 + &w * t)).unwrap() - prob.objective(&prob.x0).unwrap()) / t;
        let dj = directional_derivative(&prob, &decomp, &w).unwrap();
        prop_assert!((dq - dj).abs() <= 1e-6, "{} {}", dq, dj);
    }

    #[test]
    fn second_subderivative_is_two_homogeneous(seed in any::<u64>()) {
        let prob = random_problem(seed);
        let decomp = ModelDecomposition::new(&prob).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let w = gaussian_vec(prob.n(), &mut rng);
        let base = second_subderivative(&prob, &decomp, &w).unwrap();
        for alpha in [0.5, 2.0, 3.0] {
            let scaled = second_subderivative(&prob, &decomp, &(&w * alpha)).unwrap();
            if base.is_finite() {
                prop_assert!((scaled - alpha * alpha * base).abs() <= 1e-10 * (1.0 + scaled.abs()));
            } else {
                prop_assert!(scaled.is_infinite());
            }
        }
    }

    #[test]
    fn descent_cone_members_have_descent_witnesses(seed in any::<u64>()) {
        let prob = random_problem(seed);
        let decomp = ModelDecomposition::new(&prob).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let j0 = prob.objective(&prob.x0).unwrap();
        // Shrinking the active part is always a descent direction.
        let candidates = [-prob.x0.clone(), gaussian_vec(prob.n(), &mut rng)];
        for w in candidates {
            if descent_cone_member(&prob, &decomp, &w, 1e-8).unwrap() {
                // Strict descent shows up for some small step; boundary directions
                // keep the value up to the boundary step.
                let t1 = boundary_step(&prob, &decomp, &w).unwrap();
                let steps = std::iter::successors(Some(t1), |t| Some(t / 2.0)).take(60);
                let ok = steps
                    .into_iter()
                    .any(|t| prob.objective(&(&prob.x0 + &w * t)).unwrap() <= j0 + 1e-8 * t * w.norm());
                prop_assert!(ok);
            }
        }
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn cone_value_is_scale_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups = GroupStructure::contiguous(3, 2).unwrap();
        let a = gaussian(2, 6, &mut rng);
        let b = gaussian_vec(2, &mut rng);
        let base = solve_minmax_group_norm(&ConeProgram::over_columns(a.clone(), b.clone(), groups.clone()).unwrap()).unwrap();
        prop_assert_eq!(base.status, SolveStatus::Optimal);
        for alpha in [1e-3, 1e3] {
            let s = solve_minmax_group_norm(&ConeProgram::over_columns(&a * alpha, &b * alpha, groups.clone()).unwrap()).unwrap();
            prop_assert!((s.value - base.value).abs() <= 1e-8 * (1.0 + base.value) + s.gap + base.gap);
        }
    }

    #[test]
    fn infeasibility_agrees_with_consistency_test(seed in any::<u64>(), consistent in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups = GroupStructure::contiguous(2, 2).unwrap();
        // Rank-one 3x4 system: generic right-hand sides are inconsistent.
        let a = gaussian(3, 1, &mut rng) * gaussian(1, 4, &mut rng);
        let b = if consistent { &a * gaussian_vec(4, &mut rng) } else { gaussian_vec(3, &mut rng) };
        let pinv = pseudoinverse(&a, DEFAULT_RANK_TOL).unwrap();
        let in_range = (&a * (&pinv * &b) - &b).norm() <= 1e-8 * (1.0 + b.norm());
        let sol = solve_minmax_group_norm(&ConeProgram::over_columns(a, b, groups).unwrap()).unwrap();
        prop_assert_eq!(sol.status == SolveStatus::Infeasible, !in_range);
    }

    #[test]
    fn certificate_ordering_on_optimal_instances(seed in any::<u64>()) {
        let prob = likely_optimal(seed);
        let decomp = ModelDecomposition::new(&prob).unwrap();
        let check = check_optimality(&prob, &decomp).unwrap();
        if check.is_optimal == Some(true) {
            let rho = check.rho.value;
            let (_, m) = strong_restricted_injectivity(&prob, &decomp).unwrap();
            let z = if m.nrows() == 0 { 0.0 } else { zeta(&prob, &decomp, &m).unwrap().value };
            prop_assert!(z <= rho + 1e-6);
            prop_assert!(rho <= tau(&prob, &decomp).unwrap() + 1e-6);
            prop_assert!(rho <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn rho_is_bounded_by_ic_under_restricted_injectivity(seed in any::<u64>()) {
        let prob = likely_optimal(seed);
        let r = classify(&prob, &Thresholds::default()).unwrap();
        let decomp = ModelDecomposition::new(&prob).unwrap();
        if r.ri_holds && r.consistency_ok {
            if let Some(sol) = ic(&prob, &decomp).unwrap() {
                prop_assert!(r.rho.value.unwrap() <= sol.value + 1e-6);
            }
        }
    }

    #[test]
    fn sharp_verdicts_show_first_order_growth(seed in any::<u64>()) {
        let prob = likely_optimal(seed);
        let r = classify_exact(&prob).unwrap();
        if r.verdict == Verdict::Sharp {
            let decomp = ModelDecomposition::new(&prob).unwrap();
            let k = kernel_basis(&prob.phi, DEFAULT_RANK_TOL).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
            for _ in 0..1000 {
                if k.ncols() == 0 { break; }
                let w = &k * gaussian_vec(k.ncols(), &mut rng);
                let w = &w / w.norm();
                prop_assert!(directional_derivative(&prob, &decomp, &w).unwrap() >= r.sharpness_constant - 1e-6);
            }
        }
    }

    #[test]
    fn falsified_candidates_come_with_witnesses(seed in any::<u64>()) {
        let prob = random_problem(seed);
        let r = classify(&prob, &Thresholds::default()).unwrap();
        if r.verdict == Verdict::NotASolution {
            let x = r.witness.expect("witness");
            prop_assert!((&prob.phi * &x - &prob.y0).norm() <= 1e-9 * (1.0 + prob.y0.norm()));
            prop_assert!(prob.objective(&x).unwrap() < prob.objective(&prob.x0).unwrap() - 1e-9);
        }
    }

    #[test]
    fn lagrangian_trace_is_monotone_and_beats_the_candidate(seed in any::<u64>(), mu in 0.01f64..1.0) {
        let prob = random_problem(seed);
        let y = &prob.y0 + sphere_noise(prob.m(), 0.1, seed);
        let run = solve_lagrangian(&prob, &y, mu, &SolverOptions::default()).unwrap();
        let scale = 1e-12 * (1.0 + run.objective_trace[0].abs());
        prop_assert!(run.objective_trace.windows(2).all(|w| w[1] <= w[0] + scale));
        let at_x0 = 0.5 * (&prob.phi * &prob.x0 - &y).norm_squared() + mu * prob.objective(&prob.x0).unwrap();
        prop_assert!(*run.objective_trace.last().unwrap() <= at_x0 + scale);
    }

    #[test]
    fn constrained_solutions_sit_on_the_noise_sphere(seed in any::<u64>()) {
        let prob = likely_optimal(seed);
        let delta = 0.05;
        let y = &prob.y0 + sphere_noise(prob.m(), delta, seed);
        let run = solve_constrained(&prob, &y, delta, &SolverOptions::default()).unwrap();
        let residual = (&prob.phi * &run.x - &y).norm();
        if run.mu.is_finite() {
            prop_assert!((residual - delta).abs() <= MATCH_TOL * delta);
            let lag = solve_lagrangian(&prob, &y, run.mu, &SolverOptions::default()).unwrap();
            prop_assert!((lag.x - &run.x).norm() <= 1e-6);
        } else {
            prop_assert!(residual <= delta);
        }
    }
}

fn cert(value: f64) -> CertValue {
    CertValue {
        value: Some(value),
        status: ValueStatus::Optimal,
        gap: 0.0,
    }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn loosening_sharpness_gates_keeps_sharp(
        rho in 0.0f64..1.2, tau in 0.0f64..2.0, gamma in 0.0f64..2.0, zeta in 0.0f64..1.2,
        ri in any::<bool>(), sri in any::<bool>(), extra_tau in 0.0f64..0.5, extra_rho in 0.0f64..0.5,
    ) {
        let inputs = DecisionInputs {
            consistency_ok: true,
            rho: cert(rho),
            tau: cert(tau),
            gamma: cert(gamma),
            zeta: cert(zeta),
            ri_holds: ri,
            sri_holds: sri,
        };
        let tight = Thresholds::default();
        let loose = Thresholds { tau: tight.tau + extra_tau, rho_lo: (tight.rho_lo + extra_rho).min(tight.rho_hi), ..tight };
        if decide(&inputs, &tight) == Verdict::Sharp {
            prop_assert_eq!(decide(&inputs, &loose), Verdict::Sharp);
        }
    }
}

#[test]
fn problem_files_round_trip() {
    for seed in 0..20 {
        let prob = random_problem(seed);
        let text = sharpcert::io::problem_to_json(&prob, Some(seed));
        let (back, s) = sharpcert::io::parse_problem(&text).unwrap();
        assert_eq!(back, prob);
        assert_eq!(s, Some(seed));
    }
}
