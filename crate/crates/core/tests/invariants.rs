use std::sync::Arc;

use proptest::prelude::*;
use qspec_core::constants::{self, exponent_window};
use qspec_core::domains::Domain;
use qspec_core::plap_solver::{self, ScalarField, SolverOptions, Stencil};
use qspec_core::qc_maps::QcMap;
use qspec_core::quadrature::{self, QuadratureSpec};
use qspec_core::quasihyperbolic::QhGraph;
use qspec_core::Exponent;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zoo(n: usize) -> Vec<QcMap> {
    let mut diag = vec![1.0; n];
    diag[0] = 2.0;
    vec![
        QcMap::identity(n),
        QcMap::diagonal(&diag).unwrap(),
        QcMap::stretch(n, 0.5).unwrap(),
        QcMap::stretch(n, 1.0).unwrap(),
        QcMap::compose(QcMap::diagonal(&diag).unwrap(), QcMap::stretch(n, 0.5).unwrap()).unwrap(),
    ]
}

fn point_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, n).prop_filter("away from the origin", |x| x.iter().map(|v| v * v).sum::<f64>() > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_measure_scales(n in 2usize..6, r in 0.1f64..4.0) {
        let unit = Domain::unit_ball(n).measure(None).unwrap().value;
        let scaled = Domain::ball(vec![0.0; n], r).unwrap().measure(None).unwrap().value;
        prop_assert!((scaled / unit / r.powi(n as i32) - 1.0).abs() < 1e-13);
        let back = Domain::ball(vec![0.3; n], r).unwrap().equal_measure_radius(None).unwrap();
        prop_assert!((back / r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_distance_is_lipschitz(x in prop::collection::vec(-0.7f64..0.7, 3), y in prop::collection::vec(-0.7f64..0.7, 3), cube in any::<bool>()) {
        let d = if cube { Domain::cube_q(3) } else { Domain::unit_ball(3) };
        prop_assume!(d.contains(&x) && d.contains(&y));
        let (bx, by) = (d.boundary_distance(&x).unwrap(), d.boundary_distance(&y).unwrap());
        let dist: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((bx - by).abs() <= dist + 1e-12, "{} {} {}", bx, by, dist);
    }

    #[test]
    fn hadamard_and_dilatation(x in point_strategy(3)) {
        for m in zoo(3) {
            let j = m.jacobian(&x).unwrap().abs();
            let op = m.operator_norm(&x).unwrap();
            prop_assert!(j <= op.powi(3) * (1.0 + 1e-12));
            if let Some(k) = m.declared_k() {
                prop_assert!(op.powi(3) <= k * j * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences(x in point_strategy(3)) {
        for m in zoo(3) {
            let dm = m.derivative(&x).unwrap();
            let scale = dm.norm();
            for k in 0..3 {
                let h = 1e-6 * (1.0 + x[k].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let (fp, fm) = (m.evaluate(&xp).unwrap(), m.evaluate(&xm).unwrap());
                for i in 0..3 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    prop_assert!((fd - dm[(i, k)]).abs() <= 1e-5 * scale, "map {:?} entry ({i},{k})", m.kind_name());
                }
            }
        }
    }

    #[test]
    fn composition_jacobian_chain_rule(x in point_strategy(3), a in 0.1f64..2.0, s in 0.5f64..3.0) {
        let f = QcMap::diagonal(&[s, 1.0, 0.5]).unwrap();
        let g = QcMap::stretch(3, a).unwrap();
        let c = QcMap::compose(f.clone(), g.clone()).unwrap();
        let want = f.jacobian(&g.evaluate(&x).unwrap()).unwrap() * g.jacobian(&x).unwrap();
        let got = c.jacobian(&x).unwrap();
        prop_assert!((got / want - 1.0).abs() < 1e-10);
    }

    #[test]
    fn window_shrinks_with_k(n in 3usize..7, k in 1.0f64..20.0, dk in 0.01f64..5.0) {
        let a = exponent_window(n, k).unwrap();
        let b = exponent_window(n, k + dk).unwrap();
        prop_assert!(b.alpha.ln_width < a.alpha.ln_width);
        prop_assert!(b.beta.ln_width < a.beta.ln_width);
    }

    #[test]
    fn q_star_matches_sobolev_r(n in 2usize..7, dp in 0.1f64..20.0, beta in 1.001f64..50.0) {
        let p = n as f64 + dp;
        let b = Exponent::from(beta);
        let qs = constants::q_star(n, p, b).unwrap();
        let r = constants::sobolev_r(p, b).unwrap().r;
        let nf = n as f64;
        prop_assert!(qs.value > 0.0 && qs.value < nf);
        prop_assert!((qs.value / (nf * r / (nf + r)) - 1.0).abs() < 1e-12);
        prop_assert!((qs.gap / (nf - qs.value) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constants_positive_or_range_error(n in 1usize..8, k in -1.0f64..30.0, p in -1.0f64..30.0) {
        let results = [
            constants::doubling_constant(n, k).map(|v| v.value()),
            constants::rhi_c1(n, k).map(|v| v.value()),
            constants::weak_rhi_cnp(n, Exponent::from(p)).map(|v| v.value()),
            constants::q_star_inf(n, p).map(|q| q.value),
            constants::pi_p(p),
        ];
        for r in results {
            match r {
                Ok(v) => prop_assert!(v > 0.0 && !v.is_nan()),
                Err(e) => prop_assert!(matches!(e, qspec_core::Error::Range(_)), "{e}"),
            }
        }
    }

    #[test]
    fn rayleigh_is_zero_homogeneous(seed in 0u64..1000, p in 1.5f64..5.0, c in 0.1f64..10.0) {
        let grid = Domain::unit_square().rasterize(1.0 / 8.0).unwrap();
        let st = Arc::new(Stencil::new(grid).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..st.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = ScalarField::new(st.clone(), v.clone()).unwrap();
        let w = ScalarField::new(st, v.iter().map(|x| c * x).collect()).unwrap();
        let (a, b) = (plap_solver::rayleigh(&u, p).unwrap(), plap_solver::rayleigh(&w, p).unwrap());
        prop_assert!((a / b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_zeroes_constraint(seed in 0u64..1000, p in 1.2f64..6.0) {
        let grid = Domain::unit_ball(2).rasterize(1.0 / 8.0).unwrap();
        let st = Arc::new(Stencil::new(grid).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..st.len()).map(|_| rng.gen_range(-1.0f64..3.0).powi(3)).collect();
        let u = plap_solver::project_constraint(&ScalarField::new(st, v).unwrap(), p).unwrap();
        // the shift is exact to 1e-10 relative: the root stays bracketed
        let f = |s: f64| u.values.iter().map(|x| (x - s).abs().powf(p - 1.0) * (x - s).signum()).sum::<f64>();
        let delta = 1e-10 * u.values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        prop_assert!(f(-delta) >= 0.0 && f(delta) <= 0.0);
        // for p < 1.5 a cell value within an ulp of the shift dominates the residual
        if p >= 1.5 {
            let scale: f64 = u.values.iter().map(|x| x.abs().powf(p - 1.0)).sum::<f64>() * u.h().powi(2);
            prop_assert!(plap_solver::constraint_residual(&u, p).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn grid_boundary_distance_is_lipschitz_between_cells() {
    let g = Domain::stretch_image(2, 0.5).unwrap().rasterize(1.0 / 32.0).unwrap();
    let bd = g.boundary_distances();
    let cells: Vec<usize> = (0..g.len()).filter(|&i| g.mask[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let (i, j) = (cells[rng.gen_range(0..cells.len())], cells[rng.gen_range(0..cells.len())]);
        let (ci, cj) = (g.cell_center(i), g.cell_center(j));
        let dist = (ci[0] - cj[0]).hypot(ci[1] - cj[1]);
        assert!((bd[i] - bd[j]).abs() <= dist + 1e-12);
        assert!(bd[i] > 0.0);
    }
}

#[test]
fn radial_stretch_k_estimate() {
    let spec = QuadratureSpec::monte_carlo(20_000, 1);
    for n in [3usize, 4] {
        for a in [0.5, 1.0, 2.0] {
            let m = QcMap::stretch(n, a).unwrap();
            let est = m.estimate_k(&Domain::unit_ball(n), &spec).unwrap();
            let want = (a + 1.0f64).powi(n as i32 - 1);
            assert!((est.analytic / want - 1.0).abs() < 1e-9, "n={n} a={a}: {}", est.analytic);
        }
    }
}

#[test]
fn change_of_variables() {
    // |φ(B)| by hit-or-miss on the image against ∫_B |J|
    let spec = QuadratureSpec::monte_carlo(400_000, 2);
    for a in [0.5, 2.0] {
        let m = QcMap::stretch(3, a).unwrap();
        let via_j = quadrature::image_measure(&m, &Domain::ball(vec![0.0; 3], 0.8).unwrap(), &spec).unwrap();
        // the stretch maps B(0, r) onto B(0, r^{a+1})
        let image = Domain::ball(vec![0.0; 3], 0.8f64.powf(a + 1.0)).unwrap();
        let direct = quadrature::hit_or_miss_measure(&image, &spec).unwrap();
        let sigma = via_j.sigma().hypot(direct.sigma());
        assert!((via_j.value - direct.value).abs() <= 3.0 * sigma, "a={a}: {} vs {}", via_j.value, direct.value);
    }
}

#[test]
fn mc_measure_error_is_calibrated() {
    let d = Domain::unit_ball(3);
    let exact = d.measure(None).unwrap().value;
    let mut within = 0;
    for seed in 0..100 {
        let r = quadrature::hit_or_miss_measure(&d, &QuadratureSpec::monte_carlo(20_000, seed)).unwrap();
        if (r.value - exact).abs() < 3.0 * r.sigma() {
            within += 1;
        }
    }
    assert!(within >= 99, "{within}/100 trials within 3 sigma");
}

#[test]
fn jacobian_norm_beta_stable_under_budget_doubling() {
    let m = QcMap::stretch(3, 1.0).unwrap();
    let d = Domain::unit_ball(3);
    let beta = Exponent::from(3.0);
    let small = quadrature::jacobian_norm_beta(&m, &d, beta, &QuadratureSpec::monte_carlo(100_000, 3)).unwrap();
    let large = quadrature::jacobian_norm_beta(&m, &d, beta, &QuadratureSpec::monte_carlo(400_000, 4)).unwrap();
    assert!(large.value.is_finite());
    let ratio = small.sigma() / large.sigma();
    assert!((1.6..2.5).contains(&ratio), "std error ratio {ratio}");
    assert!((small.value - large.value).abs() < 3.0 * small.sigma().hypot(large.sigma()));
}

#[test]
fn composition_finite_iff_jacobian_finite() {
    let d = Domain::unit_ball(3);
    let spec = QuadratureSpec::monte_carlo(50_000, 5);
    for m in zoo(3) {
        for (p, q) in [(4.0, 2.0), (6.0, 1.0), (6.0, 3.0)] {
            let beta = constants::beta_from_pq(3, p, q).unwrap();
            let kpq = quadrature::composition_norm(&m, &d, p, q, &spec).map(|r| r.value.is_finite()).unwrap_or(false);
            let jb = quadrature::jacobian_norm_beta(&m, &d, Exponent::from(beta.max(1.0)), &spec)
                .map(|r| r.value.is_finite())
                .unwrap_or(false);
            assert_eq!(kpq, jb, "{} p={p} q={q}", m.kind_name());
        }
    }
}

fn random_interior_points(g: &QhGraph, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let x = vec![rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)];
        if x[0].hypot(x[1]) < radius && g.point_distance(&x).is_ok() {
            out.push(x);
        }
    }
    out
}

#[test]
fn qh_triangle_inequality() {
    let g = QhGraph::build(&Domain::unit_ball(2), 1.0 / 32.0).unwrap();
    let pts = random_interior_points(&g, 0.85, 30, 11);
    let rows: Vec<Vec<f64>> = pts.iter().map(|x| pts.iter().map(|y| g.distance(x, y).unwrap()).collect()).collect();
    let mut triples = 0;
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            for k in 0..pts.len() {
                assert!(rows[i][k] <= rows[i][j] + rows[j][k] + 1e-9, "({i},{j},{k})");
                triples += 1;
            }
        }
    }
    assert!(triples >= 1000);
}

#[test]
fn qh_domain_monotonicity() {
    let h = 1.0 / 32.0;
    let small = QhGraph::build(&Domain::unit_ball(2), h).unwrap();
    let large = QhGraph::build(&Domain::ball(vec![0.0, 0.0], 2.0).unwrap(), h).unwrap();
    let pts = random_interior_points(&small, 0.8, 20, 12);
    for x in &pts {
        for y in &pts {
            assert!(large.distance(x, y).unwrap() <= small.distance(x, y).unwrap() + 1e-9);
        }
    }
}

/// Cell-centred grids at h and h/2 are not nested, so refinement may lengthen
/// a path slightly; the slack is pinned well below the discretisation error.
#[test]
fn qh_refinement_does_not_increase_distance() {
    let d = Domain::unit_ball(2);
    let pairs = [([0.0, 0.0], [0.5, 0.0]), ([0.1, -0.2], [-0.6, 0.3]), ([0.3, 0.3], [0.3, -0.6]), ([-0.5, -0.5], [0.5, 0.5])];
    for (x0, x) in pairs {
        let ks: Vec<f64> = [16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|m| qspec_core::quasihyperbolic::qh_distance(&d, &x0, &x, 1.0 / m).unwrap())
            .collect();
        for w in ks.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 5e-3), "{x0:?} -> {x:?}: {ks:?}");
        }
    }
}

#[test]
fn solver_mesh_convergence_square() {
    let mus: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|m| plap_solver::minimize(&Domain::unit_square(), &SolverOptions::new(2.0, 1.0 / m).restarts(2)).unwrap().mu)
        .collect();
    let (a, b, c) = (mus[0], mus[1], mus[2]);
    assert!((a - b) * (b - c) > 0.0, "not monotone: {mus:?}");
    // second-order Richardson limit
    let limit = (4.0 * c - b) / 3.0;
    assert!((limit / c - 1.0).abs() < 0.02, "{mus:?} -> {limit}");
    assert!((limit / std::f64::consts::PI.powi(2) - 1.0).abs() < 0.01);
}

#[test]
fn solver_history_decreases() {
    let opts = SolverOptions { record_history: true, ..SolverOptions::new(3.0, 1.0 / 16.0).restarts(1) };
    let est = plap_solver::minimize(&Domain::unit_ball(2), &opts).unwrap();
    assert!(est.history.len() > 2);
    assert!(est.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!((plap_solver::rayleigh(&est.minimizer, 3.0).unwrap() / est.mu - 1.0).abs() < 1e-12);
}

