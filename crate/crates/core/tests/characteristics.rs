use cbdnk::characteristics::{
    causality_scan, characteristic_roots, check_causality, max_signal_speed, projections, rest_frame_speeds,
    CovectorPair,
};
use cbdnk::evolve::{cfl_dt, prepare_initial_psi, stencil_directions, InitialData};
use cbdnk::grid::TorusGrid;
use cbdnk::state::{ExtendedState, TransportModel, ViscosityLaw};
use cbdnk::tensor::{boost_velocity, dot};
use cbdnk::verify::{det_suite, eigen_suite, samples};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(a1: f64, a2: f64) -> TransportModel {
    TransportModel::unchecked(1.0, a1, a2, ViscosityLaw::conformal(1.0))
}

#[test]
fn causality_examples() {
    let bad = check_causality(&model(3.0, 10.0));
    assert!(!bad.admissible && !bad.chi_exceeds_four_eta);
    assert!(!bad.diagnostics.is_empty());

    let edge = check_causality(&model(5.0, 3.75));
    assert!(edge.admissible);
    assert!((edge.max_speed_ratio - 1.0).abs() < 1e-10);

    let r = check_causality(&model(6.0, 4.0));
    assert!(r.admissible);
    assert!((r.max_speed_ratio - 0.96148).abs() < 1e-5);
    assert!((r.ratios.quartic_minus - 0.03852).abs() < 1e-5);

    let below = check_causality(&model(6.0, 3.5));
    assert!(!below.admissible && !below.lambda_bound_holds);
}

#[test]
fn rest_frame_speed_examples() {
    let v = rest_frame_speeds(&model(6.0, 4.0)).unwrap();
    let want = [0.0, 0.19627, 0.5, 0.57735, 0.98055];
    assert_eq!(v.len(), 5);
    for (a, b) in v.iter().zip(want) {
        assert!((a - b).abs() < 1e-5, "{v:?}");
    }
    let edge = rest_frame_speeds(&model(5.0, 3.75)).unwrap();
    assert!((edge.last().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn scan_marks_the_admissible_region() {
    let scan = causality_scan((2.0, 10.0), (0.5, 10.0), 50);
    assert_eq!(scan.len(), 2500);
    for p in &scan {
        let expected = p.a1 > 4.0 && p.a2 >= 3.0 * p.a1 / (p.a1 - 1.0) * (1.0 - 1e-12);
        assert_eq!(p.admissible, expected, "({}, {})", p.a1, p.a2);
        if p.admissible {
            assert!(p.max_speed_ratio <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn projection_identity_for_boosted_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = 0.5_f64;
    let u = [s.cosh(), s.sinh(), 0.0, 0.0];
    for _ in 0..50 {
        let xi: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let p = projections(&u, &xi);
        let xi_sq = dot(&xi, &xi);
        assert!((p.aa - p.b * p.b - xi_sq).abs() < 1e-12 * (1.0 + xi_sq.abs()));
    }
    let rest = [1.0, 0.0, 0.0, 0.0];
    let p = projections(&rest, &[1.0, 0.0, 0.0, 0.0]);
    assert_eq!((p.b, p.aa), (1.0, 0.0));
    let p = projections(&rest, &[0.0, 1.0, 0.0, 0.0]);
    assert_eq!((p.b, p.aa), (0.0, 1.0));
}

#[test]
fn roots_are_symmetric_at_rest_and_shift_with_boost() {
    let m = TransportModel::conformal(1.0, 1.0, 6.0, 4.0).unwrap();
    let pair = CovectorPair::spatial([1.0, 0.0, 0.0]).unwrap();
    let rest = characteristic_roots(&ExtendedState::equilibrium(1.0, [1.0, 0.0, 0.0, 0.0]), &m, &pair).unwrap();
    assert_eq!(rest.total_multiplicity(), 30);
    let mut speeds: Vec<f64> = rest.expanded();
    speeds.sort_by(f64::total_cmp);
    for (a, b) in speeds.iter().zip(speeds.iter().rev()) {
        assert!((a + b).abs() < 1e-12);
    }

    let u = boost_velocity([0.4, 0.0, 0.0]);
    let moving = characteristic_roots(&ExtendedState::equilibrium(1.0, u), &m, &pair).unwrap();
    let roots = moving.expanded();
    // advected family moves with the flow
    assert!(roots.iter().any(|l| (l + 0.4).abs() < 1e-12));
    // no root exceeds light speed
    assert!(roots.iter().all(|l| l.abs() <= 1.0));
}

fn dense_directions(count: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    (0..count)
        .map(|_| loop {
            let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-3 && n <= 1.0 {
                break v.map(|x| x / n);
            }
        })
        .collect()
}

#[test]
fn stencil_time_step_matches_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dense = dense_directions(4000, &mut rng);
    let grid = TorusGrid::new(8).unwrap();
    for _ in 0..12 {
        let a1 = rng.gen_range(4.5..10.0);
        let m = TransportModel::conformal(1.0, 1.0, a1, 3.0 * a1 / (a1 - 1.0) + rng.gen_range(0.0..4.0)).unwrap();
        let speed = rng.gen_range(0.0..0.9);
        let dir = dense_directions(1, &mut rng)[0];
        let u = boost_velocity(dir.map(|x| x * speed));
        let c = m.coefficients(1.0);
        let dense_speed = max_signal_speed(&u, &c, &dense).unwrap();

        let data = InitialData::uniform(8, 1.0, [u[1], u[2], u[3]]);
        let psi = prepare_initial_psi(&grid, &data, &m, 1e-8).unwrap();
        let dt = cfl_dt(&psi, &m, grid.spacing(), 0.25).unwrap();
        let dense_dt = 0.25 * grid.spacing() / dense_speed;
        assert!((dt / dense_dt - 1.0).abs() <= 0.05, "dt {dt} dense {dense_dt}");
        assert!(dense_speed <= 1.0 + 1e-12);
    }
    assert_eq!(stencil_directions().len(), 26);
}

#[test]
fn equilibrium_time_step_formula() {
    let m = TransportModel::conformal(1.0, 1.0, 6.0, 4.0).unwrap();
    let grid = TorusGrid::new(16).unwrap();
    let psi = prepare_initial_psi(&grid, &InitialData::uniform(16, 1.0, [0.0; 3]), &m, 1e-8).unwrap();
    let s = rest_frame_speeds(&m).unwrap().last().copied().unwrap();
    let dt = cfl_dt(&psi, &m, grid.spacing(), 0.3).unwrap();
    assert!((dt - 0.3 * grid.spacing() / s).abs() < 1e-14);
}

#[test]
fn suites_are_deterministic_and_detect_corruption() {
    let set = samples(40, 9);
    let a = eigen_suite(&set, 1.0);
    let b = eigen_suite(&samples(40, 9), 1.0);
    assert!(a.passed());
    assert_eq!(a, b);
    assert!(det_suite(&set, 1.0).passed());

    assert!(!eigen_suite(&set, 1.05).passed());
    assert!(!det_suite(&set, 1.05).passed());

    assert!(eigen_suite(&samples(40, 10), 1.0).passed());
}
