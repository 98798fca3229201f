use cbdnk::evolve::{evolve_psi, field_rhs, prepare_initial_psi, DataField, EvolveConfig, InitialData, InitialSpec, Mode};
use cbdnk::grid::{GridField, TorusGrid};
use cbdnk::picard::{
    e0_distance, energy_fit, energy_monitor, linear_solve, picard_iterate, time_nodes, NodeTrajectory, PicardConfig,
};
use cbdnk::state::TransportModel;

fn model() -> TransportModel {
    TransportModel::conformal(1.0, 1.0, 6.0, 4.0).unwrap()
}

fn perturbed(grid: &TorusGrid, amplitude: f64) -> GridField {
    let spec = InitialSpec {
        modes: vec![
            Mode { field: DataField::Eps, k: [1, 0, 0], amplitude, phase: 0.0 },
            Mode { field: DataField::U2, k: [0, 0, 1], amplitude, phase: 0.2 },
        ],
        ..Default::default()
    };
    prepare_initial_psi(grid, &InitialData::from_spec(grid, &spec, &model()), &model(), 1e-8).unwrap()
}

fn rest(grid: &TorusGrid) -> GridField {
    prepare_initial_psi(grid, &InitialData::uniform(grid.n(), 1.0, [0.0; 3]), &model(), 1e-8).unwrap()
}

#[test]
fn equilibrium_converges_immediately() {
    let grid = TorusGrid::new(8).unwrap();
    let report = picard_iterate(&grid, &model(), &rest(&grid), &PicardConfig::default()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].a_n, 0.0);
    assert!(report.converged && !report.non_contracting);
    assert_eq!(report.contraction_verdict(0.5), Some(true));
    assert_eq!(report.to_csv().lines().count(), 2);
}

#[test]
fn frozen_equilibrium_is_a_fixed_point() {
    let grid = TorusGrid::new(8).unwrap();
    let psi = rest(&grid);
    let coeff = NodeTrajectory::constant(time_nodes(0.2, 4), &psi);
    let out = linear_solve(&grid, &model(), &coeff, &psi, true, true).unwrap();
    for v in &out.values {
        assert_eq!(v.axpy(-1.0, &psi).max_abs(), 0.0);
    }
}

#[test]
fn solve_without_source_is_linear_in_the_data() {
    let grid = TorusGrid::new(8).unwrap();
    let m = model();
    let coeff = NodeTrajectory::constant(time_nodes(0.1, 2), &perturbed(&grid, 0.05));
    let a = perturbed(&grid, 0.01);
    let b = perturbed(&grid, 0.03).scale(-0.5);
    let combo = a.scale(2.0).axpy(3.0, &b);
    let ua = linear_solve(&grid, &m, &coeff, &a, false, true).unwrap();
    let ub = linear_solve(&grid, &m, &coeff, &b, false, true).unwrap();
    let uc = linear_solve(&grid, &m, &coeff, &combo, false, true).unwrap();
    let want = ua.final_value().scale(2.0).axpy(3.0, ub.final_value());
    let err = uc.final_value().axpy(-1.0, &want).max_abs();
    assert!(err < 1e-12 * want.max_abs(), "{err:e}");
}

#[test]
fn nonlinear_solution_is_a_fixed_point_of_the_iteration() {
    let grid = TorusGrid::new(8).unwrap();
    let m = model();
    let psi = perturbed(&grid, 0.01);
    let config = EvolveConfig { n: 8, t_end: 0.2, steps: Some(4), ..Default::default() };
    let fine = evolve_psi(&grid, psi.clone(), &m, &EvolveConfig { steps: Some(16), cadence: 4, ..config.clone() }).unwrap();
    let derivatives = fine
        .snapshots
        .iter()
        .map(|s| field_rhs(&grid, &m, s, s, true, true).unwrap())
        .collect();
    let coeff = NodeTrajectory { times: fine.times.clone(), values: fine.snapshots.clone(), derivatives };
    let out = linear_solve(&grid, &m, &coeff, &psi, true, true).unwrap();
    let coarse = evolve_psi(&grid, psi, &m, &config).unwrap();
    let coarse_nodes = NodeTrajectory {
        times: coarse.times.clone(),
        derivatives: coarse.snapshots.iter().map(|s| s.scale(0.0)).collect(),
        values: coarse.snapshots,
    };
    let to_solution = e0_distance(&grid, &out, &coeff, 4.0);
    let discretization = e0_distance(&grid, &coarse_nodes, &coeff, 4.0);
    assert!(to_solution <= 10.0 * discretization, "{to_solution:e} vs {discretization:e}");
    assert!(to_solution < 1e-5);
}

#[test]
fn perturbed_iteration_contracts() {
    let grid = TorusGrid::new(8).unwrap();
    let config = PicardConfig { n_max: 20, t_end: 0.1, ..Default::default() };
    let report = picard_iterate(&grid, &model(), &perturbed(&grid, 0.01), &config).unwrap();
    assert!(report.converged && !report.non_contracting);
    assert_eq!(report.contraction_verdict(0.5), Some(true));
    assert!(report.rows.iter().all(|r| r.bound_ok != Some(false)));
    let csv = report.to_csv();
    assert!(csv.starts_with("n,a_n,ratio,bound_ok\n"));
    assert_eq!(csv.lines().count(), report.rows.len() + 1);
}

#[test]
fn short_runs_give_no_verdict() {
    let grid = TorusGrid::new(8).unwrap();
    let config = PicardConfig { n_max: 2, tol: 0.0, ..Default::default() };
    let report = picard_iterate(&grid, &model(), &perturbed(&grid, 0.01), &config).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.contraction_verdict(0.5), None);
    assert!(report.rows[1].ratio.is_some() && report.rows[1].bound_ok.is_none());
}

#[test]
fn distance_is_a_symmetric_seminorm() {
    let grid = TorusGrid::new(8).unwrap();
    let times = time_nodes(0.3, 3);
    let a = NodeTrajectory::constant(times.clone(), &perturbed(&grid, 0.02));
    let b = NodeTrajectory::constant(times, &rest(&grid));
    assert_eq!(e0_distance(&grid, &a, &a, 4.0), 0.0);
    let ab = e0_distance(&grid, &a, &b, 4.0);
    assert!(ab > 0.0 && (ab - e0_distance(&grid, &b, &a, 4.0)).abs() < 1e-15 * ab);
}

#[test]
fn energy_fit_examples() {
    let t: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
    let flat = energy_fit(&t, &[4.0; 6], &[0.0; 6]);
    assert_eq!((flat.omega, flat.m_tilde), (0.0, 1.0));
    assert!(flat.succeeded());

    let grow: Vec<f64> = t.iter().map(|x| 2.0 * (0.3 * x).exp()).collect();
    let fit = energy_fit(&t, &grow, &[0.0; 6]);
    assert!((fit.omega - 0.3).abs() < 1e-12);
    assert!(fit.succeeded());
    assert!(fit.max_violation <= 0.0);

    let sourced = energy_fit(&t, &[1.0, 1.1, 1.2, 1.3, 1.4, 1.5], &[1.0; 6]);
    assert_eq!(sourced.omega, 0.0);
    assert!((sourced.source_int[5] - 0.5).abs() < 1e-15);
    assert_eq!(sourced.to_csv().lines().next(), Some("t,norm_sq,source_int,bound_value"));
}

#[test]
fn energy_monitor_on_equilibrium() {
    let grid = TorusGrid::new(8).unwrap();
    let config = EvolveConfig { n: 8, t_end: 0.4, ..Default::default() };
    let traj = evolve_psi(&grid, rest(&grid), &model(), &config).unwrap();
    let e = energy_monitor(&traj);
    assert_eq!((e.omega, e.m_tilde), (0.0, 1.0));
    assert!(e.succeeded());
    assert_eq!(e.times.len(), traj.diagnostics.len());
}
