//! Initial data, CFL step size and method-of-lines RK4 evolution of `Psi` on the torus,
//! with constraint, density, conditioning and conservation monitors.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::max_signal_speed;
use crate::error::{Error, Result};
use crate::firstorder::{energy_momentum_mixed, lower_order, symbol_with, PointSolver};
use crate::grid::{dealias, gradient, sobolev_norm, spectral_derivative, GridField, TorusGrid};
use crate::state::{extend, idx, ExtendedState, FieldDerivatives, PrimaryState, TransportModel, PSI_LEN};

/// Time-stepping and diagnostics settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub n: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub dealias: bool,
    /// Steps between diagnostic rows and stored snapshots.
    pub cadence: usize,
    /// Sobolev order of the `norm_r` diagnostic.
    pub r: f64,
    pub eps_floor: f64,
    pub drift_limit: f64,
    /// Reset `u^0` from the spatial components after every step.
    pub renormalize: bool,
    /// Fixed step count overriding the CFL choice.
    pub steps: Option<usize>,
    pub store_snapshots: bool,
    /// Track the smallest singular value of `A^0` (one SVD per point per diagnostic row).
    pub a0_diagnostics: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            n: 16,
            cfl: 0.25,
            t_end: 0.1,
            dealias: true,
            cadence: 1,
            r: 4.0,
            eps_floor: 1e-8,
            drift_limit: 1e-4,
            renormalize: false,
            steps: None,
            store_snapshots: true,
            a0_diagnostics: true,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::Config(format!("cfl = {} must lie in (0, 1)", self.cfl)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end = {} must be positive", self.t_end)));
        }
        if self.cadence == 0 {
            return Err(Error::Config("cadence must be at least 1".into()));
        }
        if self.steps == Some(0) {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(-6.0..=6.0).contains(&self.r) {
            return Err(Error::Config(format!("r = {} outside [-6, 6]", self.r)));
        }
        TorusGrid::new(self.n).map(|_| ())
    }
}

/// Which initial-data field a Fourier mode perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataField {
    Eps,
    EpsDot,
    U1,
    U2,
    U3,
    UDot1,
    UDot2,
    UDot3,
}

/// `amplitude * sin(k . x + phase)` added to one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub field: DataField,
    pub k: [i64; 3],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Constant offsets plus a list of modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    /// `None` uses the model's `eps0`.
    pub eps: Option<f64>,
    pub eps_dot: f64,
    pub u: [f64; 3],
    pub u_dot: [f64; 3],
    pub modes: Vec<Mode>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            eps: None,
            eps_dot: 0.0,
            u: [0.0; 3],
            u_dot: [0.0; 3],
            modes: Vec::new(),
        }
    }
}

/// Energy density, its time derivative and the spatial velocity with its time derivative at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub n: usize,
    pub eps: Vec<f64>,
    pub eps_dot: Vec<f64>,
    pub u: [Vec<f64>; 3],
    pub u_dot: [Vec<f64>; 3],
}

impl InitialData {
    pub fn uniform(n: usize, eps: f64, u: [f64; 3]) -> Self {
        let m = n * n * n;
        Self {
            n,
            eps: vec![eps; m],
            eps_dot: vec![0.0; m],
            u: u.map(|v| vec![v; m]),
            u_dot: std::array::from_fn(|_| vec![0.0; m]),
        }
    }

    pub fn from_spec(grid: &TorusGrid, spec: &InitialSpec, model: &TransportModel) -> Self {
        let mut d = Self::uniform(grid.n(), spec.eps.unwrap_or(model.eps0), spec.u);
        d.eps_dot.iter_mut().for_each(|x| *x = spec.eps_dot);
        for (c, v) in d.u_dot.iter_mut().zip(spec.u_dot) {
            c.iter_mut().for_each(|x| *x = v);
        }
        for mode in &spec.modes {
            let target = match mode.field {
                DataField::Eps => &mut d.eps,
                DataField::EpsDot => &mut d.eps_dot,
                DataField::U1 => &mut d.u[0],
                DataField::U2 => &mut d.u[1],
                DataField::U3 => &mut d.u[2],
                DataField::UDot1 => &mut d.u_dot[0],
                DataField::UDot2 => &mut d.u_dot[1],
                DataField::UDot3 => &mut d.u_dot[2],
            };
            for (p, v) in target.iter_mut().enumerate() {
                let x = grid.coords(p);
                let phase = (0..3).map(|i| mode.k[i] as f64 * x[i]).sum::<f64>() + mode.phase;
                *v += mode.amplitude * phase.sin();
            }
        }
        d
    }

    fn check(&self, grid: &TorusGrid) -> Result<()> {
        let m = grid.len();
        let fields = [&self.eps, &self.eps_dot, &self.u[0], &self.u[1], &self.u[2], &self.u_dot[0], &self.u_dot[1], &self.u_dot[2]];
        if self.n != grid.n() || fields.iter().any(|f| f.len() != m) {
            return Err(Error::InvalidGrid(format!("initial data does not match n = {}", grid.n())));
        }
        for f in fields {
            if let Some(p) = f.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteState { location: Some(grid.location(p)) });
            }
        }
        Ok(())
    }
}

/// Builds `Psi` at `t = 0` from `(eps, d_t eps, u^i, d_t u^i)` with spectral spatial derivatives.
pub fn prepare_initial_psi(
    grid: &TorusGrid,
    data: &InitialData,
    model: &TransportModel,
    eps_floor: f64,
) -> Result<GridField> {
    data.check(grid)?;
    let (p_min, min) = data
        .eps
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (p, e)| if *e < acc.1 { (p, *e) } else { acc });
    if !(min >= eps_floor) || !(min > 0.0) {
        return Err(Error::DensityFloorViolated {
            min,
            floor: eps_floor,
            location: Some(grid.location(p_min)),
        });
    }
    let theta: Vec<f64> = data.eps.iter().map(|e| (e / model.eps0).powf(0.25)).collect();
    let dtheta: [Vec<f64>; 3] = std::array::from_fn(|i| grid.derivative(&theta, i));
    let du: [[Vec<f64>; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|b| grid.derivative(&data.u[b], i)));

    let points: Vec<Result<[f64; PSI_LEN]>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let us = [data.u[0][p], data.u[1][p], data.u[2][p]];
            let u0 = (1.0 + us.iter().map(|x| x * x).sum::<f64>()).sqrt();
            let u = [u0, us[0], us[1], us[2]];
            let mut d = FieldDerivatives::default();
            d.theta[0] = theta[p] * data.eps_dot[p] / (4.0 * data.eps[p]);
            for i in 0..3 {
                d.theta[i + 1] = dtheta[i][p];
            }
            for b in 0..3 {
                d.u[0][b + 1] = data.u_dot[b][p];
                for i in 0..3 {
                    d.u[i + 1][b + 1] = du[i][b][p];
                }
            }
            for m in 0..4 {
                d.u[m][0] = (0..3).map(|b| us[b] * d.u[m][b + 1]).sum::<f64>() / u0;
            }
            let primary = PrimaryState::new(data.eps[p], u)?;
            Ok(extend(&primary, &d, model)?.to_array())
        })
        .collect();
    let mut out = GridField::zeros(grid.n(), PSI_LEN);
    for (p, r) in points.into_iter().enumerate() {
        out.set_point(p, &r?);
    }
    Ok(out)
}

/// The 26 neighbour directions of a cube stencil, normalized.
pub fn stencil_directions() -> Vec<[f64; 3]> {
    let mut v = Vec::with_capacity(26);
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                if (a, b, c) != (0, 0, 0) {
                    let n = ((a * a + b * b + c * c) as f64).sqrt();
                    v.push([a as f64 / n, b as f64 / n, c as f64 / n]);
                }
            }
        }
    }
    v
}

/// Largest coordinate signal speed over the grid, sampled on [`stencil_directions`].
pub fn max_grid_speed(psi: &GridField, model: &TransportModel) -> Result<f64> {
    let dirs = stencil_directions();
    let speeds: Vec<Result<f64>> = (0..psi.points())
        .into_par_iter()
        .map(|p| {
            let s = ExtendedState::from_slice(&psi.point::<PSI_LEN>(p));
            max_signal_speed(&s.u, &model.checked_coefficients(s.theta)?, &dirs)
        })
        .collect();
    speeds.into_iter().try_fold(0.0_f64, |m, s| Ok(m.max(s?)))
}

/// `cfl * h / max(speed, 1e-6)`.
pub fn cfl_dt(psi: &GridField, model: &TransportModel, h: f64, cfl: f64) -> Result<f64> {
    Ok(cfl * h / max_grid_speed(psi, model)?.max(1e-6))
}

/// `-(A^0)^{-1} (A^i d_i arg + R)` with matrices and source taken from `coeff`.
///
/// With `coeff == arg` this is the right-hand side of the nonlinear system.
pub fn field_rhs(
    grid: &TorusGrid,
    model: &TransportModel,
    coeff: &GridField,
    arg: &GridField,
    with_source: bool,
    dealias_output: bool,
) -> Result<GridField> {
    let grad = gradient(grid, arg);
    let solver = PointSolver::new(model);
    let values: Vec<Result<[f64; PSI_LEN]>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let loc = Some(grid.location(p));
            let psi = ExtendedState::from_slice(&coeff.point::<PSI_LEN>(p));
            if !psi.is_finite() {
                return Err(Error::NonFiniteState { location: loc });
            }
            let dx: [[f64; PSI_LEN]; 3] = std::array::from_fn(|i| grad[i].point::<PSI_LEN>(p));
            let source = if with_source { Some(lower_order(&psi, model)?) } else { None };
            solver.solve(&psi, &dx, source.as_ref(), loc)
        })
        .collect();
    let mut out = GridField::zeros(grid.n(), PSI_LEN);
    for (p, v) in values.into_iter().enumerate() {
        out.set_point(p, &v?);
    }
    Ok(if dealias_output { dealias(grid, &out) } else { out })
}

/// Reduced source `-(A^0)^{-1} R` at every point.
pub fn reduced_source(grid: &TorusGrid, model: &TransportModel, psi: &GridField) -> Result<GridField> {
    let solver = PointSolver::new(model);
    let zero = [[0.0; PSI_LEN]; 3];
    let values: Vec<Result<[f64; PSI_LEN]>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let s = ExtendedState::from_slice(&psi.point::<PSI_LEN>(p));
            let r = lower_order(&s, model)?;
            solver.solve(&s, &zero, Some(&r), Some(grid.location(p)))
        })
        .collect();
    let mut out = GridField::zeros(grid.n(), PSI_LEN);
    for (p, v) in values.into_iter().enumerate() {
        out.set_point(p, &v?);
    }
    Ok(out)
}

/// One classical RK4 step of `y' = f(t, y)`; also returns `f(t, y)`.
pub fn rk4_step<F>(f: F, t: f64, y: &GridField, dt: f64) -> Result<(GridField, GridField)>
where
    F: Fn(f64, &GridField) -> Result<GridField>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &y.axpy(0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &y.axpy(0.5 * dt, &k2))?;
    let k4 = f(t + dt, &y.axpy(dt, &k3))?;
    let data = (0..y.data.len())
        .map(|i| y.data[i] + dt / 6.0 * (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]))
        .collect();
    Ok((GridField { data, ..*y }, k1))
}

/// Derivative at `x0` of the Lagrange interpolant through `(nodes, values)`, as weights on the values.
pub fn lagrange_derivative_weights(nodes: &[f64], x0: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut total = 0.0;
            for m in (0..n).filter(|m| *m != j) {
                let mut term = 1.0 / (nodes[j] - nodes[m]);
                for l in (0..n).filter(|l| *l != j && *l != m) {
                    term *= (x0 - nodes[l]) / (nodes[j] - nodes[l]);
                }
                total += term;
            }
            total
        })
        .collect()
}

/// Pointwise summary of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSummary {
    pub unit: (f64, usize),
    pub q_u: f64,
    pub s_u: f64,
    pub s_ten_u: f64,
    pub worst_defect: (f64, usize),
    pub min_eps: (f64, usize),
    pub sup: f64,
}

pub fn summarize(psi: &GridField, model: &TransportModel) -> StateSummary {
    let per: Vec<(f64, f64, f64, f64, f64)> = (0..psi.points())
        .into_par_iter()
        .map(|p| {
            let s = ExtendedState::from_slice(&psi.point::<PSI_LEN>(p));
            let d = s.defects();
            (d.unit, d.q_u, d.s_u, d.s_ten_u, model.eps(s.theta))
        })
        .collect();
    let mut out = StateSummary {
        unit: (0.0, 0),
        q_u: 0.0,
        s_u: 0.0,
        s_ten_u: 0.0,
        worst_defect: (0.0, 0),
        min_eps: (f64::INFINITY, 0),
        sup: psi.max_abs(),
    };
    for (p, (unit, q, s, st, eps)) in per.into_iter().enumerate() {
        if unit > out.unit.0 {
            out.unit = (unit, p);
        }
        out.q_u = out.q_u.max(q);
        out.s_u = out.s_u.max(s);
        out.s_ten_u = out.s_ten_u.max(st);
        let worst = unit.max(q).max(s).max(st);
        if worst > out.worst_defect.0 {
            out.worst_defect = (worst, p);
        }
        if eps < out.min_eps.0 || eps.is_nan() {
            out.min_eps = (eps, p);
        }
    }
    out
}

/// Smallest singular value of `A^0` over the grid.
pub fn min_a0_singular_value(psi: &GridField, model: &TransportModel) -> f64 {
    (0..psi.points())
        .into_par_iter()
        .map(|p| {
            let s = ExtendedState::from_slice(&psi.point::<PSI_LEN>(p));
            let a0 = symbol_with(&s, &model.coefficients(s.theta), &[1.0, 0.0, 0.0, 0.0], 1.0);
            a0.singular_values().min()
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// `T^mu_nu` split into the time row (4 components) and the spatial divergence `d_i T^i_nu`.
pub fn stress_parts(grid: &TorusGrid, model: &TransportModel, psi: &GridField) -> (GridField, GridField) {
    let t: Vec<[[f64; 4]; 4]> = (0..psi.points())
        .into_par_iter()
        .map(|p| energy_momentum_mixed(&ExtendedState::from_slice(&psi.point::<PSI_LEN>(p)), model))
        .collect();
    let row = |mu: usize| GridField::from_components(psi.n, (0..4).map(|nu| t.iter().map(|m| m[mu][nu]).collect()).collect());
    let mut div = GridField::zeros(psi.n, 4);
    for i in 0..3 {
        let d = spectral_derivative(grid, &row(i + 1), i);
        div = div.axpy(1.0, &d);
    }
    (row(0), div)
}

/// One diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    pub constraint_drift: f64,
    pub qu_drift: f64,
    pub su_drift: f64,
    pub stu_drift: f64,
    pub min_eps: f64,
    /// `|d_mu T^mu_nu|_0` with a Lagrange time derivative over neighbouring steps.
    pub div_t_res: f64,
    pub norm_r: f64,
    pub minsv_a0: f64,
    /// `|-(A^0)^{-1} R|_r`.
    pub source_norm: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "t,constraint_drift,qu_drift,su_drift,stu_drift,min_eps,divT_res,norm_r,minsv_A0";

impl Diagnostics {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.t,
            self.constraint_drift,
            self.qu_drift,
            self.su_drift,
            self.stu_drift,
            self.min_eps,
            self.div_t_res,
            self.norm_r,
            self.minsv_a0
        )
    }
}

/// A monitor that stopped the run.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorTrip {
    pub time: f64,
    pub step: usize,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub dt: f64,
    pub steps_taken: usize,
    pub times: Vec<f64>,
    pub snapshots: Vec<GridField>,
    pub diagnostics: Vec<Diagnostics>,
    pub trip: Option<MonitorTrip>,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.trip.is_none()
    }

    pub fn final_time(&self) -> f64 {
        self.diagnostics.last().map_or(0.0, |d| d.t)
    }

    pub fn write_diagnostics(&self, path: &Path) -> Result<()> {
        let mut s = String::from(DIAGNOSTICS_HEADER);
        s.push('\n');
        for d in &self.diagnostics {
            s.push_str(&d.csv_row());
            s.push('\n');
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// A stepping evolution that owns its state.
#[derive(Debug, Clone)]
pub struct Evolver {
    pub grid: TorusGrid,
    pub model: TransportModel,
    pub config: EvolveConfig,
    psi: GridField,
    t: f64,
    dt: f64,
    step: usize,
    total_steps: usize,
    initial_sup: f64,
}

impl Evolver {
    pub fn new(data: &InitialData, model: &TransportModel, config: &EvolveConfig) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let grid = TorusGrid::new(config.n)?;
        let psi = prepare_initial_psi(&grid, data, model, config.eps_floor)?;
        Self::from_psi(grid, psi, model, config)
    }

    pub fn from_psi(grid: TorusGrid, psi: GridField, model: &TransportModel, config: &EvolveConfig) -> Result<Self> {
        let total_steps = match config.steps {
            Some(s) => s,
            None => {
                let dt = cfl_dt(&psi, model, grid.spacing(), config.cfl)?;
                (config.t_end / dt).ceil().max(1.0) as usize
            }
        };
        let initial_sup = psi.max_abs();
        Ok(Self {
            grid,
            model: model.clone(),
            config: config.clone(),
            psi,
            t: 0.0,
            dt: config.t_end / total_steps as f64,
            step: 0,
            total_steps,
            initial_sup,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.total_steps
    }

    pub fn state(&self) -> &GridField {
        &self.psi
    }

    pub fn rhs(&self, psi: &GridField) -> Result<GridField> {
        field_rhs(&self.grid, &self.model, psi, psi, true, self.config.dealias)
    }

    /// Advances one RK4 step and applies the monitors.
    pub fn step(&mut self) -> Result<()> {
        let (mut next, _) = rk4_step(|_, y| self.rhs(y), self.t, &self.psi, self.dt)?;
        if self.config.renormalize {
            renormalize_velocity(&mut next);
        }
        if let Some(p) = next.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState {
                location: Some(self.grid.location(p % self.grid.len())),
            });
        }
        self.psi = next;
        self.step += 1;
        self.t = if self.step == self.total_steps { self.config.t_end } else { self.step as f64 * self.dt };
        self.monitor(&summarize(&self.psi, &self.model))
    }

    fn monitor(&self, s: &StateSummary) -> Result<()> {
        if s.worst_defect.0 > self.config.drift_limit {
            return Err(Error::ConstraintDrift {
                value: s.worst_defect.0,
                limit: self.config.drift_limit,
                location: Some(self.grid.location(s.worst_defect.1)),
            });
        }
        if !(s.min_eps.0 >= self.config.eps_floor) {
            return Err(Error::DensityFloorViolated {
                min: s.min_eps.0,
                floor: self.config.eps_floor,
                location: Some(self.grid.location(s.min_eps.1)),
            });
        }
        if s.sup > 1e6 * self.initial_sup.max(f64::MIN_POSITIVE) {
            return Err(Error::Runaway { ratio: s.sup / self.initial_sup });
        }
        Ok(())
    }
}

/// `u^0 = sqrt(1 + u^i u^i)` at every point.
pub fn renormalize_velocity(psi: &mut GridField) {
    let m = psi.points();
    for p in 0..m {
        let s2: f64 = (1..4).map(|i| psi.data[(idx::U + i) * m + p].powi(2)).sum();
        psi.data[idx::U * m + p] = (1.0 + s2).sqrt();
    }
}

struct DivTracker {
    nodes: VecDeque<(usize, f64, GridField)>,
    pending: Vec<(usize, usize, f64, GridField)>,
}

impl DivTracker {
    fn push(&mut self, step: usize, t: f64, row0: GridField) {
        self.nodes.push_back((step, t, row0));
        if self.nodes.len() > 5 {
            self.nodes.pop_front();
        }
    }

    fn ready(&self, center: usize) -> bool {
        self.nodes.back().is_some_and(|n| n.0 >= (center + 2).max(4))
    }

    fn residual(&self, grid: &TorusGrid, t: f64, div: &GridField) -> f64 {
        if self.nodes.len() < 2 {
            return f64::NAN;
        }
        let times: Vec<f64> = self.nodes.iter().map(|n| n.1).collect();
        let w = lagrange_derivative_weights(&times, t);
        let mut res = div.clone();
        for (wj, node) in w.iter().zip(&self.nodes) {
            res = res.axpy(*wj, &node.2);
        }
        sobolev_norm(grid, &res, 0.0)
    }

    fn flush(&mut self, grid: &TorusGrid, diags: &mut [Diagnostics], all: bool) {
        let mut keep = Vec::new();
        for (row, center, t, div) in std::mem::take(&mut self.pending) {
            if all || self.ready(center) {
                diags[row].div_t_res = self.residual(grid, t, &div);
            } else {
                keep.push((row, center, t, div));
            }
        }
        self.pending = keep;
    }
}

fn diagnose(ev: &Evolver, summary: &StateSummary) -> Result<Diagnostics> {
    let source = reduced_source(&ev.grid, &ev.model, &ev.psi)?;
    Ok(Diagnostics {
        t: ev.t,
        constraint_drift: summary.unit.0,
        qu_drift: summary.q_u,
        su_drift: summary.s_u,
        stu_drift: summary.s_ten_u,
        min_eps: summary.min_eps.0,
        div_t_res: f64::NAN,
        norm_r: sobolev_norm(&ev.grid, &ev.psi, ev.config.r),
        minsv_a0: if ev.config.a0_diagnostics { min_a0_singular_value(&ev.psi, &ev.model) } else { f64::NAN },
        source_norm: sobolev_norm(&ev.grid, &source, ev.config.r),
    })
}

/// Runs to `t_end` or until a monitor trips.
pub fn evolve(data: &InitialData, model: &TransportModel, config: &EvolveConfig) -> Result<Trajectory> {
    let ev = Evolver::new(data, model, config)?;
    run(ev)
}

/// [`evolve`] from an already assembled `Psi`.
pub fn evolve_psi(grid: &TorusGrid, psi: GridField, model: &TransportModel, config: &EvolveConfig) -> Result<Trajectory> {
    config.validate()?;
    run(Evolver::from_psi(grid.clone(), psi, model, config)?)
}

fn run(mut ev: Evolver) -> Result<Trajectory> {
    let mut traj = Trajectory {
        n: ev.grid.n(),
        dt: ev.dt,
        steps_taken: 0,
        times: Vec::new(),
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        trip: None,
    };
    let mut tracker = DivTracker {
        nodes: VecDeque::new(),
        pending: Vec::new(),
    };
    let record = |ev: &Evolver, traj: &mut Trajectory, tracker: &mut DivTracker, summary: &StateSummary| -> Result<()> {
        let (row0, div) = stress_parts(&ev.grid, &ev.model, &ev.psi);
        tracker.push(ev.step, ev.t, row0);
        if ev.step.is_multiple_of(ev.config.cadence) || ev.is_done() {
            traj.diagnostics.push(diagnose(ev, summary)?);
            tracker.pending.push((traj.diagnostics.len() - 1, ev.step, ev.t, div));
            traj.times.push(ev.t);
            if ev.config.store_snapshots {
                traj.snapshots.push(ev.psi.clone());
            }
        }
        tracker.flush(&ev.grid, &mut traj.diagnostics, false);
        Ok(())
    };

    let summary = summarize(&ev.psi, &ev.model);
    record(&ev, &mut traj, &mut tracker, &summary)?;
    while !ev.is_done() {
        let step = ev.step + 1;
        let t_next = if step == ev.total_steps { ev.config.t_end } else { step as f64 * ev.dt };
        if let Err(error) = ev.step() {
            // a monitor error leaves the offending state in place
            let (time, at) = if ev.step == step { (ev.t, ev.step) } else { (t_next, step) };
            if ev.step == step {
                let s = summarize(&ev.psi, &ev.model);
                if let Ok(d) = diagnose(&ev, &s) {
                    traj.diagnostics.push(d);
                    traj.times.push(ev.t);
                }
            }
            traj.trip = Some(MonitorTrip { time, step: at, error });
            break;
        }
        let summary = summarize(&ev.psi, &ev.model);
        record(&ev, &mut traj, &mut tracker, &summary)?;
    }
    tracker.flush(&ev.grid, &mut traj.diagnostics, true);
    traj.steps_taken = ev.step;
    Ok(traj)
}

/// Snapshot file magic.
pub const SNAPSHOT_MAGIC: &[u8; 6] = b"CBDNK1";

pub fn write_snapshot(path: &Path, t: f64, psi: &GridField) -> Result<()> {
    let mut buf = Vec::with_capacity(30 + psi.data.len() * 8);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(psi.n as u64).to_le_bytes());
    buf.extend_from_slice(&(psi.components as u64).to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    for x in &psi.data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(f64, GridField)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 30 || &buf[..6] != SNAPSHOT_MAGIC {
        return Err(Error::Io(format!("{} is not a snapshot file", path.display())));
    }
    let word = |o: usize| <[u8; 8]>::try_from(&buf[o..o + 8]).expect("eight bytes");
    let n = u64::from_le_bytes(word(6)) as usize;
    let comps = u64::from_le_bytes(word(14)) as usize;
    let t = f64::from_le_bytes(word(22));
    let count = n * n * n * comps;
    if buf.len() != 30 + 8 * count {
        return Err(Error::Io(format!("{}: truncated snapshot", path.display())));
    }
    let data = (0..count).map(|i| f64::from_le_bytes(word(30 + 8 * i))).collect();
    Ok((t, GridField::new(n, comps, data)?))
}
