//! Frozen-coefficient iteration: each iterate solves the linear system whose matrices and
//! source come from the previous iterate, with difference norms and an energy-bound fit.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{cfl_dt, field_rhs, lagrange_derivative_weights, rk4_step, Trajectory};
use crate::grid::{sobolev_norm, GridField, TorusGrid};
use crate::state::TransportModel;

/// Values and time derivatives of `Psi` on uniform time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<GridField>,
    pub derivatives: Vec<GridField>,
}

impl NodeTrajectory {
    /// `psi` held fixed over the nodes.
    pub fn constant(times: Vec<f64>, psi: &GridField) -> Self {
        let zero = psi.scale(0.0);
        Self {
            values: vec![psi.clone(); times.len()],
            derivatives: vec![zero; times.len()],
            times,
        }
    }

    /// Cubic Hermite interpolation in time.
    pub fn at(&self, t: f64) -> GridField {
        let last = self.times.len() - 1;
        let j = match self.times.iter().position(|tn| *tn >= t) {
            Some(0) => return self.values[0].clone(),
            Some(j) => j,
            None => return self.values[last].clone(),
        };
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        if t == t1 {
            return self.values[j].clone();
        }
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        let (y0, y1) = (&self.values[j - 1], &self.values[j]);
        let (d0, d1) = (&self.derivatives[j - 1], &self.derivatives[j]);
        let data = (0..y0.data.len())
            .map(|i| h00 * y0.data[i] + h10 * h * d0.data[i] + h01 * y1.data[i] + h11 * h * d1.data[i])
            .collect();
        GridField { data, ..*y0 }
    }

    pub fn final_value(&self) -> &GridField {
        self.values.last().expect("at least one node")
    }
}

/// Uniform nodes `0, dt, ..., t_end`.
pub fn time_nodes(t_end: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|s| if s == steps { t_end } else { s as f64 * t_end / steps as f64 })
        .collect()
}

/// RK4 for `d_t u = -(A^0(v))^{-1} (A^i(v) d_i u + R(v))` with `v` interpolated at stage times.
pub fn linear_solve(
    grid: &TorusGrid,
    model: &TransportModel,
    coeff: &NodeTrajectory,
    initial: &GridField,
    with_source: bool,
    dealias: bool,
) -> Result<NodeTrajectory> {
    let f = |t: f64, y: &GridField| field_rhs(grid, model, &coeff.at(t), y, with_source, dealias);
    let times = coeff.times.clone();
    let mut values = vec![initial.clone()];
    let mut derivatives = Vec::with_capacity(times.len());
    for w in times.windows(2) {
        let (next, k1) = rk4_step(f, w[0], values.last().expect("nonempty"), w[1] - w[0])?;
        derivatives.push(k1);
        values.push(next);
    }
    let last = times[times.len() - 1];
    derivatives.push(f(last, values.last().expect("nonempty"))?);
    Ok(NodeTrajectory { times, values, derivatives })
}

/// Discrete `C(H^{r-1}) cap C^1(H^{r-2})` norm of `a - b`, with a Lagrange time derivative
/// over at most five neighbouring nodes.
pub fn e0_distance(grid: &TorusGrid, a: &NodeTrajectory, b: &NodeTrajectory, r: f64) -> f64 {
    let diff: Vec<GridField> = a.values.iter().zip(&b.values).map(|(x, y)| x.axpy(-1.0, y)).collect();
    let times = &a.times;
    let m = times.len();
    let mut sup = 0.0_f64;
    let mut sup_dt = 0.0_f64;
    for j in 0..m {
        sup = sup.max(sobolev_norm(grid, &diff[j], r - 1.0));
        if m < 2 {
            continue;
        }
        let width = m.min(5);
        let start = j.saturating_sub(2).min(m - width);
        let w = lagrange_derivative_weights(&times[start..start + width], times[j]);
        let mut d = diff[j].scale(0.0);
        for (k, wk) in w.iter().enumerate() {
            d = d.axpy(*wk, &diff[start + k]);
        }
        sup_dt = sup_dt.max(sobolev_norm(grid, &d, r - 2.0));
    }
    sup + sup_dt
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    pub n_max: usize,
    pub t_end: f64,
    pub cfl: f64,
    pub steps: Option<usize>,
    pub r: f64,
    pub dealias: bool,
    pub tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            n_max: 20,
            t_end: 0.1,
            cfl: 0.25,
            steps: None,
            r: 4.0,
            dealias: true,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRow {
    pub n: usize,
    pub a_n: f64,
    /// `a_n / a_{n-1}`.
    pub ratio: Option<f64>,
    /// `a_n <= c 2^-n + a_{n-1} / 4 + a_{n-2} / 16` with `c = 2 a_1`.
    pub bound_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub rows: Vec<IterationRow>,
    pub converged: bool,
    /// `a_n` grew three times in a row past `n = 4`.
    pub non_contracting: bool,
    pub last: NodeTrajectory,
}

impl IterationReport {
    /// `None` when there are fewer than four iterates to judge.
    pub fn contraction_verdict(&self, ratio: f64) -> Option<bool> {
        if self.converged && self.rows.len() < 4 {
            return Some(true);
        }
        if self.rows.len() < 4 {
            return None;
        }
        Some(self.rows.iter().filter(|r| r.n >= 4).all(|r| r.ratio.is_some_and(|q| q <= ratio)))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,a_n,ratio,bound_ok\n");
        for r in &self.rows {
            let ratio = r.ratio.map_or(String::new(), |q| format!("{q:.17e}"));
            let ok = r.bound_ok.map_or(String::new(), |b| b.to_string());
            s.push_str(&format!("{},{:.17e},{ratio},{ok}\n", r.n, r.a_n));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Step count used by the iteration and by a matching direct evolution.
pub fn picard_steps(grid: &TorusGrid, model: &TransportModel, psi0: &GridField, config: &PicardConfig) -> Result<usize> {
    match config.steps {
        Some(0) => Err(Error::Config("steps must be at least 1".into())),
        Some(s) => Ok(s),
        None => {
            let dt = cfl_dt(psi0, model, grid.spacing(), config.cfl)?;
            Ok((config.t_end / dt).ceil().max(1.0) as usize)
        }
    }
}

/// Iterates from the constant-in-time extension of `psi0`.
pub fn picard_iterate(
    grid: &TorusGrid,
    model: &TransportModel,
    psi0: &GridField,
    config: &PicardConfig,
) -> Result<IterationReport> {
    if !(config.t_end > 0.0) {
        return Err(Error::Config(format!("t_end = {} must be positive", config.t_end)));
    }
    let steps = picard_steps(grid, model, psi0, config)?;
    let mut prev = NodeTrajectory::constant(time_nodes(config.t_end, steps), psi0);
    let mut rows: Vec<IterationRow> = Vec::new();
    let mut converged = false;
    let mut growth = 0;
    let mut non_contracting = false;
    for n in 1..=config.n_max.max(1) {
        let next = linear_solve(grid, model, &prev, psi0, true, config.dealias)?;
        let a_n = e0_distance(grid, &next, &prev, config.r);
        let ratio = rows.last().map(|r| a_n / r.a_n);
        let bound_ok = if n >= 3 {
            let c = 2.0 * rows[0].a_n;
            Some(a_n <= c * 0.5_f64.powi(n as i32) + rows[n - 2].a_n / 4.0 + rows[n - 3].a_n / 16.0)
        } else {
            None
        };
        if n >= 4 && ratio.is_some_and(|q| q > 1.0) {
            growth += 1;
            if growth >= 3 {
                non_contracting = true;
            }
        } else {
            growth = 0;
        }
        rows.push(IterationRow { n, a_n, ratio, bound_ok });
        prev = next;
        if a_n < config.tol {
            converged = true;
            break;
        }
    }
    Ok(IterationReport {
        rows,
        converged,
        non_contracting,
        last: prev,
    })
}

/// Fitted constants of `|u(t)|_r^2 <= M exp(omega t) (|u(0)|_r^2 + int_0^t |R(s)|_r^2 ds)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub omega: f64,
    pub m_tilde: f64,
    pub max_violation: f64,
    pub times: Vec<f64>,
    pub norm_sq: Vec<f64>,
    pub source_int: Vec<f64>,
    pub bound: Vec<f64>,
}

impl EnergyReport {
    pub fn succeeded(&self) -> bool {
        self.omega.is_finite() && self.m_tilde.is_finite() && self.max_violation <= 0.0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,norm_sq,source_int,bound_value\n");
        for i in 0..self.times.len() {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.times[i], self.norm_sq[i], self.source_int[i], self.bound[i]
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Fits the smallest `omega >= 0` with `M = 1`, then the smallest `M >= 1` absorbing rounding.
pub fn energy_fit(times: &[f64], norm_sq: &[f64], source_sq: &[f64]) -> EnergyReport {
    let mut source_int = vec![0.0; times.len()];
    for i in 1..times.len() {
        source_int[i] = source_int[i - 1] + 0.5 * (times[i] - times[i - 1]) * (source_sq[i] + source_sq[i - 1]);
    }
    let base = |i: usize| norm_sq[0] + source_int[i];
    let mut omega = 0.0_f64;
    for i in 1..times.len() {
        if times[i] > times[0] {
            omega = omega.max((norm_sq[i] / base(i)).ln() / (times[i] - times[0]));
        }
    }
    let mut m_tilde = 1.0_f64;
    for i in 0..times.len() {
        m_tilde = m_tilde.max(norm_sq[i] / (base(i) * (omega * (times[i] - times[0])).exp()));
    }
    let bound: Vec<f64> = (0..times.len())
        .map(|i| m_tilde * (omega * (times[i] - times[0])).exp() * base(i))
        .collect();
    let max_violation = (0..times.len()).map(|i| norm_sq[i] - bound[i]).fold(f64::NEG_INFINITY, f64::max);
    EnergyReport {
        omega,
        m_tilde,
        max_violation,
        times: times.to_vec(),
        norm_sq: norm_sq.to_vec(),
        source_int,
        bound,
    }
}

/// [`energy_fit`] on the `norm_r` and source-norm diagnostics of a trajectory.
pub fn energy_monitor(traj: &Trajectory) -> EnergyReport {
    let t: Vec<f64> = traj.diagnostics.iter().map(|d| d.t).collect();
    let n: Vec<f64> = traj.diagnostics.iter().map(|d| d.norm_r * d.norm_r).collect();
    let s: Vec<f64> = traj.diagnostics.iter().map(|d| d.source_norm * d.source_norm).collect();
    energy_fit(&t, &n, &s)
}
