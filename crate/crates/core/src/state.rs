//! Physical and extended fluid state.
//!
//! The extended state `Psi` has 30 components in the fixed order
//! `(A, Q^0..Q^3, S^0..S^3, S_0^., S_1^., S_2^., S_3^., theta, u^0..u^3)`,
//! where `S_k^.` is the row `S_k^0..S_k^3` (first index down, second up).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{self, check_unit_timelike, contract, dot, lower, Projector, TwoTensor, Variance};

pub const PSI_LEN: usize = 30;

/// Offsets into the flattened extended state.
pub mod idx {
    pub const A: usize = 0;
    pub const Q: usize = 1;
    pub const S_VEC: usize = 5;
    pub const S_TEN: usize = 9;
    pub const THETA: usize = 25;
    pub const U: usize = 26;

    /// Offset of `S_k^b`.
    #[inline]
    pub const fn s_ten(k: usize, b: usize) -> usize {
        S_TEN + 4 * k + b
    }
}

/// Human-readable component names in `Psi` order.
pub const COMPONENT_NAMES: [&str; PSI_LEN] = [
    "A", "Q0", "Q1", "Q2", "Q3", "S0", "S1", "S2", "S3", "S00", "S01", "S02", "S03", "S10",
    "S11", "S12", "S13", "S20", "S21", "S22", "S23", "S30", "S31", "S32", "S33", "theta", "u0",
    "u1", "u2", "u3",
];

/// Tolerance for the orthogonality and normalization invariants of `Psi`.
pub const PSI_TOL: f64 = 1e-10;

/// Coefficients below this are treated as degenerate.
pub const COEFF_FLOOR: f64 = 1e-300;

/// Temperature dependence of the shear viscosity.
#[derive(Clone)]
pub enum ViscosityLaw {
    /// `eta0 * theta^exponent`; the conformal default has exponent 3.
    Power { eta0: f64, exponent: f64 },
    /// User-supplied law returning `(eta, d eta / d theta)`.
    Custom {
        name: String,
        law: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
    },
}

impl fmt::Debug for ViscosityLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViscosityLaw::Power { eta0, exponent } => f
                .debug_struct("Power")
                .field("eta0", eta0)
                .field("exponent", exponent)
                .finish(),
            ViscosityLaw::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

impl ViscosityLaw {
    pub fn conformal(eta0: f64) -> Self {
        ViscosityLaw::Power { eta0, exponent: 3.0 }
    }

    pub fn eta(&self, theta: f64) -> f64 {
        match self {
            ViscosityLaw::Power { eta0, exponent } => eta0 * theta.powf(*exponent),
            ViscosityLaw::Custom { law, .. } => law(theta).0,
        }
    }

    /// Logarithmic slope `theta eta'(theta) / eta(theta)`.
    pub fn log_slope(&self, theta: f64) -> f64 {
        match self {
            ViscosityLaw::Power { exponent, .. } => *exponent,
            ViscosityLaw::Custom { law, .. } => {
                let (eta, deta) = law(theta);
                theta * deta / eta
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            ViscosityLaw::Power { exponent, .. } => format!("power(theta^{exponent})"),
            ViscosityLaw::Custom { name, .. } => name.clone(),
        }
    }
}

/// Pointwise transport coefficients `(eta, chi, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub eta: f64,
    pub chi: f64,
    pub lambda: f64,
}

impl Coefficients {
    pub fn new(eta: f64, chi: f64, lambda: f64) -> Self {
        Self { eta, chi, lambda }
    }

    /// `chi > 4 eta > 0` and `lambda >= 3 chi eta / (chi - eta)`.
    pub fn is_causal(&self) -> bool {
        self.eta > 0.0 && self.chi > 4.0 * self.eta && self.lambda >= self.lambda_bound()
    }

    pub fn lambda_bound(&self) -> f64 {
        3.0 * self.chi * self.eta / (self.chi - self.eta)
    }
}

/// Conformal equation of state `eps = eps0 theta^4` with `chi = a1 eta`, `lambda = a2 eta`.
#[derive(Debug, Clone)]
pub struct TransportModel {
    pub eps0: f64,
    pub a1: f64,
    pub a2: f64,
    pub law: ViscosityLaw,
}

/// `a2` lower bound `3 a1 / (a1 - 1)`.
pub fn a2_bound(a1: f64) -> f64 {
    3.0 * a1 / (a1 - 1.0)
}

impl TransportModel {
    /// Validated constructor: rejects `a1 <= 4` or `a2 < 3 a1 / (a1 - 1)`.
    pub fn new(eps0: f64, a1: f64, a2: f64, law: ViscosityLaw) -> Result<Self> {
        let model = Self::unchecked(eps0, a1, a2, law);
        model.validate()?;
        Ok(model)
    }

    /// Default conformal model with `eta = eta0 theta^3`.
    pub fn conformal(eps0: f64, eta0: f64, a1: f64, a2: f64) -> Result<Self> {
        Self::new(eps0, a1, a2, ViscosityLaw::conformal(eta0))
    }

    /// Builds a model without admissibility checks, for exploring the causality boundary.
    pub fn unchecked(eps0: f64, a1: f64, a2: f64, law: ViscosityLaw) -> Self {
        Self { eps0, a1, a2, law }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) {
            return Err(Error::InadmissibleModel(format!("eps0 = {} must be positive", self.eps0)));
        }
        if !(self.a1 > 4.0) {
            return Err(Error::InadmissibleModel(format!("a1 = {} must exceed 4", self.a1)));
        }
        let bound = a2_bound(self.a1);
        if !(self.a2 >= bound) {
            return Err(Error::InadmissibleModel(format!(
                "a2 = {} must be at least 3 a1 / (a1 - 1) = {}",
                self.a2, bound
            )));
        }
        if let ViscosityLaw::Power { eta0, .. } = self.law {
            if !(eta0 > 0.0) {
                return Err(Error::InadmissibleModel(format!("eta0 = {eta0} must be positive")));
            }
        }
        Ok(())
    }

    pub fn is_admissible(&self) -> bool {
        self.validate().is_ok()
    }

    #[inline]
    pub fn eps(&self, theta: f64) -> f64 {
        self.eps0 * theta.powi(4)
    }

    #[inline]
    pub fn eta(&self, theta: f64) -> f64 {
        self.law.eta(theta)
    }

    pub fn coefficients(&self, theta: f64) -> Coefficients {
        let eta = self.eta(theta);
        Coefficients::new(eta, self.a1 * eta, self.a2 * eta)
    }

    /// Coefficients with the degeneracy check applied.
    pub fn checked_coefficients(&self, theta: f64) -> Result<Coefficients> {
        if !(theta > COEFF_FLOOR) {
            return Err(Error::DegenerateCoefficient { name: "theta", value: theta });
        }
        let c = self.coefficients(theta);
        for (name, value) in [("eta", c.eta), ("chi", c.chi), ("lambda", c.lambda)] {
            if !(value > COEFF_FLOOR) {
                return Err(Error::DegenerateCoefficient { name, value });
            }
        }
        Ok(c)
    }
}

/// `theta = (eps / eps0)^(1/4)`.
pub fn theta_from_eps(eps: f64, model: &TransportModel) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveDensity(eps));
    }
    Ok((eps / model.eps0).powf(0.25))
}

/// Energy density and four-velocity at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimaryState {
    pub eps: f64,
    pub u: [f64; 4],
}

impl PrimaryState {
    pub fn new(eps: f64, u: [f64; 4]) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::NonPositiveDensity(eps));
        }
        if !(u[0] > 0.0) {
            return Err(Error::NotUnitTimelike { norm: dot(&u, &u) });
        }
        check_unit_timelike(&u, tensor::UNIT_TOL)?;
        Ok(Self { eps, u })
    }

    pub fn theta(&self, model: &TransportModel) -> Result<f64> {
        theta_from_eps(self.eps, model)
    }
}

/// First derivatives of `(theta, u)`: `theta[m] = d_m theta`, `u[m][n] = d_m u^n`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldDerivatives {
    pub theta: [f64; 4],
    pub u: [[f64; 4]; 4],
}

/// Maximum constraint defects of an extended state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintDefects {
    /// `|u.u + 1|`
    pub unit: f64,
    /// `|Q_a u^a|`
    pub q_u: f64,
    /// `|S^a u_a|`
    pub s_u: f64,
    /// max of `|u^a S_a^b|` and `|S_a^b u_b|`
    pub s_ten_u: f64,
}

impl ConstraintDefects {
    pub fn max(&self) -> f64 {
        self.unit.max(self.q_u).max(self.s_u).max(self.s_ten_u)
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            unit: self.unit.max(other.unit),
            q_u: self.q_u.max(other.q_u),
            s_u: self.s_u.max(other.s_u),
            s_ten_u: self.s_ten_u.max(other.s_ten_u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExtendedState {
    pub a: f64,
    pub q: [f64; 4],
    pub s_vec: [f64; 4],
    /// `s_ten[k][b] = S_k^b`
    pub s_ten: [[f64; 4]; 4],
    pub theta: f64,
    pub u: [f64; 4],
}

impl ExtendedState {
    /// Constant-state equilibrium: all first-order variables vanish.
    pub fn equilibrium(theta: f64, u: [f64; 4]) -> Self {
        Self {
            theta,
            u,
            ..Default::default()
        }
    }

    pub fn from_slice(p: &[f64]) -> Self {
        debug_assert!(p.len() >= PSI_LEN);
        let v4 = |o: usize| [p[o], p[o + 1], p[o + 2], p[o + 3]];
        let mut s_ten = [[0.0; 4]; 4];
        for (k, row) in s_ten.iter_mut().enumerate() {
            *row = v4(idx::s_ten(k, 0));
        }
        Self {
            a: p[idx::A],
            q: v4(idx::Q),
            s_vec: v4(idx::S_VEC),
            s_ten,
            theta: p[idx::THETA],
            u: v4(idx::U),
        }
    }

    pub fn to_array(&self) -> [f64; PSI_LEN] {
        let mut p = [0.0; PSI_LEN];
        p[idx::A] = self.a;
        p[idx::Q..idx::Q + 4].copy_from_slice(&self.q);
        p[idx::S_VEC..idx::S_VEC + 4].copy_from_slice(&self.s_vec);
        for k in 0..4 {
            p[idx::s_ten(k, 0)..idx::s_ten(k, 0) + 4].copy_from_slice(&self.s_ten[k]);
        }
        p[idx::THETA] = self.theta;
        p[idx::U..idx::U + 4].copy_from_slice(&self.u);
        p
    }

    /// `S_m^m`, which equals the expansion `d_m u^m` on extended fields.
    #[inline]
    pub fn expansion(&self) -> f64 {
        (0..4).map(|k| self.s_ten[k][k]).sum()
    }

    pub fn projector(&self) -> Projector {
        Projector::unchecked(&self.u)
    }

    pub fn defects(&self) -> ConstraintDefects {
        let ul = lower(&self.u);
        let mut s_ten_u = 0.0_f64;
        for b in 0..4 {
            let left: f64 = (0..4).map(|a| self.u[a] * self.s_ten[a][b]).sum();
            s_ten_u = s_ten_u.max(left.abs());
        }
        for a in 0..4 {
            let right = contract(&ul, &self.s_ten[a]);
            s_ten_u = s_ten_u.max(right.abs());
        }
        ConstraintDefects {
            unit: (dot(&self.u, &self.u) + 1.0).abs(),
            q_u: dot(&self.q, &self.u).abs(),
            s_u: dot(&self.s_vec, &self.u).abs(),
            s_ten_u,
        }
    }

    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::NonPositiveDensity(self.theta));
        }
        let d = self.defects();
        if d.unit > tol {
            return Err(Error::NotUnitTimelike { norm: dot(&self.u, &self.u) });
        }
        if d.max() > tol {
            return Err(Error::Config(format!("extended state violates orthogonality: {d:?}")));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Builds `Psi` from `(eps, u)` and first derivatives of `(theta, u)`.
pub fn extend(
    primary: &PrimaryState,
    derivs: &FieldDerivatives,
    model: &TransportModel,
) -> Result<ExtendedState> {
    check_unit_timelike(&primary.u, tensor::UNIT_TOL)?;
    let theta = primary.theta(model)?;
    Ok(extend_unchecked(theta, &primary.u, derivs, model))
}

/// [`extend`] on raw `(theta, u)` without normalization checks.
pub fn extend_unchecked(
    theta: f64,
    u: &[f64; 4],
    derivs: &FieldDerivatives,
    model: &TransportModel,
) -> ExtendedState {
    let c = model.coefficients(theta);
    let proj = Projector::unchecked(u);
    let dth = &derivs.theta;
    let du = &derivs.u;

    let u_dtheta = contract(dth, u) / theta;
    let div_u: f64 = (0..4).map(|m| du[m][m]).sum();
    let a = 3.0 * c.chi * (u_dtheta + div_u / 3.0);

    // S^a = u^m d_m u^a
    let mut s_vec = [0.0; 4];
    for (a_, s) in s_vec.iter_mut().enumerate() {
        *s = (0..4).map(|m| u[m] * du[m][a_]).sum();
    }

    // S_a^b = Pi_a^m d_m u^b
    let mut s_ten = [[0.0; 4]; 4];
    for (a_, row) in s_ten.iter_mut().enumerate() {
        for (b, out) in row.iter_mut().enumerate() {
            *out = (0..4).map(|m| proj.down_up(a_, m) * du[m][b]).sum();
        }
    }

    // Q^a = lambda (theta^-1 Pi^{am} d_m theta + S^a)
    let pdth = proj.project_covector(dth);
    let mut q = [0.0; 4];
    for (a_, qa) in q.iter_mut().enumerate() {
        *qa = c.lambda * (pdth[a_] / theta + s_vec[a_]);
    }

    ExtendedState {
        a,
        q,
        s_vec,
        s_ten,
        theta,
        u: *u,
    }
}

/// First derivatives recovered from `Psi` through the gradient identities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gradients {
    /// `theta^-1 d_a theta` (lower index).
    pub log_theta: [f64; 4],
    /// `d_a u^b` as `[a][b]`.
    pub u: [[f64; 4]; 4],
}

pub fn reconstruct_gradients(psi: &ExtendedState, model: &TransportModel) -> Gradients {
    let c = model.coefficients(psi.theta);
    reconstruct_with(psi, &c)
}

pub(crate) fn reconstruct_with(psi: &ExtendedState, c: &Coefficients) -> Gradients {
    let ul = lower(&psi.u);
    let ql = lower(&psi.q);
    let trace = psi.expansion();
    let proj = psi.projector();
    let mut log_theta = [0.0; 4];
    for (a, out) in log_theta.iter_mut().enumerate() {
        let pi_s: f64 = (0..4).map(|m| proj.down(a, m) * psi.s_vec[m]).sum();
        *out = -ul[a] * psi.a / (3.0 * c.chi) + ql[a] / c.lambda + ul[a] * trace / 3.0 - pi_s;
    }
    let mut u = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            u[a][b] = -ul[a] * psi.s_vec[b] + psi.s_ten[a][b];
        }
    }
    Gradients { log_theta, u }
}

/// `sigma_{ab} = S_{ab} + S_{ba} - (2/3) Pi_{ab} S_m^m`, both indices down.
pub fn shear(psi: &ExtendedState) -> TwoTensor {
    TwoTensor::new(shear_array(psi), Variance::Down, Variance::Down)
}

pub(crate) fn shear_array(psi: &ExtendedState) -> [[f64; 4]; 4] {
    let proj = psi.projector();
    let trace = psi.expansion();
    let mut s_low = [[0.0; 4]; 4];
    for a in 0..4 {
        s_low[a] = lower(&psi.s_ten[a]);
    }
    let mut sigma = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            sigma[a][b] = s_low[a][b] + s_low[b][a] - 2.0 / 3.0 * proj.down(a, b) * trace;
        }
    }
    sigma
}

/// `T_{ab} = (eps + A)(u_a u_b + Pi_{ab}/3) - eta sigma_{ab} + u_a Q_b + u_b Q_a`, both indices down.
pub fn energy_momentum(psi: &ExtendedState, model: &TransportModel) -> TwoTensor {
    TwoTensor::new(energy_momentum_array(psi, model), Variance::Down, Variance::Down)
}

pub(crate) fn energy_momentum_array(psi: &ExtendedState, model: &TransportModel) -> [[f64; 4]; 4] {
    let eps = model.eps(psi.theta);
    let eta = model.eta(psi.theta);
    let sigma = shear_array(psi);
    let proj = psi.projector();
    let ul = lower(&psi.u);
    let ql = lower(&psi.q);
    let mut t = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            t[a][b] = (eps + psi.a) * (ul[a] * ul[b] + proj.down(a, b) / 3.0) - eta * sigma[a][b]
                + ul[a] * ql[b]
                + ul[b] * ql[a];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::boost_velocity;

    fn model() -> TransportModel {
        TransportModel::conformal(1.0, 1.0, 6.0, 4.0).unwrap()
    }

    #[test]
    fn theta_examples() {
        let m = TransportModel::conformal(1.2, 1.0, 6.0, 4.0).unwrap();
        assert!((theta_from_eps(1.2, &m).unwrap() - 1.0).abs() < 1e-15);
        assert!((theta_from_eps(16.0 * 1.2, &m).unwrap() - 2.0).abs() < 1e-15);
        // (3.7 / 1.2)^(1/4) = 1.325106...
        let oracle = (3.7_f64 / 1.2).sqrt().sqrt();
        assert!((theta_from_eps(3.7, &m).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 1.32541).abs() < 1e-3);
        assert!(matches!(theta_from_eps(0.0, &m), Err(Error::NonPositiveDensity(_))));
        assert!(matches!(theta_from_eps(-1.0, &m), Err(Error::NonPositiveDensity(_))));
    }

    #[test]
    fn model_admissibility() {
        assert!(TransportModel::conformal(1.0, 1.0, 4.0, 10.0).is_err());
        assert!(TransportModel::conformal(1.0, 1.0, 5.0, 3.7).is_err());
        assert!(TransportModel::conformal(1.0, 1.0, 5.0, 3.75).is_ok());
        let c = model().coefficients(2.0);
        assert!((c.eta - 8.0).abs() < 1e-12);
        assert!((c.chi - 48.0).abs() < 1e-12);
        assert!((c.lambda - 32.0).abs() < 1e-12);
        assert!(c.is_causal());
    }

    #[test]
    fn equilibrium_extension_vanishes() {
        let p = PrimaryState::new(1.0, [1.0, 0.0, 0.0, 0.0]).unwrap();
        let psi = extend(&p, &FieldDerivatives::default(), &model()).unwrap();
        assert_eq!(psi.a, 0.0);
        assert_eq!(psi.q, [0.0; 4]);
        assert_eq!(psi.s_vec, [0.0; 4]);
        assert_eq!(psi.s_ten, [[0.0; 4]; 4]);
        assert_eq!(psi.theta, 1.0);
    }

    #[test]
    fn time_derivative_of_theta_activates_a_only() {
        let m = model();
        let p = PrimaryState::new(1.0, [1.0, 0.0, 0.0, 0.0]).unwrap();
        let c0 = 0.37;
        let mut d = FieldDerivatives::default();
        d.theta[0] = 1.0 * c0;
        let psi = extend(&p, &d, &m).unwrap();
        let chi = m.coefficients(1.0).chi;
        assert!((psi.a - 3.0 * chi * c0).abs() < 1e-14);
        assert!(psi.q.iter().all(|x| x.abs() < 1e-15));
        assert!(psi.s_vec.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn flattening_round_trip() {
        let mut arr = [0.0; PSI_LEN];
        for (i, x) in arr.iter_mut().enumerate() {
            *x = i as f64 * 0.5 - 3.0;
        }
        assert_eq!(ExtendedState::from_slice(&arr).to_array(), arr);
        assert_eq!(COMPONENT_NAMES[idx::s_ten(2, 3)], "S23");
        assert_eq!(COMPONENT_NAMES[idx::THETA], "theta");
    }

    #[test]
    fn pure_expansion_is_shear_free() {
        let u = [1.0, 0.0, 0.0, 0.0];
        let mut psi = ExtendedState::equilibrium(1.0, u);
        let proj = Projector::unchecked(&u);
        let s0 = 0.7;
        for k in 0..4 {
            for b in 0..4 {
                psi.s_ten[k][b] = proj.down_up(k, b) * s0 / 3.0;
            }
        }
        let sigma = shear(&psi);
        assert!(sigma.max_abs() < 1e-15);
    }

    #[test]
    fn perfect_fluid_energy_momentum() {
        let psi = ExtendedState::equilibrium(1.0, [1.0, 0.0, 0.0, 0.0]);
        let t = energy_momentum(&psi, &model());
        let expect = [1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        for a in 0..4 {
            for b in 0..4 {
                let e = if a == b { expect[a] } else { 0.0 };
                assert!((t.c[a][b] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reconstruct_equilibrium_is_zero() {
        let psi = ExtendedState::equilibrium(1.3, boost_velocity([0.2, 0.1, -0.3]));
        let g = reconstruct_gradients(&psi, &model());
        assert!(g.log_theta.iter().all(|x| *x == 0.0));
        assert!(g.u.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn primary_state_validation() {
        assert!(PrimaryState::new(1.0, [1.0, 0.1, 0.0, 0.0]).is_err());
        assert!(PrimaryState::new(-1.0, [1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(PrimaryState::new(1.0, [-1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_coefficients_are_rejected() {
        let m = model();
        assert!(matches!(
            m.checked_coefficients(1e-310),
            Err(Error::DegenerateCoefficient { name: "theta", .. })
        ));
        assert!(m.checked_coefficients(1e-120).is_err());
        assert!(m.checked_coefficients(1.0).is_ok());
    }
}
