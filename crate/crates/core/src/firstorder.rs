//! The quasilinear first-order system `A^a d_a Psi + R = 0`.
//!
//! Row groups and column groups follow the `Psi` ordering from [`crate::state`].

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, GridIndex, Result};
use crate::state::{
    idx, reconstruct_with, shear_array, Coefficients, ExtendedState, TransportModel, PSI_LEN,
};
use crate::tensor::{contract, delta, lower, Projector};

pub type Matrix30 = SMatrix<f64, PSI_LEN, PSI_LEN>;
pub type Vector30 = SVector<f64, PSI_LEN>;

/// Threshold on the smallest singular value (or LU pivot) of `A^0`.
pub const A0_SINGULAR_TOL: f64 = 1e-8;

/// `B_n^{a m l}` stored as `c[n][a][m][l]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BTensor {
    pub c: [[[[f64; 4]; 4]; 4]; 4],
}

impl BTensor {
    #[inline]
    pub fn get(&self, nu: usize, alpha: usize, mu: usize, lambda: usize) -> f64 {
        self.c[nu][alpha][mu][lambda]
    }
}

/// `B_n^{aml} = -3 eta (delta_n^a Pi^{ml} + delta_n^l Pi^{am} - (2/3) delta_n^m Pi^{al})`.
pub fn assemble_b(psi: &ExtendedState, model: &TransportModel) -> BTensor {
    b_tensor(&psi.projector(), model.eta(psi.theta))
}

pub(crate) fn b_tensor(proj: &Projector, eta: f64) -> BTensor {
    let mut c = [[[[0.0; 4]; 4]; 4]; 4];
    for (nu, c_nu) in c.iter_mut().enumerate() {
        for (al, c_a) in c_nu.iter_mut().enumerate() {
            for (mu, c_m) in c_a.iter_mut().enumerate() {
                for (la, out) in c_m.iter_mut().enumerate() {
                    *out = -3.0
                        * eta
                        * (delta(nu, al) * proj.up(mu, la) + delta(nu, la) * proj.up(al, mu)
                            - 2.0 / 3.0 * delta(nu, mu) * proj.up(al, la));
                }
            }
        }
    }
    BTensor { c }
}

/// The four principal matrices and the `B` tensor at one state.
#[derive(Debug, Clone)]
pub struct PrincipalMatrices {
    pub a: [Matrix30; 4],
    pub b: BTensor,
}

impl PrincipalMatrices {
    pub fn new(psi: &ExtendedState, model: &TransportModel) -> Self {
        let a = std::array::from_fn(|alpha| assemble_a(psi, model, alpha));
        Self {
            a,
            b: assemble_b(psi, model),
        }
    }

    /// `xi_a A^a`.
    pub fn contract(&self, xi: &[f64; 4]) -> Matrix30 {
        self.a[0] * xi[0] + self.a[1] * xi[1] + self.a[2] * xi[2] + self.a[3] * xi[3]
    }
}

/// `A^alpha` for a single direction.
pub fn assemble_a(psi: &ExtendedState, model: &TransportModel, alpha: usize) -> Matrix30 {
    let mut xi = [0.0; 4];
    xi[alpha] = 1.0;
    principal_symbol(psi, model, &xi)
}

/// The principal symbol `xi_a A^a`.
pub fn principal_symbol(psi: &ExtendedState, model: &TransportModel, xi: &[f64; 4]) -> Matrix30 {
    symbol_with(psi, &model.coefficients(psi.theta), xi, 1.0)
}

/// Principal symbol with the `B` block scaled by `b_scale` (1 for the physical system).
pub fn symbol_with(psi: &ExtendedState, c: &Coefficients, xi: &[f64; 4], b_scale: f64) -> Matrix30 {
    let mut m = Matrix30::zeros();
    let u = &psi.u;
    let proj = psi.projector();
    let ux = contract(xi, u);
    // Pi^{m a} xi_a
    let px = proj.project_covector(xi);
    let theta = psi.theta;

    // A row
    m[(idx::A, idx::A)] = ux;
    for nu in 0..4 {
        m[(idx::A, idx::Q + nu)] = xi[nu];
    }

    // Q rows
    let bt = b_tensor(&proj, c.eta);
    for mu in 0..4 {
        let r = idx::Q + mu;
        m[(r, idx::A)] = px[mu];
        m[(r, idx::Q + mu)] = 3.0 * ux;
        for k in 0..4 {
            for nu in 0..4 {
                let v: f64 = (0..4).map(|al| bt.c[nu][mu][k][al] * xi[al]).sum();
                m[(r, idx::s_ten(k, nu))] = b_scale * v;
            }
        }
    }

    // S^m rows
    for mu in 0..4 {
        let r = idx::S_VEC + mu;
        m[(r, idx::A)] = -px[mu] / c.chi;
        m[(r, idx::Q + mu)] = 3.0 * ux / c.lambda;
        m[(r, idx::S_VEC + mu)] = -3.0 * ux;
        for k in 0..4 {
            m[(r, idx::s_ten(k, k))] = px[mu];
        }
    }

    // S_k^b rows
    for k in 0..4 {
        // Pi^a_k xi_a
        let pk: f64 = (0..4).map(|al| proj.up_down(al, k) * xi[al]).sum();
        for b in 0..4 {
            let r = idx::s_ten(k, b);
            m[(r, idx::S_VEC + b)] = -pk;
            m[(r, r)] = ux;
        }
    }

    // theta row
    m[(idx::THETA, idx::THETA)] = ux / theta;
    for nu in 0..4 {
        m[(idx::THETA, idx::U + nu)] = xi[nu] / 3.0;
    }

    // u rows
    for mu in 0..4 {
        let r = idx::U + mu;
        m[(r, idx::THETA)] = px[mu] / theta;
        m[(r, r)] = ux;
    }
    m
}

/// Matrix-free `sum_a A^a d[a]`, where `d[a]` holds `d_a Psi`.
pub fn principal_apply(
    psi: &ExtendedState,
    c: &Coefficients,
    d: &[[f64; PSI_LEN]; 4],
    b_scale: f64,
) -> [f64; PSI_LEN] {
    let u = &psi.u;
    let proj = psi.projector();
    let pu = proj.up_array();
    let theta = psi.theta;
    let mut out = [0.0; PSI_LEN];

    // directional derivatives along u: u^a d_a Psi
    let mut ud = [0.0; PSI_LEN];
    for (i, x) in ud.iter_mut().enumerate() {
        *x = (0..4).map(|a| u[a] * d[a][i]).sum();
    }
    // Pi^{m a} d_a f for the scalars A, theta and the trace S_k^k
    let pgrad = |f: &dyn Fn(usize) -> f64| -> [f64; 4] {
        let g = [f(0), f(1), f(2), f(3)];
        let mut o = [0.0; 4];
        for (mu, x) in o.iter_mut().enumerate() {
            *x = (0..4).map(|a| pu[mu][a] * g[a]).sum();
        }
        o
    };
    let p_a = pgrad(&|a| d[a][idx::A]);
    let p_th = pgrad(&|a| d[a][idx::THETA]);
    let p_tr = pgrad(&|a| (0..4).map(|k| d[a][idx::s_ten(k, k)]).sum());

    let div_q: f64 = (0..4).map(|a| d[a][idx::Q + a]).sum();
    out[idx::A] = ud[idx::A] + div_q;

    // B contraction: -3 eta [Pi^{ka} d_a S_k^m + Pi^{mk} d_a S_k^a - (2/3) Pi^{ma} d_a S_k^k]
    let mut b_term = [0.0; 4];
    for (mu, bt) in b_term.iter_mut().enumerate() {
        let mut first = 0.0;
        let mut second = 0.0;
        for k in 0..4 {
            for a in 0..4 {
                first += pu[k][a] * d[a][idx::s_ten(k, mu)];
                second += pu[mu][k] * d[a][idx::s_ten(k, a)];
            }
        }
        *bt = -3.0 * c.eta * (first + second - 2.0 / 3.0 * p_tr[mu]);
    }

    for mu in 0..4 {
        out[idx::Q + mu] = p_a[mu] + 3.0 * ud[idx::Q + mu] + b_scale * b_term[mu];
        out[idx::S_VEC + mu] = -p_a[mu] / c.chi + 3.0 * ud[idx::Q + mu] / c.lambda
            - 3.0 * ud[idx::S_VEC + mu]
            + p_tr[mu];
        out[idx::U + mu] = p_th[mu] / theta + ud[idx::U + mu];
    }
    for k in 0..4 {
        for b in 0..4 {
            let pd: f64 = (0..4).map(|a| proj.up_down(a, k) * d[a][idx::S_VEC + b]).sum();
            out[idx::s_ten(k, b)] = -pd + ud[idx::s_ten(k, b)];
        }
    }
    let div_u: f64 = (0..4).map(|a| d[a][idx::U + a]).sum();
    out[idx::THETA] = ud[idx::THETA] / theta + div_u / 3.0;
    out
}

/// Source vector `R = (r1, r2, r3, r4, r5, r6)` in `Psi` ordering.
pub fn lower_order(psi: &ExtendedState, model: &TransportModel) -> Result<[f64; PSI_LEN]> {
    let c = model.checked_coefficients(psi.theta)?;
    Ok(source_with(psi, model, &c))
}

pub(crate) fn source_with(
    psi: &ExtendedState,
    model: &TransportModel,
    c: &Coefficients,
) -> [f64; PSI_LEN] {
    let eps = model.eps(psi.theta);
    let k = model.law.log_slope(psi.theta);
    let (eta, chi, lambda) = (c.eta, c.chi, c.lambda);
    let a = psi.a;
    let u = &psi.u;
    let ul = lower(u);
    let q = &psi.q;
    let ql = lower(q);
    let v = &psi.s_vec;
    let vl = lower(v);
    let st = &psi.s_ten;
    let s = psi.expansion();
    let proj = psi.projector();
    let pu = proj.up_array();

    let grads = reconstruct_with(psi, c);
    let y = &grads.log_theta;
    let z = &grads.u;

    let sigma_dd = shear_array(psi);
    // sigma^{ab}
    let mut sigma_uu = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            sigma_uu[a][b] = crate::tensor::METRIC_DIAG[a] * crate::tensor::METRIC_DIAG[b] * sigma_dd[a][b];
        }
    }
    let sigma_sq: f64 = (0..4)
        .flat_map(|a| (0..4).map(move |b| (a, b)))
        .map(|(a, b)| sigma_uu[a][b] * sigma_dd[a][b])
        .sum();

    let qv = contract(&ql, v);
    let vv = contract(&vl, v);
    let uv = contract(&ul, v);
    let uy = contract(y, u);

    let mut r = [0.0; PSI_LEN];

    r[idx::A] = 4.0 / 3.0 * a * s + qv - 0.5 * eta * sigma_sq + 4.0 * eps / (3.0 * chi) * a;

    // S_k^g Z_g^k
    let sz: f64 = (0..4)
        .flat_map(|kk| (0..4).map(move |g| (kk, g)))
        .map(|(kk, g)| st[kk][g] * z[g][kk])
        .sum();

    for al in 0..4 {
        let sigma_y: f64 = (0..4).map(|g| sigma_uu[g][al] * y[g]).sum();
        let qz: f64 = (0..4).map(|g| q[g] * z[g][al]).sum();
        let sv: f64 = (0..4).map(|kk| st[kk][al] * v[kk]).sum();
        let l = -3.0 * eta * (sv + u[al] * sz - 2.0 / 3.0 * s * (s * u[al] + v[al]));
        r[idx::Q + al] = 4.0 * a * v[al] + 1.5 * eta * sigma_sq * u[al] - 3.0 * k * eta * sigma_y
            - 3.0 * u[al] * qv
            + 3.0 * s * q[al]
            + 3.0 * qz
            + 4.0 * eps / lambda * q[al]
            + l;

        let pv: f64 = (0..4).map(|n| pu[n][al] * vl[n]).sum();
        let pq: f64 = (0..4).map(|n| pu[n][al] * ql[n]).sum();
        let py: f64 = (0..4).map(|n| pu[n][al] * y[n]).sum();
        let pyz: f64 = (0..4)
            .flat_map(|n| (0..4).map(move |m| (n, m)))
            .map(|(n, m)| pu[n][al] * y[m] * z[n][m])
            .sum();
        r[idx::S_VEC + al] = -pv * a / chi - 3.0 * pq * (k / lambda) * uy + pv * s - 3.0 * pv * uv
            - 3.0 / lambda * u[al] * qv
            + 3.0 * u[al] * vv
            + py * a * k / chi
            + 3.0 * pyz;

        r[idx::U + al] = -q[al] / lambda;
    }

    for kk in 0..4 {
        // Pi^n_k V_n
        let pkv: f64 = (0..4).map(|n| proj.up_down(n, kk) * vl[n]).sum();
        for b in 0..4 {
            let sv: f64 = (0..4).map(|n| st[n][b] * v[n]).sum();
            let zz: f64 = (0..4)
                .flat_map(|n| (0..4).map(move |m| (n, m)))
                .map(|(n, m)| proj.up_down(n, kk) * z[m][b] * z[n][m])
                .sum();
            r[idx::s_ten(kk, b)] = -pkv * v[b] - ul[kk] * sv + zz;
        }
    }

    r[idx::THETA] = -a / (3.0 * chi);
    r
}

/// `sum_a A^a d_a Psi + R` at one point.
pub fn first_order_residual(
    psi: &ExtendedState,
    d: &[[f64; PSI_LEN]; 4],
    model: &TransportModel,
) -> Result<[f64; PSI_LEN]> {
    let c = model.checked_coefficients(psi.theta)?;
    let mut out = principal_apply(psi, &c, d, 1.0);
    let r = source_with(psi, model, &c);
    for (o, ri) in out.iter_mut().zip(r.iter()) {
        *o += ri;
    }
    Ok(out)
}

/// `A^0` reduced-system solver for one point.
pub struct PointSolver<'a> {
    pub model: &'a TransportModel,
    pub b_scale: f64,
}

impl<'a> PointSolver<'a> {
    pub fn new(model: &'a TransportModel) -> Self {
        Self { model, b_scale: 1.0 }
    }

    /// `d_t Psi = -(A^0)^{-1} (A^i d_i Psi + R)` given spatial derivatives `dx[i-1] = d_i Psi`.
    pub fn rhs(
        &self,
        psi: &ExtendedState,
        dx: &[[f64; PSI_LEN]; 3],
        location: Option<GridIndex>,
    ) -> Result<[f64; PSI_LEN]> {
        let r = source_with(psi, self.model, &self.model.checked_coefficients(psi.theta)?);
        self.solve(psi, dx, Some(&r), location)
    }

    /// As [`Self::rhs`] with an explicit source; `None` drops the source entirely.
    pub fn solve(
        &self,
        psi: &ExtendedState,
        dx: &[[f64; PSI_LEN]; 3],
        source: Option<&[f64; PSI_LEN]>,
        location: Option<GridIndex>,
    ) -> Result<[f64; PSI_LEN]> {
        let c = self.model.checked_coefficients(psi.theta)?;
        let d = [[0.0; PSI_LEN], dx[0], dx[1], dx[2]];
        let mut f = principal_apply(psi, &c, &d, self.b_scale);
        if let Some(r) = source {
            for (fi, ri) in f.iter_mut().zip(r.iter()) {
                *fi += ri;
            }
        }
        let a0 = symbol_with(psi, &c, &[1.0, 0.0, 0.0, 0.0], self.b_scale);
        solve_a0(&a0, &f, location).map(|mut x| {
            x.iter_mut().for_each(|v| *v = -*v);
            x
        })
    }
}

/// Solves `A^0 x = f` by partially pivoted LU, flagging tiny pivots.
pub fn solve_a0(a0: &Matrix30, f: &[f64; PSI_LEN], location: Option<GridIndex>) -> Result<[f64; PSI_LEN]> {
    let lu = a0.lu();
    let u = lu.u();
    let min_pivot = (0..PSI_LEN).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > A0_SINGULAR_TOL) {
        return Err(Error::NearSingularA0 {
            min_sv: min_pivot,
            location,
        });
    }
    let rhs = Vector30::from_column_slice(f);
    let x = lu.solve(&rhs).ok_or(Error::NearSingularA0 {
        min_sv: 0.0,
        location,
    })?;
    let mut out = [0.0; PSI_LEN];
    out.copy_from_slice(x.as_slice());
    Ok(out)
}

/// Smallest singular value of `A^0` at one state.
pub fn a0_min_singular_value(psi: &ExtendedState, model: &TransportModel) -> f64 {
    let a0 = assemble_a(psi, model, 0);
    a0.singular_values().min()
}

/// Mixed energy-momentum tensor `T^a_b` (first index up).
pub fn energy_momentum_mixed(psi: &ExtendedState, model: &TransportModel) -> [[f64; 4]; 4] {
    let t = crate::state::energy_momentum(psi, model).c;
    let mut m = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            m[a][b] = crate::tensor::METRIC_DIAG[a] * t[a][b];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ExtendedState;
    use crate::tensor::boost_velocity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> TransportModel {
        TransportModel::conformal(1.0, 1.0, 6.0, 4.0).unwrap()
    }

    pub(crate) fn random_psi(rng: &mut ChaCha8Rng) -> ExtendedState {
        let v = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let u = boost_velocity(v);
        let proj = Projector::unchecked(&u);
        let mut psi = ExtendedState::equilibrium(rng.gen_range(0.5..2.0), u);
        psi.a = rng.gen_range(-1.0..1.0);
        let raw: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        psi.q = proj.project_vector(&raw);
        let raw: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        psi.s_vec = proj.project_vector(&raw);
        let raw: [[f64; 4]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        for k in 0..4 {
            for b in 0..4 {
                psi.s_ten[k][b] = (0..4)
                    .flat_map(|m| (0..4).map(move |n| (m, n)))
                    .map(|(m, n)| proj.down_up(k, m) * raw[m][n] * proj.up_down(b, n))
                    .sum();
            }
        }
        psi
    }

    #[test]
    fn rest_frame_b_value() {
        let psi = ExtendedState::equilibrium(1.0, [1.0, 0.0, 0.0, 0.0]);
        let m = TransportModel::conformal(1.0, 1.0, 6.0, 4.0).unwrap();
        let b = assemble_b(&psi, &m);
        assert!((b.get(0, 0, 1, 1) + 3.0).abs() < 1e-15);
        let zero = TransportModel::unchecked(1.0, 6.0, 4.0, crate::state::ViscosityLaw::conformal(0.0));
        let b0 = assemble_b(&psi, &zero);
        assert!(b0.c.iter().flatten().flatten().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn b_contracted_with_u_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_psi(&mut rng);
        let m = model();
        let b = assemble_b(&psi, &m);
        let eta = m.eta(psi.theta);
        let ul = lower(&psi.u);
        let pu = psi.projector().up_array();
        for nu in 0..4 {
            for mu in 0..4 {
                for la in 0..4 {
                    let lhs: f64 = (0..4).map(|a| b.get(nu, a, mu, la) * ul[a]).sum();
                    // Pi^{am} u_a = 0 leaves only the first term
                    let rhs = -3.0 * eta * ul[nu] * pu[mu][la];
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rest_a0_determinant() {
        for theta in [1.0, 0.5, 2.0] {
            let psi = ExtendedState::equilibrium(theta, [1.0, 0.0, 0.0, 0.0]);
            let det = assemble_a(&psi, &model(), 0).determinant();
            assert!((det / (6561.0 / theta) - 1.0).abs() < 1e-10, "{det}");
        }
    }

    #[test]
    fn rest_s_blocks_are_identity() {
        let psi = ExtendedState::equilibrium(1.0, [1.0, 0.0, 0.0, 0.0]);
        let a0 = assemble_a(&psi, &model(), 0);
        for k in 0..4 {
            for b in 0..4 {
                let r = idx::s_ten(k, b);
                assert_eq!(a0[(r, r)], 1.0);
                for col in idx::S_VEC..idx::S_VEC + 4 {
                    assert_eq!(a0[(r, col)], 0.0);
                }
            }
        }
    }

    #[test]
    fn sparsity_pattern_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = model();
        for _ in 0..10 {
            let psi = random_psi(&mut rng);
            for al in 0..4 {
                let a = assemble_a(&psi, &m, al);
                for i in 0..PSI_LEN {
                    for j in 0..PSI_LEN {
                        if !structurally_nonzero(i, j) {
                            assert_eq!(a[(i, j)], 0.0, "({i},{j})");
                        }
                    }
                }
            }
        }
    }

    fn group(i: usize) -> (usize, usize) {
        match i {
            0 => (0, 0),
            1..=4 => (1, i - 1),
            5..=8 => (2, i - 5),
            9..=24 => (3 + (i - 9) / 4, (i - 9) % 4),
            25 => (7, 0),
            _ => (8, i - 26),
        }
    }

    fn structurally_nonzero(i: usize, j: usize) -> bool {
        let (gi, ri) = group(i);
        let (gj, cj) = group(j);
        match (gi, gj) {
            (0, 0) | (0, 1) => true,
            (1, 0) | (1, 3..=6) => true,
            (1, 1) | (2, 2) => ri == cj,
            (2, 0) | (2, 1) => gj == 0 || ri == cj,
            (2, 3..=6) => cj == gj - 3,
            (3..=6, 2) => ri == cj,
            (3..=6, 3..=6) => gi == gj && ri == cj,
            (7, 7) | (7, 8) | (8, 7) => true,
            (8, 8) => ri == cj,
            _ => false,
        }
    }

    #[test]
    fn matrix_free_apply_matches_assembled() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = model();
        for _ in 0..10 {
            let psi = random_psi(&mut rng);
            let d: [[f64; PSI_LEN]; 4] =
                std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let pm = PrincipalMatrices::new(&psi, &m);
            let c = m.coefficients(psi.theta);
            let fast = principal_apply(&psi, &c, &d, 1.0);
            let mut slow = Vector30::zeros();
            for (al, dal) in d.iter().enumerate() {
                slow += pm.a[al] * Vector30::from_column_slice(dal);
            }
            for i in 0..PSI_LEN {
                assert!((fast[i] - slow[i]).abs() < 1e-11 * (1.0 + slow[i].abs()), "row {i}");
            }
            // doubling the derivatives doubles the principal part
            let d2 = d.map(|row| row.map(|x| 2.0 * x));
            let fast2 = principal_apply(&psi, &c, &d2, 1.0);
            for i in 0..PSI_LEN {
                assert_eq!(fast2[i], 2.0 * fast[i]);
            }
        }
    }

    #[test]
    fn source_vanishes_at_equilibrium() {
        let psi = ExtendedState::equilibrium(1.4, boost_velocity([0.1, 0.2, 0.3]));
        let r = lower_order(&psi, &model()).unwrap();
        assert!(r.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn source_with_only_a() {
        let m = model();
        let mut psi = ExtendedState::equilibrium(1.0, [1.0, 0.0, 0.0, 0.0]);
        psi.a = 0.3;
        let r = lower_order(&psi, &m).unwrap();
        let chi = m.coefficients(1.0).chi;
        assert!((r[idx::A] - 4.0 / (3.0 * chi) * 0.3).abs() < 1e-15);
        assert!((r[idx::THETA] + 0.3 / (3.0 * chi)).abs() < 1e-15);
    }

    #[test]
    fn reduced_rhs_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = model();
        let solver = PointSolver::new(&m);
        for _ in 0..5 {
            let psi = random_psi(&mut rng);
            let dx: [[f64; PSI_LEN]; 3] =
                std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let rhs = solver.rhs(&psi, &dx, None).unwrap();
            let d = [rhs, dx[0], dx[1], dx[2]];
            let res = first_order_residual(&psi, &d, &m).unwrap();
            assert!(res.iter().all(|x| x.abs() < 1e-10), "{res:?}");
        }
    }

    #[test]
    fn timelike_symbol_is_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = model();
        for _ in 0..10 {
            let psi = random_psi(&mut rng);
            let xi = [1.0, rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.0];
            let sv = principal_symbol(&psi, &m, &xi).singular_values();
            assert!(sv.min() > 0.0 && sv.min().is_finite());
        }
    }

    #[test]
    fn mixed_energy_momentum_is_traceless() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = random_psi(&mut rng);
        let t = energy_momentum_mixed(&psi, &model());
        let tr: f64 = (0..4).map(|a| t[a][a]).sum();
        assert!(tr.abs() < 1e-12);
    }
}
