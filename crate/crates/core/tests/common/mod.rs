//! Forward-mode jets and manufactured smooth fields shared by integration tests.
#![allow(dead_code)]

use std::ops::{Add, Mul, Neg, Sub};

use cbdnk::firstorder::first_order_residual;
use cbdnk::state::{ExtendedState, TransportModel, ViscosityLaw, PSI_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const G: [f64; 4] = [-1.0, 1.0, 1.0, 1.0];

/// Value, gradient and Hessian in the four spacetime coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; 4],
    pub h: [[f64; 4]; 4],
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; 4], h: [[0.0; 4]; 4] }
    }

    /// `f(self)` given `f`, `f'`, `f''` at the value.
    pub fn chain(&self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Self::constant(f);
        for a in 0..4 {
            out.g[a] = df * self.g[a];
            for b in 0..4 {
                out.h[a][b] = d2f * self.g[a] * self.g[b] + df * self.h[a][b];
            }
        }
        out
    }

    pub fn sin(&self) -> Self {
        self.chain(self.v.sin(), self.v.cos(), -self.v.sin())
    }

    pub fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.chain(c * self.v, c, 0.0)
    }

    pub fn value_jet(&self) -> Jet1 {
        Jet1 { v: self.v, g: self.g }
    }

    /// `d_m self` as a first-order jet.
    pub fn derivative(&self, m: usize) -> Jet1 {
        Jet1 { v: self.g[m], g: self.h[m] }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut r = self;
        r.v += o.v;
        for a in 0..4 {
            r.g[a] += o.g[a];
            for b in 0..4 {
                r.h[a][b] += o.h[a][b];
            }
        }
        r
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let mut r = Jet2::constant(self.v * o.v);
        for a in 0..4 {
            r.g[a] = self.g[a] * o.v + self.v * o.g[a];
            for b in 0..4 {
                r.h[a][b] = self.h[a][b] * o.v
                    + self.g[a] * o.g[b]
                    + o.g[a] * self.g[b]
                    + self.v * o.h[a][b];
            }
        }
        r
    }
}

/// Value and gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct Jet1 {
    pub v: f64,
    pub g: [f64; 4],
}

impl Jet1 {
    pub fn constant(v: f64) -> Self {
        Self { v, g: [0.0; 4] }
    }

    pub fn chain(&self, f: f64, df: f64) -> Self {
        Self { v: f, g: self.g.map(|x| df * x) }
    }

    pub fn recip(&self) -> Self {
        self.chain(1.0 / self.v, -1.0 / (self.v * self.v))
    }

    pub fn powf(&self, p: f64) -> Self {
        self.chain(self.v.powf(p), p * self.v.powf(p - 1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.chain(c * self.v, c)
    }
}

impl Add for Jet1 {
    type Output = Jet1;
    fn add(self, o: Jet1) -> Jet1 {
        Jet1 { v: self.v + o.v, g: std::array::from_fn(|a| self.g[a] + o.g[a]) }
    }
}

impl Sub for Jet1 {
    type Output = Jet1;
    fn sub(self, o: Jet1) -> Jet1 {
        self + (-o)
    }
}

impl Neg for Jet1 {
    type Output = Jet1;
    fn neg(self) -> Jet1 {
        self.scale(-1.0)
    }
}

impl Mul for Jet1 {
    type Output = Jet1;
    fn mul(self, o: Jet1) -> Jet1 {
        Jet1 {
            v: self.v * o.v,
            g: std::array::from_fn(|a| self.g[a] * o.v + self.v * o.g[a]),
        }
    }
}

pub fn sum(it: impl IntoIterator<Item = Jet1>) -> Jet1 {
    it.into_iter().fold(Jet1::constant(0.0), |a, b| a + b)
}

/// One travelling mode `amp sin(k.x + omega t + phase)`.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub amp: f64,
    pub k: [f64; 4],
    pub phase: f64,
}

impl Mode {
    fn eval(&self, x: &[f64; 4]) -> Jet2 {
        let mut arg = Jet2::constant(self.phase);
        for m in 0..4 {
            arg.v += self.k[m] * x[m];
            arg.g[m] = self.k[m];
        }
        arg.sin().scale(self.amp)
    }
}

/// Smooth manufactured `theta(t, x)` and spatial velocity `v^i(t, x)`.
#[derive(Debug, Clone)]
pub struct ManufacturedField {
    pub theta0: f64,
    pub theta_modes: Vec<Mode>,
    pub v0: [f64; 3],
    pub v_modes: [Vec<Mode>; 3],
}

fn random_modes(rng: &mut ChaCha8Rng, count: usize, amp: f64) -> Vec<Mode> {
    (0..count)
        .map(|_| Mode {
            amp: rng.gen_range(-amp..amp),
            k: [
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-2..=2) as f64,
                rng.gen_range(-2..=2) as f64,
                rng.gen_range(-2..=2) as f64,
            ],
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect()
}

impl ManufacturedField {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let theta0 = rng.gen_range(0.7..1.5);
        Self {
            theta0,
            theta_modes: random_modes(rng, 3, 0.08 * theta0),
            v0: std::array::from_fn(|_| rng.gen_range(-0.3..0.3)),
            v_modes: std::array::from_fn(|_| random_modes(rng, 2, 0.1)),
        }
    }

    /// `theta` and `u^a` as second-order jets at `x`.
    pub fn eval(&self, x: &[f64; 4]) -> (Jet2, [Jet2; 4]) {
        let mut theta = Jet2::constant(self.theta0);
        for m in &self.theta_modes {
            theta = theta + m.eval(x);
        }
        let v: [Jet2; 3] = std::array::from_fn(|i| {
            let mut vi = Jet2::constant(self.v0[i]);
            for m in &self.v_modes[i] {
                vi = vi + m.eval(x);
            }
            vi
        });
        let norm = Jet2::constant(1.0) + v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        (theta, [norm.sqrt(), v[0], v[1], v[2]])
    }
}

pub fn random_model(rng: &mut ChaCha8Rng) -> TransportModel {
    let a1 = rng.gen_range(4.5..10.0);
    let a2 = 3.0 * a1 / (a1 - 1.0) + rng.gen_range(0.0..3.0);
    TransportModel::conformal(rng.gen_range(0.5..2.0), rng.gen_range(0.3..1.5), a1, a2).unwrap()
}

/// A non-power viscosity law `eta0 theta^2 (1 + theta)`.
pub fn custom_model(rng: &mut ChaCha8Rng) -> TransportModel {
    let a1 = rng.gen_range(4.5..10.0);
    let a2 = 3.0 * a1 / (a1 - 1.0) + rng.gen_range(0.0..3.0);
    let eta0 = rng.gen_range(0.3..1.5);
    let law = ViscosityLaw::Custom {
        name: "quadratic-plus-cubic".into(),
        law: std::sync::Arc::new(move |t: f64| (eta0 * t * t * (1.0 + t), eta0 * (2.0 * t + 3.0 * t * t))),
    };
    TransportModel::new(rng.gen_range(0.5..2.0), a1, a2, law).unwrap()
}

/// Everything the reduction oracle computes by direct differentiation at one point.
pub struct OraclePoint {
    pub theta: f64,
    pub u: [f64; 4],
    /// `d_m theta`
    pub dtheta: [f64; 4],
    /// `du[m][a] = d_m u^a`
    pub du: [[f64; 4]; 4],
    pub psi: [f64; PSI_LEN],
    /// `dpsi[m][i] = d_m Psi_i`
    pub dpsi: [[f64; PSI_LEN]; 4],
    /// `d_g T^g_b`
    pub div_t: [f64; 4],
    /// Left-hand sides of the scalar and vector equations as printed, lower free index.
    pub scalar_eq: f64,
    pub vector_eq: [f64; 4],
}

fn eta_jet(model: &TransportModel, theta: &Jet1) -> Jet1 {
    match &model.law {
        ViscosityLaw::Power { eta0, exponent } => theta.powf(*exponent).scale(*eta0),
        ViscosityLaw::Custom { law, .. } => {
            let (e, de) = law(theta.v);
            theta.chain(e, de)
        }
    }
}

pub fn oracle(field: &ManufacturedField, model: &TransportModel, x: &[f64; 4]) -> OraclePoint {
    let (th2, u2) = field.eval(x);
    let theta = th2.value_jet();
    let u: [Jet1; 4] = std::array::from_fn(|a| u2[a].value_jet());
    let ul: [Jet1; 4] = std::array::from_fn(|a| u[a].scale(G[a]));
    let dth: [Jet1; 4] = std::array::from_fn(|m| th2.derivative(m));
    // du[m][a] = d_m u^a
    let du: [[Jet1; 4]; 4] = std::array::from_fn(|m| std::array::from_fn(|a| u2[a].derivative(m)));
    let dul: [[Jet1; 4]; 4] = std::array::from_fn(|m| std::array::from_fn(|a| du[m][a].scale(G[a])));

    let eta = eta_jet(model, &theta);
    let chi = eta.scale(model.a1);
    let lambda = eta.scale(model.a2);
    let eps = theta.powf(4.0).scale(model.eps0);
    let inv_theta = theta.recip();

    let one = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    // Pi_a^b, Pi^{ab}, Pi_{ab}
    let p_du = |a: usize, b: usize| Jet1::constant(one(a, b)) + ul[a] * u[b];
    let p_uu = |a: usize, b: usize| Jet1::constant(G[a] * one(a, b)) + u[a] * u[b];
    let p_dd = |a: usize, b: usize| Jet1::constant(G[a] * one(a, b)) + ul[a] * ul[b];

    let div_u = sum((0..4).map(|m| du[m][m]));
    let u_dth = sum((0..4).map(|m| u[m] * dth[m]));

    let a_jet = chi.scale(3.0) * (inv_theta * u_dth + div_u.scale(1.0 / 3.0));
    let s_vec: [Jet1; 4] = std::array::from_fn(|a| sum((0..4).map(|m| u[m] * du[m][a])));
    let q: [Jet1; 4] = std::array::from_fn(|a| {
        lambda * (inv_theta * sum((0..4).map(|m| p_uu(a, m) * dth[m])) + s_vec[a])
    });
    let s_ten: [[Jet1; 4]; 4] =
        std::array::from_fn(|k| std::array::from_fn(|b| sum((0..4).map(|m| p_du(k, m) * du[m][b]))));

    let mut psi_j = [Jet1::default(); PSI_LEN];
    psi_j[0] = a_jet;
    for a in 0..4 {
        psi_j[1 + a] = q[a];
        psi_j[5 + a] = s_vec[a];
        for b in 0..4 {
            psi_j[9 + 4 * a + b] = s_ten[a][b];
        }
        psi_j[26 + a] = u[a];
    }
    psi_j[25] = theta;

    // sigma_{ab} from its definition, both indices down
    let sigma: [[Jet1; 4]; 4] = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            sum((0..4).map(|m| p_du(a, m) * dul[m][b] + p_du(b, m) * dul[m][a]))
                - p_dd(a, b) * div_u.scale(2.0 / 3.0)
        })
    });
    let ql: [Jet1; 4] = std::array::from_fn(|a| q[a].scale(G[a]));
    let t_dd: [[Jet1; 4]; 4] = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            (eps + a_jet) * (ul[a] * ul[b] + p_dd(a, b).scale(1.0 / 3.0)) - eta * sigma[a][b]
                + ul[a] * ql[b]
                + ul[b] * ql[a]
        })
    });
    let div_t: [f64; 4] = std::array::from_fn(|b| (0..4).map(|g| G[g] * t_dd[g][b].g[g]).sum());

    // printed scalar equation
    let sig_sq: f64 = (0..4)
        .flat_map(|a| (0..4).map(move |b| (a, b)))
        .map(|(a, b)| G[a] * G[b] * sigma[a][b].v * sigma[a][b].v)
        .sum();
    let u_da: f64 = (0..4).map(|m| u[m].v * a_jet.g[m]).sum();
    let div_q: f64 = (0..4).map(|m| q[m].g[m]).sum();
    let q_acc: f64 = (0..4).map(|a| ql[a].v * s_vec[a].v).sum();
    let scalar_eq = u_da + 4.0 / 3.0 * a_jet.v * div_u.v + div_q + q_acc - 0.5 * eta.v * sig_sq
        + 4.0 / (3.0 * chi.v) * model.eps0 * theta.v.powi(4) * a_jet.v;

    // printed vector equation, free index down
    let vector_eq: [f64; 4] = std::array::from_fn(|mu| {
        let pi_da: f64 = (0..4).map(|a| p_du(mu, a).v * a_jet.g[a]).sum();
        let acc_l = (0..4).map(|a| u[a].v * dul[a][mu].v).sum::<f64>();
        // d_a sigma^a_mu
        let div_sigma: f64 = (0..4).map(|a| G[a] * sigma[a][mu].g[a]).sum();
        let sigma_s: f64 = (0..4).map(|l| sigma[mu][l].v * s_vec[l].v).sum();
        let u_dq: f64 = (0..4).map(|a| u[a].v * ql[mu].g[a]).sum();
        let q_acc_u = ul[mu].v * q_acc;
        let q_du: f64 = (0..4).map(|a| q[a].v * dul[a][mu].v).sum();
        let sigma_q: f64 = (0..4).map(|n| sigma[mu][n].v * q[n].v).sum();
        pi_da / 3.0 + 4.0 / 3.0 * a_jet.v * acc_l - eta.v * div_sigma
            + eta.v / 2.0 * sig_sq * ul[mu].v
            + 3.0 * eta.v * sigma_s
            + u_dq
            - q_acc_u
            + div_u.v * ql[mu].v
            + q_du
            + 4.0 * eps.v / (3.0 * lambda.v) * ql[mu].v
            - 3.0 * eta.v / lambda.v * sigma_q
    });

    OraclePoint {
        theta: theta.v,
        u: u.map(|j| j.v),
        dtheta: dth.map(|j| j.v),
        du: du.map(|row| row.map(|j| j.v)),
        psi: psi_j.map(|j| j.v),
        dpsi: std::array::from_fn(|m| std::array::from_fn(|i| psi_j[i].g[m])),
        div_t,
        scalar_eq,
        vector_eq,
    }
}

/// Expected first-order residual rows on extended fields: the energy equation
/// `-u^b d_g T^g_b`, the momentum equation `3 Pi^{ab} d_g T^g_b`, zeros elsewhere.
pub fn expected_residual(p: &OraclePoint) -> [f64; PSI_LEN] {
    let mut out = [0.0; PSI_LEN];
    out[0] = -(0..4).map(|b| p.u[b] * p.div_t[b]).sum::<f64>();
    for a in 0..4 {
        out[1 + a] = 3.0
            * (0..4)
                .map(|b| (G[a] * if a == b { 1.0 } else { 0.0 } + p.u[a] * p.u[b]) * p.div_t[b])
                .sum::<f64>();
    }
    out
}

pub fn random_point(rng: &mut ChaCha8Rng) -> [f64; 4] {
    std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst residual, scalar and vector mismatches of one manufactured field over four points.
pub fn reduction_errors(seed: u64, custom_law: bool) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = if custom_law { custom_model(&mut rng) } else { random_model(&mut rng) };
    let field = ManufacturedField::random(&mut rng);
    let mut worst = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..4 {
        let x = random_point(&mut rng);
        let p = oracle(&field, &model, &x);
        let psi = ExtendedState::from_slice(&p.psi);
        let res = first_order_residual(&psi, &p.dpsi, &model).unwrap();
        let expect = expected_residual(&p);
        // manufactured fields are not solutions, so the target itself is O(1)
        assert!(expect.iter().fold(0.0_f64, |m, x| m.max(x.abs())) > 1e-3);
        worst.0 = worst.0.max(max_abs_diff(&res, &expect));

        // printed scalar and vector equations against the divergence of T
        let energy = -(0..4).map(|b| p.u[b] * p.div_t[b]).sum::<f64>();
        worst.1 = worst.1.max((p.scalar_eq - energy).abs());
        let mut mom = [0.0; 4];
        for (mu, m) in mom.iter_mut().enumerate() {
            let ul = G[mu] * p.u[mu];
            *m = p.div_t[mu] + ul * (0..4).map(|b| p.u[b] * p.div_t[b]).sum::<f64>();
        }
        worst.2 = worst.2.max(max_abs_diff(&p.vector_eq, &mom));
    }
    worst
}
