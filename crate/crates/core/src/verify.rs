//! Randomized property suites over the principal symbol: closed-form roots
//! against the numeric spectrum, eigenvector completeness, and the determinant
//! factorization against a dense determinant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::characteristics::{
    diagonalize_with, numeric_roots_with, root_mismatch, roots_with, CovectorPair, FactorQuantities,
};
use crate::firstorder::symbol_with;
use crate::state::{a2_bound, Coefficients, ExtendedState, TransportModel, ViscosityLaw};
use crate::tensor::{boost_velocity, Projector};

/// One random `(model, state, zeta)` sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub model: TransportModel,
    pub psi: ExtendedState,
    pub pair: CovectorPair,
    /// Spectral parameter for the determinant comparison.
    pub lambda: f64,
}

impl Sample {
    pub fn coefficients(&self) -> Coefficients {
        self.model.coefficients(self.psi.theta)
    }
}

/// Draws a sample with boost speed at most `0.9`, `theta` in `[0.5, 2]`,
/// `a1` in `(4, 10]`, `a2` at or above its bound and a random unit `zeta`.
pub fn random_sample(rng: &mut ChaCha8Rng) -> Sample {
    let a1 = 4.0 + (1.0 - rng.gen::<f64>()) * 6.0;
    let bound = a2_bound(a1);
    // a fifth of the draws sit exactly on the bound
    let a2 = if rng.gen_bool(0.2) { bound } else { bound + rng.gen_range(0.0..6.0) };
    let eta0 = rng.gen_range(0.2..2.0);
    let model = TransportModel::unchecked(rng.gen_range(0.5..2.0), a1, a2, ViscosityLaw::conformal(eta0));

    let speed = rng.gen_range(0.0..0.9);
    let dir = unit_vector(rng);
    let u = boost_velocity(dir.map(|x| x * speed));
    let theta = rng.gen_range(0.5..2.0);
    let mut psi = ExtendedState::equilibrium(theta, u);
    let proj = Projector::unchecked(&u);
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

    let zeta = unit_vector(rng);
    let pair = CovectorPair::spatial(zeta).expect("unit zeta is spacelike");
    Sample {
        model,
        psi,
        pair,
        lambda: rng.gen_range(-2.0..2.0),
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

/// Deterministic list of samples from one seed.
pub fn samples(count: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_sample(&mut rng)).collect()
}

/// Worst-case errors of the eigenstructure suite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EigenReport {
    pub samples: usize,
    pub failures: usize,
    pub worst_root_error: f64,
    pub worst_residual: f64,
    pub worst_offdiag: f64,
    pub min_rank_ratio: f64,
    pub min_rank: usize,
    pub first_failure: Option<String>,
}

/// Thresholds for the eigenstructure suite.
pub const ROOT_TOL: f64 = 1e-9;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const OFFDIAG_TOL: f64 = 1e-7;
pub const LOG_DET_TOL: f64 = 1e-8;

impl EigenReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct EigenOutcome {
    root: f64,
    residual: f64,
    offdiag: f64,
    rank_ratio: f64,
    rank: usize,
    error: Option<String>,
}

fn eigen_one(i: usize, s: &Sample, b_scale: f64) -> EigenOutcome {
    let c = s.coefficients();
    let bad = |msg: String| EigenOutcome {
        root: f64::INFINITY,
        residual: f64::INFINITY,
        offdiag: f64::INFINITY,
        rank_ratio: 0.0,
        rank: 0,
        error: Some(format!("sample {i}: {msg}")),
    };
    let closed = match roots_with(&s.psi.u, &c, &s.pair) {
        Ok(r) => r.expanded(),
        Err(e) => return bad(e.to_string()),
    };
    let numeric = match numeric_roots_with(&s.psi, &c, &s.pair, b_scale) {
        Ok(r) => r,
        Err(e) => return bad(e.to_string()),
    };
    let root = root_mismatch(&closed, &numeric);
    match diagonalize_with(&s.psi, &c, &s.pair, b_scale) {
        Ok(d) => {
            let rank = d.rank();
            let error = if root > ROOT_TOL
                || d.report.residual > RESIDUAL_TOL
                || d.report.offdiag > OFFDIAG_TOL
                || rank != 30
            {
                Some(format!(
                    "sample {i}: root error {root:e}, residual {:e}, off-diagonal {:e}, rank {rank}",
                    d.report.residual, d.report.offdiag
                ))
            } else {
                None
            };
            EigenOutcome {
                root,
                residual: d.report.residual,
                offdiag: d.report.offdiag,
                rank_ratio: d.report.rank_ratio,
                rank,
                error,
            }
        }
        Err(e) => {
            let mut o = bad(e.to_string());
            o.root = root;
            o
        }
    }
}

/// Runs the eigenstructure suite; `b_scale != 1` corrupts the `B` block of the assembled matrices.
pub fn eigen_suite(samples: &[Sample], b_scale: f64) -> EigenReport {
    let outcomes: Vec<EigenOutcome> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| eigen_one(i, s, b_scale))
        .collect();
    let mut r = EigenReport {
        samples: samples.len(),
        min_rank_ratio: f64::INFINITY,
        min_rank: 30,
        ..Default::default()
    };
    for o in outcomes {
        r.worst_root_error = r.worst_root_error.max(o.root);
        r.worst_residual = r.worst_residual.max(o.residual);
        r.worst_offdiag = r.worst_offdiag.max(o.offdiag);
        r.min_rank_ratio = r.min_rank_ratio.min(o.rank_ratio);
        r.min_rank = r.min_rank.min(o.rank);
        if let Some(e) = o.error {
            r.failures += 1;
            r.first_failure.get_or_insert(e);
        }
    }
    r
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetReport {
    pub samples: usize,
    pub failures: usize,
    pub worst_log_error: f64,
    pub worst_identity_error: f64,
    pub first_failure: Option<String>,
}

impl DetReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// `|ln|det_numeric| - ln|det_closed||` with a sign check, plus the contraction identity for `H`.
pub fn det_suite(samples: &[Sample], b_scale: f64) -> DetReport {
    let outcomes: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let c = s.coefficients();
            let xi_cap = s.pair.combine(s.lambda);
            let m = symbol_with(&s.psi, &c, &xi_cap, b_scale);
            let lu = m.lu();
            let numeric = lu.determinant();
            let fq = FactorQuantities::new(&s.psi.u, &c, &xi_cap);
            let b = fq.scalars.b;
            let closed_sign = (b.powi(18) * fq.g.powi(3) * fq.f * fq.quartic_factor(&c)).signum();
            let log_closed = 9.0_f64.ln() + 18.0 * b.abs().ln() - s.psi.theta.ln()
                + 3.0 * fq.g.abs().ln()
                + fq.f.abs().ln()
                + fq.quartic_factor(&c).abs().ln();
            let log_err = if numeric.signum() != closed_sign {
                f64::INFINITY
            } else {
                (numeric.abs().ln() - log_closed).abs()
            };
            let lhs = fq.h_dot_a();
            let rhs = fq.h_dot_a_closed(&c);
            let id_err = (lhs - rhs).abs() / rhs.abs().max(1.0);
            (log_err, id_err)
        })
        .collect();
    let mut r = DetReport {
        samples: samples.len(),
        ..Default::default()
    };
    for (i, (le, ie)) in outcomes.into_iter().enumerate() {
        r.worst_log_error = r.worst_log_error.max(le);
        r.worst_identity_error = r.worst_identity_error.max(ie);
        if !(le <= LOG_DET_TOL) || !(ie <= 1e-10) {
            r.failures += 1;
            r.first_failure
                .get_or_insert(format!("sample {i}: log-det error {le:e}, identity error {ie:e}"));
        }
    }
    r
}
