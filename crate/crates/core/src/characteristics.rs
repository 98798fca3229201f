//! Characteristic analysis of the principal symbol `Xi_a A^a` with `Xi = zeta + Lambda xi`.
//!
//! Roots `Lambda` of `det(Xi_a A^a) = 0` are grouped into four families:
//! the advective root (multiplicity 18), the sound pair (`b^2 = a.a / 3`),
//! the shear pair (`b^2 = (eta / lambda) a.a`, multiplicity 3 each) and four
//! roots from a quadratic in `b^2`. The reduced matrix
//! `(xi_a A^a)^{-1} (zeta_a A^a)` has eigenvalue `-Lambda` for each root.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::firstorder::{symbol_with, Matrix30};
use crate::state::{Coefficients, ExtendedState, TransportModel, PSI_LEN};
use crate::tensor::{contract, dot, lower, CausalCharacter, Covector, Projector};

/// Roots closer than `CLUSTER_TOL (1 + |Lambda|)` form one cluster.
pub const CLUSTER_TOL: f64 = 1e-8;

/// Discriminants above `-DISCRIMINANT_TOL` (relative) are clamped to zero.
pub const DISCRIMINANT_TOL: f64 = 1e-12;

/// Relative slack on the `lambda` bound when deciding admissibility.
pub const BOUND_SLACK: f64 = 1e-12;

/// Timelike `xi` and spacelike `zeta`, both covectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovectorPair {
    pub xi: [f64; 4],
    pub zeta: [f64; 4],
}

impl CovectorPair {
    pub fn new(xi: [f64; 4], zeta: [f64; 4]) -> Result<Self> {
        if crate::tensor::classify_covector(&Covector(xi)) != CausalCharacter::Timelike {
            return Err(Error::Config("xi must be timelike".into()));
        }
        if crate::tensor::classify_covector(&Covector(zeta)) != CausalCharacter::Spacelike {
            return Err(Error::Config("zeta must be spacelike and nonzero".into()));
        }
        Ok(Self { xi, zeta })
    }

    /// `xi = (1, 0, 0, 0)` with a purely spatial `zeta`.
    pub fn spatial(zeta: [f64; 3]) -> Result<Self> {
        Self::new([1.0, 0.0, 0.0, 0.0], [0.0, zeta[0], zeta[1], zeta[2]])
    }

    /// `Xi = zeta + Lambda xi`.
    pub fn combine(&self, lambda: f64) -> [f64; 4] {
        std::array::from_fn(|i| self.zeta[i] + lambda * self.xi[i])
    }
}

/// `a^m = Pi^{mn} Xi_n`, `b = u^m Xi_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionScalars {
    pub a: [f64; 4],
    pub b: f64,
    /// `a^m a_m`
    pub aa: f64,
}

pub fn projections(u: &[f64; 4], xi_cap: &[f64; 4]) -> ProjectionScalars {
    let proj = Projector::unchecked(u);
    let a = proj.project_covector(xi_cap);
    ProjectionScalars {
        a,
        b: contract(xi_cap, u),
        aa: dot(&a, &a),
    }
}

/// Auxiliary quantities of the determinant factorization at one `Xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorQuantities {
    pub f: f64,
    pub g: f64,
    pub kappa: f64,
    /// `e[m][n] = E^m_n`
    pub e: [[f64; 4]; 4],
    pub d: [f64; 4],
    pub c: [f64; 4],
    /// `h[m][n] = h^m_n`
    pub h: [[f64; 4]; 4],
    /// `H_n`
    pub hv: [f64; 4],
    pub scalars: ProjectionScalars,
}

impl FactorQuantities {
    pub fn new(u: &[f64; 4], coeffs: &Coefficients, xi_cap: &[f64; 4]) -> Self {
        let ps = projections(u, xi_cap);
        let (eta, chi, lambda) = (coeffs.eta, coeffs.chi, coeffs.lambda);
        let (a, b, aa) = (ps.a, ps.b, ps.aa);
        let al = lower(&a);
        let f = 3.0 * b * b - aa;
        let g = 3.0 * (b * b - eta * aa / lambda);
        let kappa = 4.0 * eta * (lambda + chi) / (lambda * chi) * aa * aa;
        let mut e = [[0.0; 4]; 4];
        let mut h = [[0.0; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                let dl = if m == n { 1.0 } else { 0.0 };
                e[m][n] = -3.0 * eta * (aa * dl + a[m] * xi_cap[n] - 2.0 / 3.0 * a[m] * al[n]);
                h[m][n] = 3.0 * b * b * dl - a[m] * al[n] + e[m][n] / lambda;
            }
        }
        let d: [f64; 4] = std::array::from_fn(|n| -2.0 * eta * aa * (al[n] - 3.0 * xi_cap[n]));
        let cf = (lambda + chi) / (lambda * chi);
        let c = a.map(|x| cf * x);
        let hv: [f64; 4] = std::array::from_fn(|n| {
            f * ((lambda - 2.0 * eta) / lambda * al[n] + 3.0 * eta / lambda * xi_cap[n]) + cf * d[n]
        });
        Self {
            f,
            g,
            kappa,
            e,
            d,
            c,
            h,
            hv,
            scalars: ps,
        }
    }

    /// `H_m a^m`.
    pub fn h_dot_a(&self) -> f64 {
        contract(&self.hv, &self.scalars.a)
    }

    /// `(lambda + eta) / lambda F a.a + kappa`.
    pub fn h_dot_a_closed(&self, coeffs: &Coefficients) -> f64 {
        (coeffs.lambda + coeffs.eta) / coeffs.lambda * self.f * self.scalars.aa + self.kappa
    }

    /// The last factor `F G - F (lambda + eta) / lambda a.a - kappa`.
    pub fn quartic_factor(&self, coeffs: &Coefficients) -> f64 {
        self.f * self.g - self.h_dot_a_closed(coeffs)
    }
}

/// Closed-form `det(Xi_a A^a) = (9 b^18 / theta) G^3 F (F G - F (lambda + eta) a.a / lambda - kappa)`.
pub fn det_symbol(psi: &ExtendedState, model: &TransportModel, xi_cap: &[f64; 4]) -> f64 {
    let c = model.coefficients(psi.theta);
    let fq = FactorQuantities::new(&psi.u, &c, xi_cap);
    let b = fq.scalars.b;
    9.0 * b.powi(18) / psi.theta * fq.g.powi(3) * fq.f * fq.quartic_factor(&c)
}

/// Natural log of `|det|` of the closed form, for comparisons across many orders of magnitude.
pub fn log_abs_det_symbol(psi: &ExtendedState, model: &TransportModel, xi_cap: &[f64; 4]) -> f64 {
    let c = model.coefficients(psi.theta);
    let fq = FactorQuantities::new(&psi.u, &c, xi_cap);
    (9.0_f64).ln() + 18.0 * fq.scalars.b.abs().ln() - psi.theta.ln()
        + 3.0 * fq.g.abs().ln()
        + fq.f.abs().ln()
        + fq.quartic_factor(&c).abs().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RootFamily {
    Advective,
    Sound,
    Shear,
    Quartic,
}

impl RootFamily {
    pub fn multiplicity(&self) -> usize {
        match self {
            RootFamily::Advective => 18,
            RootFamily::Shear => 3,
            RootFamily::Sound | RootFamily::Quartic => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RootFamily::Advective => "advective",
            RootFamily::Sound => "sound",
            RootFamily::Shear => "shear",
            RootFamily::Quartic => "quartic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: f64,
    pub family: RootFamily,
    pub multiplicity: usize,
    /// `b^2 / a.a` on this root, where defined.
    pub beta: Option<f64>,
}

/// All roots of `det(Xi_a A^a)` in `Lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct RootFamilies {
    pub lambda1: f64,
    pub sound: [f64; 2],
    pub shear: [f64; 2],
    pub quartic: [f64; 4],
    /// `(r_plus, r_minus)`
    pub quartic_ratios: [f64; 2],
    pub shear_ratio: f64,
}

impl RootFamilies {
    pub fn roots(&self) -> Vec<Root> {
        let mut out = vec![Root {
            value: self.lambda1,
            family: RootFamily::Advective,
            multiplicity: 18,
            beta: None,
        }];
        for v in self.sound {
            out.push(Root { value: v, family: RootFamily::Sound, multiplicity: 1, beta: Some(1.0 / 3.0) });
        }
        for v in self.shear {
            out.push(Root { value: v, family: RootFamily::Shear, multiplicity: 3, beta: Some(self.shear_ratio) });
        }
        for (i, v) in self.quartic.iter().enumerate() {
            out.push(Root {
                value: *v,
                family: RootFamily::Quartic,
                multiplicity: 1,
                beta: Some(self.quartic_ratios[i / 2]),
            });
        }
        out
    }

    pub fn total_multiplicity(&self) -> usize {
        self.roots().iter().map(|r| r.multiplicity).sum()
    }

    /// The 30 roots repeated by multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .roots()
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.value, r.multiplicity))
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Real roots `Lambda` of `b^2 = beta a.a`, ordered `(+, -)` by the sign of the square root.
pub fn solve_beta_family(u: &[f64; 4], pair: &CovectorPair, beta: f64, family: &'static str) -> Result<[f64; 2]> {
    let (xi, zeta) = (&pair.xi, &pair.zeta);
    let uxi = contract(xi, u);
    let uzeta = contract(zeta, u);
    let xixi = dot(&lower(xi), &lower(xi));
    let xizeta = dot(&lower(xi), &lower(zeta));
    let zetazeta = dot(&lower(zeta), &lower(zeta));
    let q2 = (1.0 - beta) * uxi * uxi - beta * xixi;
    let q1 = (1.0 - beta) * uzeta * uxi - beta * xizeta;
    let q0 = (1.0 - beta) * uzeta * uzeta - beta * zetazeta;
    let mut disc = q1 * q1 - q2 * q0;
    let scale = q1 * q1 + (q2 * q0).abs();
    if disc < 0.0 {
        if disc < -DISCRIMINANT_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::ComplexRoots { family, discriminant: disc });
        }
        disc = 0.0;
    }
    let sq = disc.sqrt();
    // stable quadratic formula
    let t = if q1 >= 0.0 { -q1 - sq } else { -q1 + sq };
    let (r1, r2) = if t == 0.0 { (0.0, 0.0) } else { (t / q2, q0 / t) };
    let (hi, lo) = if r1 >= r2 { (r1, r2) } else { (r2, r1) };
    if q2 > 0.0 {
        Ok([hi, lo])
    } else {
        Ok([lo, hi])
    }
}

/// Ratios `b^2 / a.a` solving `9 lambda chi r^2 - 6 (lambda + 2 eta) chi r + lambda (chi - 4 eta) = 0`,
/// returned as `(r_plus, r_minus)`.
pub fn quartic_ratios(c: &Coefficients) -> Result<[f64; 2]> {
    let (eta, chi, lambda) = (c.eta, c.chi, c.lambda);
    let disc = eta * chi * (lambda * lambda + eta * chi + lambda * chi);
    if disc < 0.0 {
        return Err(Error::ComplexRoots { family: "quartic", discriminant: disc });
    }
    let base = (lambda + 2.0 * eta) * chi;
    let root = 2.0 * disc.sqrt();
    let den = 3.0 * lambda * chi;
    let plus = (base + root) / den;
    let minus = lambda * (chi - 4.0 * eta) / (3.0 * (base + root));
    Ok([plus, minus])
}

pub fn characteristic_roots(psi: &ExtendedState, model: &TransportModel, pair: &CovectorPair) -> Result<RootFamilies> {
    let c = model.checked_coefficients(psi.theta)?;
    roots_with(&psi.u, &c, pair)
}

pub fn roots_with(u: &[f64; 4], c: &Coefficients, pair: &CovectorPair) -> Result<RootFamilies> {
    let lambda1 = -contract(&pair.zeta, u) / contract(&pair.xi, u);
    let sound = solve_beta_family(u, pair, 1.0 / 3.0, "sound")?;
    let shear_ratio = c.eta / c.lambda;
    let shear = solve_beta_family(u, pair, shear_ratio, "shear")?;
    let ratios = quartic_ratios(c)?;
    let qp = solve_beta_family(u, pair, ratios[0], "quartic")?;
    let qm = solve_beta_family(u, pair, ratios[1], "quartic")?;
    Ok(RootFamilies {
        lambda1,
        sound,
        shear,
        quartic: [qp[0], qp[1], qm[0], qm[1]],
        quartic_ratios: ratios,
        shear_ratio,
    })
}

/// Per-family values of `b^2 / a.a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyRatios {
    pub sound: f64,
    pub shear: f64,
    pub quartic_plus: f64,
    pub quartic_minus: f64,
}

impl FamilyRatios {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sound, self.shear, self.quartic_plus, self.quartic_minus]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalityReport {
    pub admissible: bool,
    pub chi_exceeds_four_eta: bool,
    pub lambda_bound_holds: bool,
    pub ratios_in_range: bool,
    pub max_speed_ratio: f64,
    pub ratios: FamilyRatios,
    pub coefficients: Coefficients,
    /// Human-readable reasons for any failed condition.
    pub diagnostics: Vec<String>,
}

/// Causality check of a model; ratios are independent of `theta` because all coefficients scale with `eta`.
pub fn check_causality(model: &TransportModel) -> CausalityReport {
    check_coefficients(&model.coefficients(1.0))
}

pub fn check_coefficients(c: &Coefficients) -> CausalityReport {
    let mut diagnostics = Vec::new();
    let chi_ok = c.eta > 0.0 && c.chi > 4.0 * c.eta;
    if !chi_ok {
        diagnostics.push(format!("chi > 4 eta > 0 fails: chi = {}, eta = {}", c.chi, c.eta));
    }
    let bound = c.lambda_bound();
    let lambda_ok = chi_ok && c.lambda >= bound * (1.0 - BOUND_SLACK);
    if chi_ok && !lambda_ok {
        diagnostics.push(format!(
            "lambda >= 3 chi eta / (chi - eta) fails: lambda = {}, bound = {}",
            c.lambda, bound
        ));
    }
    let (qp, qm) = match quartic_ratios(c) {
        Ok([p, m]) => (p, m),
        Err(_) => {
            diagnostics.push("quartic ratios are complex".into());
            (f64::NAN, f64::NAN)
        }
    };
    let ratios = FamilyRatios {
        sound: 1.0 / 3.0,
        shear: c.eta / c.lambda,
        quartic_plus: qp,
        quartic_minus: qm,
    };
    let in_range = ratios
        .as_array()
        .iter()
        .all(|r| *r > 0.0 && *r <= 1.0 + 1e-12);
    if !in_range {
        diagnostics.push(format!("ratios outside (0, 1]: {:?}", ratios.as_array()));
    }
    let max_speed_ratio = ratios.as_array().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    CausalityReport {
        admissible: chi_ok && lambda_ok && in_range,
        chi_exceeds_four_eta: chi_ok,
        lambda_bound_holds: lambda_ok,
        ratios_in_range: in_range,
        max_speed_ratio,
        ratios,
        coefficients: *c,
        diagnostics,
    }
}

/// One point of a causality lattice scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub a1: f64,
    pub a2: f64,
    pub admissible: bool,
    pub max_speed_ratio: f64,
}

/// `check_coefficients` over an `n x n` lattice of `(a1, a2)` with `eta = 1`, endpoints included.
pub fn causality_scan(a1: (f64, f64), a2: (f64, f64), n: usize) -> Vec<ScanPoint> {
    let at = |r: (f64, f64), i: usize| if n < 2 { r.0 } else { r.0 + (r.1 - r.0) * i as f64 / (n - 1) as f64 };
    (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (x, y) = (at(a1, k / n), at(a2, k % n));
            let rep = check_coefficients(&Coefficients::new(1.0, x, y));
            ScanPoint {
                a1: x,
                a2: y,
                admissible: rep.admissible,
                max_speed_ratio: rep.max_speed_ratio,
            }
        })
        .collect()
}

/// Distinct rest-frame speeds, ascending.
pub fn rest_frame_speeds(model: &TransportModel) -> Result<Vec<f64>> {
    let c = model.coefficients(1.0);
    let [rp, rm] = quartic_ratios(&c)?;
    let mut v = vec![0.0, (c.eta / c.lambda).sqrt(), (1.0_f64 / 3.0).sqrt(), rm.sqrt(), rp.sqrt()];
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    Ok(v)
}

/// Largest `|Lambda|` over a set of unit spatial directions, for `xi = (1, 0, 0, 0)`.
pub fn max_signal_speed(u: &[f64; 4], c: &Coefficients, directions: &[[f64; 3]]) -> Result<f64> {
    let ratios = quartic_ratios(c)?;
    let betas = [1.0 / 3.0, c.eta / c.lambda, ratios[0], ratios[1]];
    let mut best = 0.0_f64;
    for dir in directions {
        let pair = CovectorPair {
            xi: [1.0, 0.0, 0.0, 0.0],
            zeta: [0.0, dir[0], dir[1], dir[2]],
        };
        best = best.max((-contract(&pair.zeta, u) / u[0]).abs());
        for (i, beta) in betas.iter().enumerate() {
            let fam = ["sound", "shear", "quartic", "quartic"][i];
            let r = solve_beta_family(u, &pair, *beta, fam)?;
            best = best.max(r[0].abs()).max(r[1].abs());
        }
    }
    Ok(best)
}

/// Iteration cap for the dense eigenvalue and singular value solvers.
pub const MAX_ITER: usize = 10_000;

/// `(xi_a A^a)^{-1} (zeta_a A^a)`.
pub fn reduced_matrix(psi: &ExtendedState, model: &TransportModel, pair: &CovectorPair) -> Result<Matrix30> {
    reduced_with(psi, &model.checked_coefficients(psi.theta)?, pair, 1.0)
}

pub fn reduced_with(psi: &ExtendedState, c: &Coefficients, pair: &CovectorPair, b_scale: f64) -> Result<Matrix30> {
    let mx = symbol_with(psi, c, &pair.xi, b_scale);
    let mz = symbol_with(psi, c, &pair.zeta, b_scale);
    let lu = mx.lu();
    lu.solve(&mz).ok_or(Error::NearSingularA0 { min_sv: 0.0, location: None })
}

/// Roots from the numeric spectrum of the reduced matrix, as `(Lambda, |imaginary part|)`, ascending.
pub fn numeric_roots(psi: &ExtendedState, model: &TransportModel, pair: &CovectorPair) -> Result<Vec<(f64, f64)>> {
    numeric_roots_with(psi, &model.checked_coefficients(psi.theta)?, pair, 1.0)
}

pub fn numeric_roots_with(
    psi: &ExtendedState,
    c: &Coefficients,
    pair: &CovectorPair,
    b_scale: f64,
) -> Result<Vec<(f64, f64)>> {
    let at = reduced_with(psi, c, pair, b_scale)?;
    let schur = [f64::EPSILON, 1e-14, 1e-13, 1e-12]
        .into_iter()
        .find_map(|eps| nalgebra::linalg::Schur::try_new(at, eps, MAX_ITER))
        .ok_or(Error::NoConvergence("Schur iteration"))?;
    let ev = schur.complex_eigenvalues();
    let mut out: Vec<(f64, f64)> = ev.iter().map(|z| (-z.re, z.im.abs())).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Largest mismatch between sorted closed-form and numeric roots, relative to `max(1, max |Lambda|)`,
/// with imaginary parts counted as mismatch.
pub fn root_mismatch(closed: &[f64], numeric: &[(f64, f64)]) -> f64 {
    let scale = closed.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    closed
        .iter()
        .zip(numeric)
        .map(|(c, (re, im))| ((c - re).abs()).max(*im) / scale)
        .fold(0.0, f64::max)
}

/// One group of (numerically) coincident roots.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub lambda: f64,
    pub multiplicity: usize,
    pub families: Vec<RootFamily>,
}

pub fn cluster_roots(roots: &[Root]) -> Vec<Cluster> {
    let mut sorted = roots.to_vec();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut out: Vec<(Vec<Root>,)> = Vec::new();
    for r in sorted {
        if let Some(last) = out.last_mut() {
            let prev = last.0.last().unwrap().value;
            if (r.value - prev).abs() <= CLUSTER_TOL * (1.0 + prev.abs()) {
                last.0.push(r);
                continue;
            }
        }
        out.push((vec![r],));
    }
    out.into_iter()
        .map(|(members,)| {
            let m: usize = members.iter().map(|r| r.multiplicity).sum();
            let lambda = members.iter().map(|r| r.value * r.multiplicity as f64).sum::<f64>() / m as f64;
            let mut families: Vec<RootFamily> = members.iter().map(|r| r.family).collect();
            families.dedup();
            Cluster {
                lambda,
                multiplicity: m,
                families,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ConditioningReport {
    /// `max |A V - V D| / max |A|`
    pub residual: f64,
    /// Smallest over largest singular value of `V`.
    pub rank_ratio: f64,
    /// Largest off-diagonal entry of `S A V` relative to `max(1, max |A|)`.
    pub offdiag: f64,
    /// Largest relative null-space residual over clusters.
    pub null_residual: f64,
}

#[derive(Debug, Clone)]
pub struct DiagonalizationResult {
    /// Roots `Lambda`, one per column of `v`.
    pub roots: Vec<f64>,
    /// Eigenvalues of the reduced matrix, `-Lambda`.
    pub eigenvalues: Vec<f64>,
    pub clusters: Vec<Cluster>,
    pub reduced: Matrix30,
    /// Columns are unit eigenvectors.
    pub v: Matrix30,
    /// `V^{-1}`
    pub s: Matrix30,
    pub report: ConditioningReport,
}

impl DiagonalizationResult {
    pub fn rank(&self) -> usize {
        let sv = self.v.singular_values();
        let max = sv.max();
        sv.iter().filter(|s| **s > 1e-8 * max).count()
    }
}

/// Orthonormal basis of `{x in R^4 : n . x = 0}` (plain component contraction).
fn row_null_space(n: &[f64; 4]) -> [[f64; 4]; 3] {
    let nn: f64 = n.iter().map(|x| x * x).sum();
    let p = Matrix4::from_fn(|i, j| if i == j { 1.0 } else { 0.0 } - n[i] * n[j] / nn);
    let eig = SymmetricEigen::new(p);
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    std::array::from_fn(|k| {
        let col = eig.eigenvectors.column(idx[k]);
        [col[0], col[1], col[2], col[3]]
    })
}

/// `dim` right-singular vectors of `m` with the smallest singular values.
fn svd_null_space(m: &Matrix30, dim: usize, lambda: f64) -> Result<Vec<[f64; PSI_LEN]>> {
    let svd = m
        .try_svd(false, true, f64::EPSILON, MAX_ITER)
        .ok_or(Error::NoConvergence("singular value decomposition"))?;
    let vt = svd.v_t.expect("requested v_t");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..PSI_LEN).collect();
    order.sort_by(|a, b| sv[*a].total_cmp(&sv[*b]));
    let tol = 1e-8 * sv.max().max(1.0);
    let found = order.iter().take_while(|i| sv[**i] <= tol).count();
    if found < dim {
        return Err(Error::DefectiveCluster { lambda, expected: dim, found });
    }
    Ok(order[..dim]
        .iter()
        .map(|i| std::array::from_fn(|j| vt[(*i, j)]))
        .collect())
}

/// The 18 eigenvectors on the advective root.
fn advective_vectors(psi: &ExtendedState, c: &Coefficients, xi_cap: &[f64; 4]) -> Result<Vec<[f64; PSI_LEN]>> {
    let u = &psi.u;
    let ps = projections(u, xi_cap);
    let a = ps.a;
    let proj = psi.projector();

    // w-family: w1 = u, completed to a basis of the annihilator of Xi
    let basis = row_null_space(xi_cap);
    let un: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut ws: Vec<[f64; 4]> = vec![*u];
    let mut ortho: Vec<[f64; 4]> = vec![u.map(|x| x / un)];
    let mut cands: Vec<[f64; 4]> = basis
        .iter()
        .map(|w| {
            let mut w = *w;
            for o in &ortho {
                let p: f64 = (0..4).map(|i| w[i] * o[i]).sum();
                (0..4).for_each(|i| w[i] -= p * o[i]);
            }
            w
        })
        .collect();
    cands.sort_by(|x, y| {
        let nx: f64 = x.iter().map(|v| v * v).sum();
        let ny: f64 = y.iter().map(|v| v * v).sum();
        ny.total_cmp(&nx)
    });
    for mut w in cands {
        if ws.len() == 3 {
            break;
        }
        for o in &ortho {
            let p: f64 = (0..4).map(|i| w[i] * o[i]).sum();
            (0..4).for_each(|i| w[i] -= p * o[i]);
        }
        let n: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            let w = w.map(|x| x / n);
            ortho.push(w);
            ws.push(w);
        }
    }
    if ws.len() < 3 {
        return Err(Error::DefectiveCluster { lambda: f64::NAN, expected: 18, found: 12 + ws.len() });
    }

    let mut out = Vec::with_capacity(18);
    for w in &ws {
        let mut v = [0.0; PSI_LEN];
        v[1..5].copy_from_slice(w);
        out.push(v);
    }
    for w in &ws {
        let mut v = [0.0; PSI_LEN];
        v[26..30].copy_from_slice(w);
        out.push(v);
    }

    // f-family: chi f_l^l a^m + D_n^{m k} f_k^n = 0 as a 4 x 16 system
    let mut k = DMatrix::<f64>::zeros(4, 16);
    for m in 0..4 {
        for kk in 0..4 {
            for n in 0..4 {
                let dl = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
                let d = -3.0
                    * c.eta
                    * (dl(n, m) * a[kk] + xi_cap[n] * proj.up(m, kk) - 2.0 / 3.0 * dl(kk, n) * a[m]);
                k[(m, 4 * kk + n)] = c.chi * a[m] * dl(kk, n) + d;
            }
        }
    }
    let kkt = &k * k.transpose();
    let inv = kkt.try_inverse().ok_or(Error::DefectiveCluster { lambda: f64::NAN, expected: 18, found: 6 })?;
    let p = DMatrix::<f64>::identity(16, 16) - k.transpose() * inv * &k;
    let eig = SymmetricEigen::new(p);
    let mut order: Vec<usize> = (0..16).collect();
    order.sort_by(|x, y| eig.eigenvalues[*y].total_cmp(&eig.eigenvalues[*x]));
    for i in order.iter().take(12) {
        let f = eig.eigenvectors.column(*i);
        let mut v = [0.0; PSI_LEN];
        let trace: f64 = (0..4).map(|kk| f[4 * kk + kk]).sum();
        v[0] = c.chi * trace;
        for j in 0..16 {
            v[9 + j] = f[j];
        }
        out.push(v);
    }
    Ok(out)
}

/// The three eigenvectors on one shear root.
fn shear_vectors(psi: &ExtendedState, c: &Coefficients, xi_cap: &[f64; 4]) -> Vec<[f64; PSI_LEN]> {
    let ps = projections(&psi.u, xi_cap);
    let (a, b, x) = (ps.a, ps.b, ps.aa);
    let al = lower(&a);
    let (eta, chi, lambda) = (c.eta, c.chi, c.lambda);
    let ca = chi * (lambda - 2.0 * eta) / ((lambda + chi) * b);
    let cx = 3.0 * eta * chi / ((lambda + chi) * b);
    let lead = b + lambda * x / (3.0 * b * chi);
    let alpha = lead * ca - lambda * x / (3.0 * b * b);
    let beta = lead * cx + lambda;
    let n: [f64; 4] = std::array::from_fn(|i| alpha * al[i] + beta * xi_cap[i]);
    row_null_space(&n)
        .iter()
        .map(|e| {
            let ae = contract(&al, e);
            let xe = contract(xi_cap, e);
            let cc = ca * ae + cx * xe;
            let mut v = [0.0; PSI_LEN];
            v[0] = cc;
            for m in 0..4 {
                v[1 + m] = lambda * a[m] * cc / (3.0 * b * chi) + lambda * e[m] - lambda * a[m] * ae / (3.0 * b * b);
                v[5 + m] = e[m];
            }
            for kk in 0..4 {
                for m in 0..4 {
                    v[9 + 4 * kk + m] = al[kk] * e[m] / b;
                }
            }
            v
        })
        .collect()
}

pub fn diagonalize(psi: &ExtendedState, model: &TransportModel, pair: &CovectorPair) -> Result<DiagonalizationResult> {
    diagonalize_with(psi, &model.checked_coefficients(psi.theta)?, pair, 1.0)
}

pub fn diagonalize_with(
    psi: &ExtendedState,
    c: &Coefficients,
    pair: &CovectorPair,
    b_scale: f64,
) -> Result<DiagonalizationResult> {
    let families = roots_with(&psi.u, c, pair)?;
    let clusters = cluster_roots(&families.roots());
    let reduced = reduced_with(psi, c, pair, b_scale)?;

    let mut columns: Vec<[f64; PSI_LEN]> = Vec::with_capacity(PSI_LEN);
    let mut roots = Vec::with_capacity(PSI_LEN);
    let mut null_residual = 0.0_f64;
    for cl in &clusters {
        let xi_cap = pair.combine(cl.lambda);
        let m = symbol_with(psi, c, &xi_cap, b_scale);
        let single = cl.families.len() == 1;
        let mut vecs = match (single, cl.families[0]) {
            (true, RootFamily::Advective) if b_scale == 1.0 => advective_vectors(psi, c, &xi_cap)?,
            (true, RootFamily::Shear) if b_scale == 1.0 => shear_vectors(psi, c, &xi_cap),
            _ => svd_null_space(&m, cl.multiplicity, cl.lambda)?,
        };
        let mnorm = m.amax().max(1.0);
        for v in vecs.iter_mut() {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            let mv = m * nalgebra::SVector::<f64, PSI_LEN>::from_column_slice(v);
            null_residual = null_residual.max(mv.amax() / mnorm);
        }
        if vecs.len() != cl.multiplicity {
            return Err(Error::DefectiveCluster {
                lambda: cl.lambda,
                expected: cl.multiplicity,
                found: vecs.len(),
            });
        }
        for v in vecs {
            columns.push(v);
            roots.push(cl.lambda);
        }
    }
    if columns.len() != PSI_LEN {
        return Err(Error::DefectiveCluster {
            lambda: f64::NAN,
            expected: PSI_LEN,
            found: columns.len(),
        });
    }

    let v = Matrix30::from_fn(|i, j| columns[j][i]);
    let eigenvalues: Vec<f64> = roots.iter().map(|l| -l).collect();
    let dmat = Matrix30::from_diagonal(&nalgebra::SVector::<f64, PSI_LEN>::from_column_slice(&eigenvalues));
    let anorm = reduced.amax().max(f64::MIN_POSITIVE);
    let residual = (reduced * v - v * dmat).amax() / anorm;

    let sv = v.singular_values();
    let rank_ratio = sv.min() / sv.max();
    if !(rank_ratio > 1e-8) {
        let found = sv.iter().filter(|s| **s > 1e-8 * sv.max()).count();
        return Err(Error::DefectiveCluster { lambda: f64::NAN, expected: PSI_LEN, found });
    }
    let s = v.try_inverse().ok_or(Error::DefectiveCluster {
        lambda: f64::NAN,
        expected: PSI_LEN,
        found: PSI_LEN - 1,
    })?;
    let sav = s * reduced * v;
    let mut offdiag = 0.0_f64;
    for i in 0..PSI_LEN {
        for j in 0..PSI_LEN {
            if i != j {
                offdiag = offdiag.max(sav[(i, j)].abs());
            }
        }
    }
    offdiag /= reduced.amax().max(1.0);

    Ok(DiagonalizationResult {
        roots,
        eigenvalues,
        clusters,
        reduced,
        v,
        s,
        report: ConditioningReport {
            residual,
            rank_ratio,
            offdiag,
            null_residual,
        },
    })
}
