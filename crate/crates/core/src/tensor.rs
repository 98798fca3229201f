//! Minkowski geometry on R x T^3 with signature (-, +, +, +).
//!
//! Coordinates are `x^0 = t` and spatial `x^i` on `[0, 2pi)`. The background is
//! flat, so covariant derivatives are partial derivatives throughout the crate.

use crate::error::{Error, Result};

/// Diagonal of `g_{ab}` (and of `g^{ab}`).
pub const METRIC_DIAG: [f64; 4] = [-1.0, 1.0, 1.0, 1.0];

/// Absolute tolerance on `|u.u + 1|` for unit-timelike checks.
pub const UNIT_TOL: f64 = 1e-12;

/// Half-width of the band around zero classified as null.
pub const NULL_BAND: f64 = 1e-12;

/// The flat metric `diag(-1, 1, 1, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MinkowskiMetric;

impl MinkowskiMetric {
    /// Signature as the sign of each diagonal entry.
    pub const SIGNATURE: [i8; 4] = [-1, 1, 1, 1];

    #[inline]
    pub fn down(a: usize, b: usize) -> f64 {
        if a == b {
            METRIC_DIAG[a]
        } else {
            0.0
        }
    }

    #[inline]
    pub fn up(a: usize, b: usize) -> f64 {
        Self::down(a, b)
    }

    pub fn lower(v: &Vector) -> Covector {
        Covector(lower(&v.0))
    }

    pub fn raise(w: &Covector) -> Vector {
        Vector(lower(&w.0))
    }
}

/// Kronecker delta.
#[inline]
pub fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Lowers (or raises, the metric is its own inverse) a raw component array.
#[inline]
pub fn lower(v: &[f64; 4]) -> [f64; 4] {
    [-v[0], v[1], v[2], v[3]]
}

/// `g_{ab} v^a w^b` on raw contravariant arrays.
#[inline]
pub fn dot(v: &[f64; 4], w: &[f64; 4]) -> f64 {
    -v[0] * w[0] + v[1] * w[1] + v[2] * w[2] + v[3] * w[3]
}

/// Plain component sum `v_a w^a` for one lowered and one raised array.
#[inline]
pub fn contract(lowered: &[f64; 4], raised: &[f64; 4]) -> f64 {
    lowered[0] * raised[0] + lowered[1] * raised[1] + lowered[2] * raised[2] + lowered[3] * raised[3]
}

/// Contravariant four-vector `v^a`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vector(pub [f64; 4]);

/// Covariant four-vector `w_a`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Covector(pub [f64; 4]);

impl Vector {
    pub fn lower(&self) -> Covector {
        MinkowskiMetric::lower(self)
    }
}

impl Covector {
    pub fn raise(&self) -> Vector {
        MinkowskiMetric::raise(self)
    }

    /// `w_a v^a`.
    pub fn apply(&self, v: &Vector) -> f64 {
        contract(&self.0, &v.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variance {
    Up,
    Down,
}

/// Rank-two tensor with per-slot variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTensor {
    pub c: [[f64; 4]; 4],
    pub variance: [Variance; 2],
}

impl TwoTensor {
    pub fn new(c: [[f64; 4]; 4], first: Variance, second: Variance) -> Self {
        Self {
            c,
            variance: [first, second],
        }
    }

    pub fn zeros(first: Variance, second: Variance) -> Self {
        Self::new([[0.0; 4]; 4], first, second)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.c[a][b]
    }

    /// Contracts the second slot of `self` with the first slot of `other`.
    /// The two slots must carry opposite variance.
    pub fn contract(&self, other: &TwoTensor) -> Result<TwoTensor> {
        if self.variance[1] == other.variance[0] {
            return Err(Error::Config(
                "contraction requires one upper and one lower index".into(),
            ));
        }
        let mut c = [[0.0; 4]; 4];
        for (a, row) in c.iter_mut().enumerate() {
            for (b, out) in row.iter_mut().enumerate() {
                *out = (0..4).map(|m| self.c[a][m] * other.c[m][b]).sum();
            }
        }
        Ok(TwoTensor::new(c, self.variance[0], other.variance[1]))
    }

    /// Applies the second slot to a vector of the opposite variance.
    pub fn apply(&self, v: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (a, o) in out.iter_mut().enumerate() {
            *o = contract(&self.c[a], v);
        }
        out
    }

    /// Trace over one upper and one lower slot; for equal variance the metric is inserted.
    pub fn trace(&self) -> f64 {
        if self.variance[0] != self.variance[1] {
            (0..4).map(|a| self.c[a][a]).sum()
        } else {
            (0..4).map(|a| METRIC_DIAG[a] * self.c[a][a]).sum()
        }
    }

    pub fn transpose(&self) -> TwoTensor {
        let mut c = [[0.0; 4]; 4];
        for (a, row) in c.iter_mut().enumerate() {
            for (b, out) in row.iter_mut().enumerate() {
                *out = self.c[b][a];
            }
        }
        TwoTensor::new(c, self.variance[1], self.variance[0])
    }

    pub fn max_abs(&self) -> f64 {
        self.c
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// `g_{ab} v^a w^b`.
pub fn inner(v: &Vector, w: &Vector) -> f64 {
    dot(&v.0, &w.0)
}

/// Checks `u.u = -1` within [`UNIT_TOL`].
pub fn check_unit_timelike(u: &[f64; 4], tol: f64) -> Result<()> {
    let norm = dot(u, u);
    if (norm + 1.0).abs() > tol || !norm.is_finite() {
        return Err(Error::NotUnitTimelike { norm });
    }
    Ok(())
}

/// `Pi_{ab} = g_{ab} + u_a u_b` for a unit timelike `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projector {
    u_up: [f64; 4],
    u_down: [f64; 4],
}

impl Projector {
    /// Builds the projector without checking normalization.
    #[inline]
    pub fn unchecked(u: &[f64; 4]) -> Self {
        Self {
            u_up: *u,
            u_down: lower(u),
        }
    }

    #[inline]
    pub fn down(&self, a: usize, b: usize) -> f64 {
        MinkowskiMetric::down(a, b) + self.u_down[a] * self.u_down[b]
    }

    #[inline]
    pub fn up(&self, a: usize, b: usize) -> f64 {
        MinkowskiMetric::up(a, b) + self.u_up[a] * self.u_up[b]
    }

    /// `Pi_a^b`: first index down, second up.
    #[inline]
    pub fn down_up(&self, a: usize, b: usize) -> f64 {
        delta(a, b) + self.u_down[a] * self.u_up[b]
    }

    /// `Pi^a_b`: first index up, second down.
    #[inline]
    pub fn up_down(&self, a: usize, b: usize) -> f64 {
        delta(a, b) + self.u_up[a] * self.u_down[b]
    }

    pub fn u(&self) -> &[f64; 4] {
        &self.u_up
    }

    pub fn u_lowered(&self) -> &[f64; 4] {
        &self.u_down
    }

    fn tabulate(f: impl Fn(usize, usize) -> f64) -> [[f64; 4]; 4] {
        let mut c = [[0.0; 4]; 4];
        for (a, row) in c.iter_mut().enumerate() {
            for (b, out) in row.iter_mut().enumerate() {
                *out = f(a, b);
            }
        }
        c
    }

    pub fn down_array(&self) -> [[f64; 4]; 4] {
        Self::tabulate(|a, b| self.down(a, b))
    }

    pub fn up_array(&self) -> [[f64; 4]; 4] {
        Self::tabulate(|a, b| self.up(a, b))
    }

    pub fn as_down(&self) -> TwoTensor {
        TwoTensor::new(self.down_array(), Variance::Down, Variance::Down)
    }

    pub fn as_up(&self) -> TwoTensor {
        TwoTensor::new(self.up_array(), Variance::Up, Variance::Up)
    }

    /// `Pi_a^b`.
    pub fn as_mixed(&self) -> TwoTensor {
        TwoTensor::new(
            Self::tabulate(|a, b| self.down_up(a, b)),
            Variance::Down,
            Variance::Up,
        )
    }

    /// `Pi^{ab} w_b` for a covector `w`.
    #[inline]
    pub fn project_covector(&self, w: &[f64; 4]) -> [f64; 4] {
        let uw = contract(w, &self.u_up);
        let mut out = [0.0; 4];
        for (a, o) in out.iter_mut().enumerate() {
            *o = METRIC_DIAG[a] * w[a] + self.u_up[a] * uw;
        }
        out
    }

    /// `Pi^a_b v^b` for a vector `v`.
    #[inline]
    pub fn project_vector(&self, v: &[f64; 4]) -> [f64; 4] {
        let uv = contract(&self.u_down, v);
        let mut out = [0.0; 4];
        for (a, o) in out.iter_mut().enumerate() {
            *o = v[a] + self.u_up[a] * uv;
        }
        out
    }
}

/// Projector orthogonal to a unit timelike `u`.
pub fn projector(u: &Vector) -> Result<Projector> {
    check_unit_timelike(&u.0, UNIT_TOL)?;
    Ok(Projector::unchecked(&u.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalCharacter {
    Timelike,
    Null,
    Spacelike,
}

pub fn classify(v: &Vector) -> CausalCharacter {
    let n = inner(v, v);
    if n < -NULL_BAND {
        CausalCharacter::Timelike
    } else if n > NULL_BAND {
        CausalCharacter::Spacelike
    } else {
        CausalCharacter::Null
    }
}

/// Same classification for a covector.
pub fn classify_covector(w: &Covector) -> CausalCharacter {
    classify(&w.raise())
}

/// Unit four-velocity from its spatial components, `u^0 = sqrt(1 + |u|^2)`.
pub fn four_velocity(spatial: [f64; 3]) -> [f64; 4] {
    let s2 = spatial[0] * spatial[0] + spatial[1] * spatial[1] + spatial[2] * spatial[2];
    [(1.0 + s2).sqrt(), spatial[0], spatial[1], spatial[2]]
}

/// Four-velocity of a boost with 3-velocity `v` (|v| < 1).
pub fn boost_velocity(v: [f64; 3]) -> [f64; 4] {
    let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let gamma = 1.0 / (1.0 - v2).sqrt();
    [gamma, gamma * v[0], gamma * v[1], gamma * v[2]]
}
