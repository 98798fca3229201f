//! Periodic grid on `[0, 2pi)^3`, pseudo-spectral derivatives, 2/3 dealiasing and
//! discrete Sobolev norms.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, GridIndex, Result};

/// Uniform periodic grid with `n` points per direction.
#[derive(Clone)]
pub struct TorusGrid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusGrid").field("n", &self.n).finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} must be a power of two and at least 8")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Flat index with `i` fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    pub fn location(&self, p: usize) -> GridIndex {
        [p % self.n, (p / self.n) % self.n, p / (self.n * self.n)]
    }

    pub fn coords(&self, p: usize) -> [f64; 3] {
        let h = self.spacing();
        self.location(p).map(|i| i as f64 * h)
    }

    /// Signed wavenumber of FFT bin `m`, in `{-n/2+1, ..., n/2}`.
    pub fn wavenumber(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m > n / 2 {
            m - n
        } else {
            m
        }
    }

    pub fn wavevector(&self, p: usize) -> [i64; 3] {
        self.location(p).map(|m| self.wavenumber(m))
    }

    /// Samples `f` at every grid point.
    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|p| f(self.coords(p))).collect()
    }

    /// Unnormalized forward transform of one scalar.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    /// Normalized inverse transform, keeping the real part.
    pub fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut c, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        c.iter().map(|z| z.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        fft.process(buf);
        let mut line = vec![Complex64::default(); n];
        for k in 0..n {
            for i in 0..n {
                for (j, l) in line.iter_mut().enumerate() {
                    *l = buf[self.index(i, j, k)];
                }
                fft.process(&mut line);
                for (j, l) in line.iter().enumerate() {
                    buf[self.index(i, j, k)] = *l;
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                for (k, l) in line.iter_mut().enumerate() {
                    *l = buf[self.index(i, j, k)];
                }
                fft.process(&mut line);
                for (k, l) in line.iter().enumerate() {
                    buf[self.index(i, j, k)] = *l;
                }
            }
        }
    }

    /// `d_dir f` for `dir` in `0..3`, Nyquist mode dropped.
    pub fn derivative(&self, f: &[f64], dir: usize) -> Vec<f64> {
        let mut c = self.forward(f);
        let nyq = (self.n / 2) as i64;
        for (p, z) in c.iter_mut().enumerate() {
            let k = self.wavevector(p)[dir];
            *z = if k == nyq { Complex64::default() } else { *z * Complex64::new(0.0, k as f64) };
        }
        self.inverse(c)
    }

    /// Whether the mode at bin `p` survives the 2/3 rule.
    pub fn keeps_mode(&self, p: usize) -> bool {
        let cut = self.n as f64 / 3.0;
        self.wavevector(p).iter().all(|k| (*k as f64).abs() <= cut)
    }

    pub fn dealias(&self, f: &[f64]) -> Vec<f64> {
        let mut c = self.forward(f);
        for (p, z) in c.iter_mut().enumerate() {
            if !self.keeps_mode(p) {
                *z = Complex64::default();
            }
        }
        self.inverse(c)
    }

    /// Squared `H^r` norm of one scalar with volume weighting, so `|1|_r^2 = (2pi)^3`.
    pub fn sobolev_norm_sq(&self, f: &[f64], r: f64) -> f64 {
        let c = self.forward(f);
        let weight = (2.0 * PI).powi(3) / (self.len() as f64).powi(2);
        let sum: f64 = c
            .iter()
            .enumerate()
            .map(|(p, z)| {
                let k = self.wavevector(p);
                let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
                (1.0 + k2).powf(r) * z.norm_sqr()
            })
            .sum();
        sum * weight
    }

    /// Trapezoid quadrature of `|f|^2` over the torus.
    pub fn l2_norm_sq_physical(&self, f: &[f64]) -> f64 {
        let h = self.spacing();
        f.iter().map(|x| x * x).sum::<f64>() * h * h * h
    }
}

/// Multi-component field, component-major, each component `n^3` values with `i` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub n: usize,
    pub components: usize,
    pub data: Vec<f64>,
}

impl GridField {
    pub fn zeros(n: usize, components: usize) -> Self {
        Self {
            n,
            components,
            data: vec![0.0; n * n * n * components],
        }
    }

    /// Rejects mismatched lengths and non-finite values.
    pub fn new(n: usize, components: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n * n * components {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {components} components on n = {n}, got {}",
                n * n * n * components,
                data.len()
            )));
        }
        let points = n * n * n;
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            let p = bad % points;
            return Err(Error::NonFiniteState {
                location: Some([p % n, (p / n) % n, p / (n * n)]),
            });
        }
        Ok(Self { n, components, data })
    }

    pub fn points(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let m = self.points();
        &self.data[c * m..(c + 1) * m]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let m = self.points();
        &mut self.data[c * m..(c + 1) * m]
    }

    /// All components at one point.
    pub fn point<const M: usize>(&self, p: usize) -> [f64; M] {
        let m = self.points();
        std::array::from_fn(|c| self.data[c * m + p])
    }

    pub fn set_point(&mut self, p: usize, values: &[f64]) {
        let m = self.points();
        for (c, v) in values.iter().enumerate() {
            self.data[c * m + p] = *v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &GridField) -> GridField {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        GridField { data, ..*self }
    }

    pub fn scale(&self, s: f64) -> GridField {
        GridField {
            data: self.data.iter().map(|x| s * x).collect(),
            ..*self
        }
    }

    /// Every `factor`-th point in each direction.
    pub fn subsample(&self, factor: usize) -> GridField {
        let n = self.n / factor;
        let mut out = GridField::zeros(n, self.components);
        for c in 0..self.components {
            let src = self.component(c);
            let dst = out.component_mut(c);
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        dst[i + n * (j + n * k)] = src[factor * i + self.n * (factor * j + self.n * factor * k)];
                    }
                }
            }
        }
        out
    }

    pub fn from_components(n: usize, comps: Vec<Vec<f64>>) -> GridField {
        let components = comps.len();
        GridField {
            n,
            components,
            data: comps.into_iter().flatten().collect(),
        }
    }
}

/// Spatial derivative of every component of `f`.
pub fn spectral_derivative(grid: &TorusGrid, f: &GridField, dir: usize) -> GridField {
    let comps: Vec<Vec<f64>> = (0..f.components)
        .into_par_iter()
        .map(|c| grid.derivative(f.component(c), dir))
        .collect();
    GridField::from_components(f.n, comps)
}

/// All three spatial derivatives with one forward transform per component.
pub fn gradient(grid: &TorusGrid, f: &GridField) -> [GridField; 3] {
    let nyq = (grid.n() / 2) as i64;
    let per: Vec<[Vec<f64>; 3]> = (0..f.components)
        .into_par_iter()
        .map(|c| {
            let spec = grid.forward(f.component(c));
            std::array::from_fn(|dir| {
                let d: Vec<Complex64> = spec
                    .iter()
                    .enumerate()
                    .map(|(p, z)| {
                        let k = grid.wavevector(p)[dir];
                        if k == nyq {
                            Complex64::default()
                        } else {
                            *z * Complex64::new(0.0, k as f64)
                        }
                    })
                    .collect();
                grid.inverse(d)
            })
        })
        .collect();
    std::array::from_fn(|dir| {
        GridField::from_components(f.n, per.iter().map(|p| p[dir].clone()).collect())
    })
}

/// `||f||_r`, summed over components.
pub fn sobolev_norm(grid: &TorusGrid, f: &GridField, r: f64) -> f64 {
    let parts: Vec<f64> = (0..f.components)
        .into_par_iter()
        .map(|c| grid.sobolev_norm_sq(f.component(c), r))
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

pub fn dealias(grid: &TorusGrid, f: &GridField) -> GridField {
    let comps: Vec<Vec<f64>> = (0..f.components)
        .into_par_iter()
        .map(|c| grid.dealias(f.component(c)))
        .collect();
    GridField::from_components(f.n, comps)
}
