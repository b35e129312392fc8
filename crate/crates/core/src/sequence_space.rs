//! Fixed spectral bases and coefficient-space geometry.
//!
//! Every function in the crate is a [`SpectralField`]: a finite vector of
//! coefficients `u_1..u_N` in an analytic eigenbasis of the Dirichlet or
//! periodic Laplacian, plus an optional real-space offset `φ_0`. Norms,
//! projections and synthesis all act on the coefficient vector.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisFamily {
    /// `√2 sin(jπx)` on (0,1), eigenfunctions of `−Δ` with Dirichlet conditions.
    DirichletSine,
    /// Mean-zero real Fourier modes on the unit torus, `sin` before `cos` at
    /// each wavenumber.
    FourierMeanZero,
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisFamily::DirichletSine => "dirichlet-sine",
            BasisFamily::FourierMeanZero => "fourier-mean-zero",
        })
    }
}

/// Scaling of the basis functions.
///
/// Hilbert-space priors use `L2` (orthonormal). Priors built in `L^∞` need
/// `‖φ_j‖_∞ = 1`, which for the trigonometric bases means dropping the `√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    L2,
    Sup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub dim: usize,
    /// Resolution of the default synthesis grid.
    pub grid_points: usize,
    #[serde(default)]
    pub normalization: Normalization,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, dim: usize, grid_points: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("basis dimension must be positive"));
        }
        if grid_points == 0 {
            return Err(Error::config("grid_points must be positive"));
        }
        Ok(Self {
            family,
            dim,
            grid_points,
            normalization: Normalization::L2,
        })
    }

    /// One-dimensional sine basis with a 128-point synthesis grid.
    pub fn dirichlet_1d() -> Self {
        Self {
            family: BasisFamily::DirichletSine,
            dim: 1,
            grid_points: 128,
            normalization: Normalization::L2,
        }
    }

    pub fn fourier_1d() -> Self {
        Self {
            family: BasisFamily::FourierMeanZero,
            ..Self::dirichlet_1d()
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    /// Two bases are compatible when fields over them may be added.
    pub fn compatible(&self, other: &BasisSpec) -> bool {
        self.family == other.family && self.dim == other.dim && self.normalization == other.normalization
    }

    pub fn check_compatible(&self, other: &BasisSpec) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::BasisMismatch {
                left: self.describe(),
                right: other.describe(),
            })
        }
    }

    fn describe(&self) -> String {
        format!("{} d={} {:?}", self.family, self.dim, self.normalization)
    }

    /// `j`-th eigenvalue of the Laplacian, ordered increasingly.
    pub fn eigenvalue(&self, j: usize) -> Result<f64> {
        eigenvalue(self, j)
    }

    /// Evenly spaced points strictly inside the synthesis domain.
    pub fn default_grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        match self.family {
            BasisFamily::DirichletSine => (1..=n).map(|i| i as f64 / (n + 1) as f64).collect(),
            BasisFamily::FourierMeanZero => (0..n).map(|i| i as f64 / n as f64).collect(),
        }
    }

    /// Value of `φ_j` at `x` (1-D only; the caller checks the domain).
    pub fn basis_function(&self, j: usize, x: f64) -> f64 {
        let amp = match self.normalization {
            Normalization::L2 => std::f64::consts::SQRT_2,
            Normalization::Sup => 1.0,
        };
        match self.family {
            BasisFamily::DirichletSine => amp * (j as f64 * PI * x).sin(),
            BasisFamily::FourierMeanZero => {
                let k = j.div_ceil(2) as f64;
                if j % 2 == 1 {
                    amp * (2.0 * PI * k * x).sin()
                } else {
                    amp * (2.0 * PI * k * x).cos()
                }
            }
        }
    }

    fn check_point(&self, x: f64) -> Result<()> {
        let ok = match self.family {
            BasisFamily::DirichletSine => x > 0.0 && x < 1.0,
            BasisFamily::FourierMeanZero => (0.0..1.0).contains(&x),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("grid point {x} lies outside the {} domain", self.family)))
        }
    }
}

/// Laplacian eigenvalue `α_j`, `j ≥ 1`.
///
/// In one dimension these are `j²π²` (sine) and `(2π⌈j/2⌉)²` (Fourier). For
/// `d > 1` the cube/torus spectrum is enumerated shell by shell, so cost grows
/// with `j`.
pub fn eigenvalue(basis: &BasisSpec, j: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::domain("eigenvalue index starts at 1"));
    }
    if basis.dim == 1 {
        return Ok(match basis.family {
            BasisFamily::DirichletSine => (j as f64 * PI).powi(2),
            BasisFamily::FourierMeanZero => (2.0 * PI * j.div_ceil(2) as f64).powi(2),
        });
    }
    let (lattice_min, scale) = match basis.family {
        BasisFamily::DirichletSine => (1i64, PI * PI),
        BasisFamily::FourierMeanZero => (0i64, 4.0 * PI * PI),
    };
    // Grow the squared-radius bound until the shells hold at least j points.
    let mut bound = (j as f64).powf(2.0 / basis.dim as f64).ceil() as usize + basis.dim + 1;
    loop {
        let counts = shell_counts(basis.dim, lattice_min, bound, basis.family);
        let mut seen = 0usize;
        for (m, &c) in counts.iter().enumerate() {
            seen += c;
            if seen >= j {
                return Ok(scale * m as f64);
            }
        }
        bound *= 2;
    }
}

/// Number of lattice points with `|k|² = m` for `m ≤ bound`.
fn shell_counts(dim: usize, lattice_min: i64, bound: usize, family: BasisFamily) -> Vec<usize> {
    let kmax = (bound as f64).sqrt() as i64 + 1;
    let mut one_d = vec![0usize; bound + 1];
    let lo = match family {
        BasisFamily::DirichletSine => lattice_min,
        BasisFamily::FourierMeanZero => -kmax,
    };
    for k in lo..=kmax {
        let m = (k * k) as usize;
        if m <= bound {
            one_d[m] += 1;
        }
    }
    let mut acc = one_d.clone();
    for _ in 1..dim {
        let mut next = vec![0usize; bound + 1];
        for (a, &ca) in acc.iter().enumerate() {
            if ca == 0 {
                continue;
            }
            for (b, &cb) in one_d.iter().enumerate() {
                if a + b > bound {
                    break;
                }
                next[a + b] += ca * cb;
            }
        }
        acc = next;
    }
    if family == BasisFamily::FourierMeanZero {
        // drop the constant mode
        acc[0] = 0;
    }
    acc
}

/// Fixed real-space offset `φ_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Offset {
    Constant(f64),
    /// `left + (right − left)·x`
    Linear {
        left: f64,
        right: f64,
    },
}

impl Offset {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Offset::Constant(c) => c,
            Offset::Linear { left, right } => left + (right - left) * x,
        }
    }

    /// Essential infimum and supremum over [0,1].
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Offset::Constant(c) => (c, c),
            Offset::Linear { left, right } => (left.min(right), left.max(right)),
        }
    }
}

impl fmt::Display for Offset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Offset::Constant(c) => write!(f, "constant:{c}"),
            Offset::Linear { left, right } => write!(f, "linear:{left}:{right}"),
        }
    }
}

impl FromStr for Offset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::config(format!("bad number {p:?} in offset id {s:?}")))
        };
        match parts.as_slice() {
            ["constant", c] => Ok(Offset::Constant(num(c)?)),
            ["linear", a, b] => Ok(Offset::Linear {
                left: num(a)?,
                right: num(b)?,
            }),
            _ => Err(Error::config(format!("unknown offset id {s:?}"))),
        }
    }
}

/// Coefficients of a function in a fixed eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRecord", into = "FieldRecord")]
pub struct SpectralField {
    pub basis: BasisSpec,
    pub offset: Option<Offset>,
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(basis: BasisSpec, coeffs: Vec<f64>) -> Self {
        Self {
            basis,
            offset: None,
            coeffs,
        }
    }

    pub fn zeros(basis: BasisSpec, n: usize) -> Self {
        Self::new(basis, vec![0.0; n])
    }

    pub fn with_offset(mut self, offset: Offset) -> Self {
        self.offset = Some(offset);
        self
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of mode `j` (1-based); zero past the truncation.
    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j - 1).copied().unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Coefficient-wise sum; the shorter field is zero-padded.
    pub fn checked_add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.basis.check_compatible(&other.basis)?;
        let offset = match (self.offset, other.offset) {
            (Some(_), Some(_)) => return Err(Error::domain("cannot add two fields that both carry an offset")),
            (a, b) => a.or(b),
        };
        let n = self.len().max(other.len());
        let coeffs = (1..=n).map(|j| self.coeff(j) + other.coeff(j)).collect();
        Ok(SpectralField {
            basis: self.basis,
            offset,
            coeffs,
        })
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            basis: self.basis,
            offset: self.offset,
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    pub fn sobolev_norm(&self, t: f64) -> f64 {
        sobolev_norm(self, t)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldRecord {
    basis_family: BasisFamily,
    d: usize,
    offset_id: Option<String>,
    #[serde(default, skip_serializing_if = "is_l2")]
    normalization: Normalization,
    coeffs: Vec<f64>,
}

fn is_l2(n: &Normalization) -> bool {
    *n == Normalization::L2
}

impl From<SpectralField> for FieldRecord {
    fn from(u: SpectralField) -> Self {
        FieldRecord {
            basis_family: u.basis.family,
            d: u.basis.dim,
            offset_id: u.offset.map(|o| o.to_string()),
            normalization: u.basis.normalization,
            coeffs: u.coeffs,
        }
    }
}

impl TryFrom<FieldRecord> for SpectralField {
    type Error = Error;

    fn try_from(r: FieldRecord) -> Result<Self> {
        let basis = BasisSpec::new(r.basis_family, r.d, 128)?.with_normalization(r.normalization);
        let offset = r.offset_id.as_deref().map(str::parse).transpose()?;
        if r.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("field coefficients must be finite"));
        }
        Ok(SpectralField {
            basis,
            offset,
            coeffs: r.coeffs,
        })
    }
}

/// Weight `j^{2t/d}` of the `H^t` norm.
#[inline]
pub fn sobolev_weight(j: usize, t: f64, dim: usize) -> f64 {
    (j as f64).powf(2.0 * t / dim as f64)
}

/// `(Σ_j j^{2t/d} u_j²)^{1/2}`. Negative `t` gives the dual-scale norms.
pub fn sobolev_norm(u: &SpectralField, t: f64) -> f64 {
    let d = u.basis.dim;
    u.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| sobolev_weight(i + 1, t, d) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// `(Σ_j j^{tq/d + q/2 − 1} |u_j|^q)^{1/q}`; coincides with
/// [`sobolev_norm`] at `q = 2`.
pub fn besov_norm(u: &SpectralField, t: f64, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::domain(format!("Besov integrability q = {q} must be ≥ 1")));
    }
    let d = u.basis.dim as f64;
    let expo = t * q / d + q / 2.0 - 1.0;
    let s: f64 = u
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| ((i + 1) as f64).powf(expo) * c.abs().powf(q))
        .sum();
    Ok(s.powf(1.0 / q))
}

/// Split `u = P^N u + Q^N u`. Both parts keep the length of `u`; the offset
/// travels with the low part.
pub fn project(u: &SpectralField, n: usize) -> (SpectralField, SpectralField) {
    let mut low = u.clone();
    let mut high = SpectralField::zeros(u.basis, u.len());
    for j in n.min(u.len())..u.len() {
        high.coeffs[j] = u.coeffs[j];
        low.coeffs[j] = 0.0;
    }
    (low, high)
}

/// Basis values `φ_j(x_i)` tabulated once for repeated synthesis on a fixed grid.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    basis: BasisSpec,
    grid: Vec<f64>,
    modes: usize,
    // row-major: grid point i, mode j
    values: Vec<f64>,
}

impl BasisMatrix {
    pub fn new(basis: &BasisSpec, grid: &[f64], modes: usize) -> Result<Self> {
        if basis.dim != 1 {
            return Err(Error::domain("real-space synthesis is implemented for d = 1 only"));
        }
        let mut values = Vec::with_capacity(grid.len() * modes);
        for &x in grid {
            basis.check_point(x)?;
            values.extend((1..=modes).map(|j| basis.basis_function(j, x)));
        }
        Ok(Self {
            basis: *basis,
            grid: grid.to_vec(),
            modes,
            values,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// `φ_0(x_i) + Σ_j u_j φ_j(x_i)` on the tabulated grid.
    pub fn eval(&self, u: &SpectralField) -> Result<Vec<f64>> {
        self.basis.check_compatible(&u.basis)?;
        if u.len() > self.modes {
            return Err(Error::domain(format!(
                "field has {} modes but the table holds {}",
                u.len(),
                self.modes
            )));
        }
        let n = u.len();
        Ok(self
            .grid
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let row = &self.values[i * self.modes..i * self.modes + n];
                let s: f64 = row.iter().zip(&u.coeffs).map(|(p, c)| p * c).sum();
                s + u.offset.map_or(0.0, |o| o.eval(x))
            })
            .collect())
    }
}

/// Real-space values of `u` on `grid`.
pub fn synthesize(u: &SpectralField, grid: &[f64]) -> Result<Vec<f64>> {
    BasisMatrix::new(&u.basis, grid, u.len())?.eval(u)
}
