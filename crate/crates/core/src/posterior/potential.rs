use crate::error::{Error, Result};
use crate::forward::{EllipticForward1D, HeatForward, ObservationSet};
use crate::sequence_space::{sobolev_weight, BasisSpec, SpectralField};

/// Negative log-likelihood of the heat problem with noise covariance `A^{−β}`:
/// `Φ(u) = ½Σ α_j^β e^{−2α_j} u_j² − Σ α_j^β e^{−α_j} y_j u_j`.
///
/// This is the unshifted form; the data-only term `½Σα^β y_j²` is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatPotential {
    basis: BasisSpec,
    noise_beta: f64,
    y: Vec<f64>,
    // α^β e^{−2α} and α^β e^{−α} y, cached per mode
    quad: Vec<f64>,
    lin: Vec<f64>,
}

impl HeatPotential {
    pub fn new(basis: BasisSpec, noise_beta: f64, y: Vec<f64>) -> Result<Self> {
        if !noise_beta.is_finite() {
            return Err(Error::config("noise_beta must be finite"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("heat data must be finite"));
        }
        let mut quad = Vec::with_capacity(y.len());
        let mut lin = Vec::with_capacity(y.len());
        for (i, yj) in y.iter().enumerate() {
            let (q, l) = mode_weights(&basis, noise_beta, i + 1);
            quad.push(q);
            lin.push(l * yj);
        }
        Ok(Self {
            basis,
            noise_beta,
            y,
            quad,
            lin,
        })
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn noise_beta(&self) -> f64 {
        self.noise_beta
    }

    pub fn data(&self) -> &[f64] {
        &self.y
    }

    fn weights(&self, j: usize) -> (f64, f64) {
        if j <= self.y.len() {
            (self.quad[j - 1], self.lin[j - 1])
        } else {
            (mode_weights(&self.basis, self.noise_beta, j).0, 0.0)
        }
    }

    fn mode_term(&self, j: usize, x: f64) -> f64 {
        let (q, l) = self.weights(j);
        0.5 * q * x * x - l * x
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        u.iter().enumerate().map(|(i, &x)| self.mode_term(i + 1, x)).sum()
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &x)| {
                let (q, l) = self.weights(i + 1);
                q * x - l
            })
            .collect()
    }

    /// The `y`-term alone, `−Σ α^β e^{−α} y_j u_j`: a linear potential.
    pub fn linear_part(&self) -> LinearPotential {
        LinearPotential {
            coeffs: self.lin.iter().map(|l| -l).collect(),
        }
    }

    pub fn with_data(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.basis, self.noise_beta, y)
    }

    /// `log(α^β e^{−2α})` and `log(α^β e^{−α})`, which stay finite long after
    /// the weights themselves underflow.
    pub fn log_weights(&self, j: usize) -> (f64, f64) {
        let alpha = self.basis.eigenvalue(j).expect("j ≥ 1");
        let lb = self.noise_beta * alpha.ln();
        (lb - 2.0 * alpha, lb - alpha)
    }
}

fn mode_weights(basis: &BasisSpec, beta: f64, j: usize) -> (f64, f64) {
    let alpha = basis.eigenvalue(j).expect("j ≥ 1");
    let ab = alpha.powf(beta);
    (ab * (-2.0 * alpha).exp(), ab * (-alpha).exp())
}

/// `Φ(u) = Σ g_j u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPotential {
    pub coeffs: Vec<f64>,
}

/// `Φ(u) = (λ/2) Σ j^{2t/d} (u_j − c_j)²`; with `λ = 1`, `c = 0` this is `½‖u‖_t²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPotential {
    pub lambda: f64,
    pub t: f64,
    pub dim: usize,
    pub center: Vec<f64>,
}

impl QuadraticPotential {
    pub fn new(lambda: f64, t: f64, center: Vec<f64>) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::config("quadratic potential needs λ ≥ 0"));
        }
        Ok(Self { lambda, t, dim: 1, center })
    }

    pub(crate) fn c(&self, j: usize) -> f64 {
        self.center.get(j - 1).copied().unwrap_or(0.0)
    }

    /// Curvature `λ j^{2t/d}` of mode `j`.
    pub fn curvature(&self, j: usize) -> f64 {
        self.lambda * sobolev_weight(j, self.t, self.dim)
    }
}

/// Forward maps usable inside a Gaussian misfit.
#[derive(Debug, Clone)]
pub enum ForwardMap {
    /// `e^{−A}u`, first `outputs` coefficients.
    Heat {
        forward: HeatForward,
        outputs: usize,
    },
    /// Diagonal gains `G(u)_j = g_j u_j`.
    Diagonal(Vec<f64>),
    Elliptic(EllipticForward1D),
}

impl ForwardMap {
    pub fn apply(&self, u: &SpectralField) -> Result<Vec<f64>> {
        match self {
            ForwardMap::Heat { forward, outputs } => {
                let v = forward.apply(u)?;
                Ok((1..=*outputs).map(|j| v.coeff(j)).collect())
            }
            ForwardMap::Diagonal(g) => Ok(g.iter().enumerate().map(|(i, gj)| gj * u.coeff(i + 1)).collect()),
            ForwardMap::Elliptic(f) => f.observe(u),
        }
    }
}

/// `½|Γ^{−1/2}(y − G(u))|²`.
#[derive(Debug, Clone)]
pub struct GaussianMisfit {
    pub forward: ForwardMap,
    pub obs: ObservationSet,
}

/// A potential `Φ(u; y)`.
#[derive(Debug, Clone)]
pub enum Potential {
    Constant(f64),
    Linear(LinearPotential),
    Heat(HeatPotential),
    Quadratic(QuadraticPotential),
    Misfit(GaussianMisfit),
    /// `Φ + c`
    Shifted {
        inner: Box<Potential>,
        shift: f64,
    },
    /// `Φ ∘ P^N`
    Truncated {
        inner: Box<Potential>,
        n: usize,
    },
}

impl Potential {
    pub fn zero() -> Self {
        Potential::Constant(0.0)
    }

    pub fn shifted(self, shift: f64) -> Self {
        Potential::Shifted {
            inner: Box::new(self),
            shift,
        }
    }

    pub fn truncated(self, n: usize) -> Self {
        Potential::Truncated { inner: Box::new(self), n }
    }

    pub fn value(&self, u: &SpectralField) -> Result<f64> {
        Ok(match self {
            Potential::Constant(c) => *c,
            Potential::Linear(l) => l.coeffs.iter().zip(&u.coeffs).map(|(g, x)| g * x).sum(),
            Potential::Heat(h) => h.value(&u.coeffs),
            Potential::Quadratic(q) => u
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, x)| 0.5 * q.curvature(i + 1) * (x - q.c(i + 1)).powi(2))
                .sum(),
            Potential::Misfit(m) => {
                let g = m.forward.apply(u)?;
                m.obs.misfit(&g)?
            }
            Potential::Shifted { inner, shift } => inner.value(u)? + shift,
            Potential::Truncated { inner, n } => {
                if u.len() <= *n {
                    inner.value(u)?
                } else {
                    let mut low = u.clone();
                    low.coeffs.truncate(*n);
                    inner.value(&low)?
                }
            }
        })
    }

    /// Closed-form `DΦ(u)` where one exists, same length as `u`.
    pub fn gradient(&self, u: &SpectralField) -> Option<Vec<f64>> {
        match self {
            Potential::Constant(_) => Some(vec![0.0; u.len()]),
            Potential::Linear(l) => Some((0..u.len()).map(|i| l.coeffs.get(i).copied().unwrap_or(0.0)).collect()),
            Potential::Heat(h) => Some(h.gradient(&u.coeffs)),
            Potential::Quadratic(q) => Some(
                u.coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, x)| q.curvature(i + 1) * (x - q.c(i + 1)))
                    .collect(),
            ),
            Potential::Misfit(GaussianMisfit {
                forward: ForwardMap::Diagonal(g),
                obs,
            }) if is_diagonal(obs) => {
                let res = ForwardMap::Diagonal(g.clone()).apply(u).ok()?;
                Some(
                    (0..u.len())
                        .map(|i| match g.get(i) {
                            Some(gi) => -gi * (obs.y()[i] - res[i]) / obs.covariance()[(i, i)],
                            None => 0.0,
                        })
                        .collect(),
                )
            }
            Potential::Misfit(_) => None,
            Potential::Shifted { inner, .. } => inner.gradient(u),
            Potential::Truncated { inner, n } => {
                let mut low = u.clone();
                low.coeffs.truncate((*n).min(u.len()));
                let mut g = inner.gradient(&low)?;
                g.resize(u.len(), 0.0);
                Some(g)
            }
        }
    }

    /// `Φ(u + h e_j) − Φ(u − h e_j)`.
    ///
    /// Potentials that are sums of per-mode terms difference the single term
    /// that changes, so the result does not drown in the rounding error of
    /// the other modes.
    pub fn mode_difference(&self, u: &SpectralField, j: usize, h: f64) -> Result<f64> {
        let x = u.coeff(j);
        match self {
            Potential::Constant(_) => Ok(0.0),
            Potential::Linear(l) => Ok(l.coeffs.get(j - 1).copied().unwrap_or(0.0) * 2.0 * h),
            Potential::Heat(p) => Ok(p.mode_term(j, x + h) - p.mode_term(j, x - h)),
            Potential::Quadratic(q) => {
                let c = q.c(j);
                Ok(0.5 * q.curvature(j) * ((x + h - c).powi(2) - (x - h - c).powi(2)))
            }
            Potential::Shifted { inner, .. } => inner.mode_difference(u, j, h),
            Potential::Truncated { inner, n } => {
                if j > *n {
                    Ok(0.0)
                } else {
                    let mut low = u.clone();
                    low.coeffs.truncate((*n).min(u.len()));
                    inner.mode_difference(&low, j, h)
                }
            }
            Potential::Misfit(_) => {
                let mut plus = u.clone();
                if plus.len() < j {
                    plus.coeffs.resize(j, 0.0);
                }
                let mut minus = plus.clone();
                plus.coeffs[j - 1] += h;
                minus.coeffs[j - 1] -= h;
                Ok(self.value(&plus)? - self.value(&minus)?)
            }
        }
    }

    /// The same potential with data `y + dy`.
    pub fn with_data_offset(&self, dy: &[f64]) -> Result<Potential> {
        let shift = |y: &[f64]| -> Vec<f64> {
            let n = y.len().max(dy.len());
            (0..n)
                .map(|i| y.get(i).copied().unwrap_or(0.0) + dy.get(i).copied().unwrap_or(0.0))
                .collect()
        };
        Ok(match self {
            Potential::Heat(h) => Potential::Heat(h.with_data(shift(h.data()))?),
            Potential::Misfit(m) => {
                if dy.len() != m.obs.len() {
                    return Err(Error::config("data offset length differs from the observation count"));
                }
                Potential::Misfit(GaussianMisfit {
                    forward: m.forward.clone(),
                    obs: ObservationSet::new(shift(m.obs.y()), m.obs.covariance().clone())?,
                })
            }
            Potential::Shifted { inner, shift } => inner.with_data_offset(dy)?.shifted(*shift),
            Potential::Truncated { inner, n } => inner.with_data_offset(dy)?.truncated(*n),
            _ => return Err(Error::config("this potential carries no data")),
        })
    }

    /// The heat potential underneath any shifts and truncations.
    pub fn as_heat(&self) -> Option<&HeatPotential> {
        match self {
            Potential::Heat(h) => Some(h),
            Potential::Shifted { inner, .. } | Potential::Truncated { inner, .. } => inner.as_heat(),
            _ => None,
        }
    }

    pub fn truncation(&self) -> Option<usize> {
        match self {
            Potential::Truncated { inner, n } => Some(inner.truncation().map_or(*n, |m| m.min(*n))),
            Potential::Shifted { inner, .. } => inner.truncation(),
            _ => None,
        }
    }

    pub fn total_shift(&self) -> f64 {
        match self {
            Potential::Shifted { inner, shift } => shift + inner.total_shift(),
            Potential::Truncated { inner, .. } => inner.total_shift(),
            _ => 0.0,
        }
    }
}

fn is_diagonal(obs: &ObservationSet) -> bool {
    let g = obs.covariance();
    (0..g.nrows()).all(|i| (0..g.ncols()).all(|k| i == k || g[(i, k)] == 0.0))
}
