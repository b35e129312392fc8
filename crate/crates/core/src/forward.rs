//! Forward maps: the heat semigroup `e^{−A}` (diagonal in the eigenbasis) and a
//! piecewise-linear finite-element solver for `−(κp′)′ = f` on (0,1).

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence_space::{BasisMatrix, BasisSpec, SpectralField};

/// `G(u) = e^{−A}u`: the solution of the heat equation at time one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatForward {
    basis: BasisSpec,
}

impl HeatForward {
    pub fn new(basis: BasisSpec) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    /// Diagonal entry `e^{−α_j}`.
    pub fn factor(&self, j: usize) -> f64 {
        (-self.basis.eigenvalue(j).expect("j ≥ 1")).exp()
    }

    pub fn apply(&self, u: &SpectralField) -> Result<SpectralField> {
        self.basis.check_compatible(&u.basis)?;
        let coeffs = u.coeffs.iter().enumerate().map(|(i, c)| self.factor(i + 1) * c).collect();
        Ok(SpectralField::new(u.basis, coeffs))
    }
}

/// Noise amplification of naive inversion; `value` saturates to `+∞` and the
/// exact magnitude survives in `log_value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amplification {
    pub value: f64,
    pub log_value: f64,
    pub saturated: bool,
}

/// `ε·e^{α_j}`: how far `e^{A}y` moves when the data move by `εφ_j`.
pub fn heat_amplification(basis: &BasisSpec, j: usize, eps: f64) -> Result<Amplification> {
    if eps < 0.0 {
        return Err(Error::domain("noise size must be nonnegative"));
    }
    let alpha = basis.eigenvalue(j)?;
    if eps == 0.0 {
        return Ok(Amplification {
            value: 0.0,
            log_value: f64::NEG_INFINITY,
            saturated: false,
        });
    }
    let log_value = eps.ln() + alpha;
    let value = log_value.exp();
    Ok(Amplification {
        value,
        log_value,
        saturated: value.is_infinite(),
    })
}

/// Right-hand side of the elliptic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Source {
    Constant {
        value: f64,
    },
    /// `amplitude·sin(kπx)`
    Sine {
        amplitude: f64,
        k: u32,
    },
    /// Nodal values on the interior mesh nodes.
    Grid {
        values: Vec<f64>,
    },
}

impl Source {
    fn nodal(&self, nodes: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Source::Constant { value } => vec![*value; nodes.len()],
            Source::Sine { amplitude, k } => nodes
                .iter()
                .map(|x| amplitude * (*k as f64 * std::f64::consts::PI * x).sin())
                .collect(),
            Source::Grid { values } => {
                if values.len() != nodes.len() {
                    return Err(Error::config(format!(
                        "source grid has {} values for {} interior nodes",
                        values.len(),
                        nodes.len()
                    )));
                }
                values.clone()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaTransform {
    /// `κ = u`; requires a positive field.
    #[default]
    Identity,
    /// `κ = e^u` (log-normal permeability).
    Exp,
}

/// Piecewise-linear FEM for `−(κp′)′ = f`, `p(0) = p(1) = 0`, observed at
/// `obs_points` by point evaluation.
#[derive(Debug, Clone)]
pub struct EllipticForward1D {
    mesh_m: usize,
    nodes: Vec<f64>,
    midpoints: Vec<f64>,
    f: Vec<f64>,
    dual_norm_f: f64,
    obs_points: Vec<f64>,
    transform: KappaTransform,
    table: Option<BasisMatrix>,
}

impl EllipticForward1D {
    pub fn new(mesh_m: usize, source: &Source, obs_points: Vec<f64>, transform: KappaTransform) -> Result<Self> {
        if mesh_m < 2 {
            return Err(Error::config("elliptic mesh needs at least two interior nodes"));
        }
        if let Some(x) = obs_points.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(Error::config(format!("observation point {x} is not inside (0,1)")));
        }
        let h = 1.0 / (mesh_m + 1) as f64;
        let nodes: Vec<f64> = (1..=mesh_m).map(|i| i as f64 * h).collect();
        let midpoints = (0..=mesh_m).map(|e| (e as f64 + 0.5) * h).collect();
        let f = source.nodal(&nodes)?;
        let dual_norm_f = dual_norm(&f)?;
        Ok(Self {
            mesh_m,
            nodes,
            midpoints,
            f,
            dual_norm_f,
            obs_points,
            transform,
            table: None,
        })
    }

    /// Tabulate the basis at the element midpoints for repeated evaluation.
    pub fn with_basis_table(mut self, basis: &BasisSpec, modes: usize) -> Result<Self> {
        self.table = Some(BasisMatrix::new(basis, &self.midpoints, modes)?);
        Ok(self)
    }

    pub fn mesh_width(&self) -> f64 {
        1.0 / (self.mesh_m + 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Element midpoints, where `κ` is evaluated and positivity is checked.
    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn source(&self) -> &[f64] {
        &self.f
    }

    /// Discrete `‖f‖_{V*}`.
    pub fn source_dual_norm(&self) -> f64 {
        self.dual_norm_f
    }

    pub fn obs_points(&self) -> &[f64] {
        &self.obs_points
    }

    pub fn transform(&self) -> KappaTransform {
        self.transform
    }

    /// `κ` at the element midpoints.
    pub fn kappa(&self, u: &SpectralField) -> Result<Vec<f64>> {
        let raw = match &self.table {
            Some(t) if u.len() <= t.modes() => t.eval(u)?,
            _ => crate::sequence_space::synthesize(u, &self.midpoints)?,
        };
        Ok(match self.transform {
            KappaTransform::Identity => raw,
            KappaTransform::Exp => raw.into_iter().map(f64::exp).collect(),
        })
    }

    /// Nodal solution for the field `u`.
    pub fn pressure(&self, u: &SpectralField) -> Result<Vec<f64>> {
        let kappa = self.kappa(u)?;
        self.solve_kappa(&kappa)
    }

    pub fn solve_kappa(&self, kappa: &[f64]) -> Result<Vec<f64>> {
        check_positive(kappa, &self.midpoints)?;
        elliptic_solve(kappa, &self.f)
    }

    /// `(p(x_1), …, p(x_J))`.
    pub fn observe(&self, u: &SpectralField) -> Result<Vec<f64>> {
        let p = self.pressure(u)?;
        Ok(self.observe_nodal(&p))
    }

    /// Point evaluation of the piecewise-linear interpolant.
    pub fn observe_nodal(&self, p: &[f64]) -> Vec<f64> {
        let h = self.mesh_width();
        let at = |i: isize| -> f64 {
            if i <= 0 || i as usize > self.mesh_m {
                0.0
            } else {
                p[i as usize - 1]
            }
        };
        self.obs_points
            .iter()
            .map(|&x| {
                let s = x / h;
                let i = s.floor() as isize;
                let w = s - i as f64;
                (1.0 - w) * at(i) + w * at(i + 1)
            })
            .collect()
    }
}

fn check_positive(kappa: &[f64], points: &[f64]) -> Result<()> {
    let (i, &min) = kappa
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::domain("empty κ grid"))?;
    if !(min > 0.0) {
        return Err(Error::Positivity {
            min,
            x: points.get(i).copied().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Solve the FEM system with `κ` given on the `M + 1` element midpoints and
/// `f` on the `M` interior nodes (lumped load `h·f_i`).
pub fn elliptic_solve(kappa: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let m = f.len();
    if kappa.len() != m + 1 {
        return Err(Error::domain(format!(
            "κ needs one value per element ({} elements, got {})",
            m + 1,
            kappa.len()
        )));
    }
    if let Some((i, &k)) = kappa.iter().enumerate().find(|(_, k)| !(**k > 0.0)) {
        let h = 1.0 / (m + 1) as f64;
        return Err(Error::Positivity {
            min: k,
            x: (i as f64 + 0.5) * h,
        });
    }
    let h = 1.0 / (m + 1) as f64;
    let diag: Vec<f64> = (0..m).map(|i| (kappa[i] + kappa[i + 1]) / h).collect();
    let off: Vec<f64> = (0..m.saturating_sub(1)).map(|i| -kappa[i + 1] / h).collect();
    let rhs: Vec<f64> = f.iter().map(|v| h * v).collect();
    Ok(thomas(&off, &diag, &off, &rhs))
}

/// Tridiagonal solve; `lower[i]` couples rows `i+1, i`, `upper[i]` rows `i, i+1`.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return Vec::new();
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { upper[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i - 1] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Discrete `H¹₀` norm `(Σ_e (Δp)²/h)^{1/2}` with zero boundary values.
pub fn v_norm(p: &[f64]) -> f64 {
    let h = 1.0 / (p.len() + 1) as f64;
    let mut prev = 0.0;
    let mut s = 0.0;
    for &v in p.iter().chain(std::iter::once(&0.0)) {
        s += (v - prev).powi(2);
        prev = v;
    }
    (s / h).sqrt()
}

/// Discrete `‖f‖_{V*}`, realized as `‖p_f‖_V` with `−p_f″ = f`.
pub fn dual_norm(f: &[f64]) -> Result<f64> {
    let ones = vec![1.0; f.len() + 1];
    Ok(v_norm(&elliptic_solve(&ones, f)?))
}

/// `‖p_1 − p_2‖_V / ‖κ_1 − κ_2‖_∞` for two midpoint permeabilities.
pub fn lipschitz_ratio(kappa1: &[f64], kappa2: &[f64], f: &[f64]) -> Result<f64> {
    let gap = kappa1.iter().zip(kappa2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap == 0.0 {
        return Err(Error::UndefinedRatio("κ_1 = κ_2; the Lipschitz ratio is 0/0".into()));
    }
    let p1 = elliptic_solve(kappa1, f)?;
    let p2 = elliptic_solve(kappa2, f)?;
    let diff: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a - b).collect();
    Ok(v_norm(&diff) / gap)
}

/// Data `y` with Gaussian noise covariance `Γ`.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    y: Vec<f64>,
    gamma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl ObservationSet {
    pub fn new(y: Vec<f64>, gamma: DMatrix<f64>) -> Result<Self> {
        if gamma.nrows() != y.len() || gamma.ncols() != y.len() {
            return Err(Error::config(format!(
                "noise covariance is {}×{} but there are {} observations",
                gamma.nrows(),
                gamma.ncols(),
                y.len()
            )));
        }
        if (&gamma - gamma.transpose()).amax() > 1e-12 * gamma.amax().max(1.0) {
            return Err(Error::config("noise covariance is not symmetric"));
        }
        let chol = Cholesky::new(gamma.clone()).ok_or_else(|| Error::config("noise covariance is not positive definite"))?;
        Ok(Self { y, gamma, chol })
    }

    /// `Γ = σ²I`.
    pub fn isotropic(y: Vec<f64>, variance: f64) -> Result<Self> {
        let n = y.len();
        Self::new(y, DMatrix::from_diagonal_element(n, n, variance))
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `½ rᵀΓ⁻¹r` with `r = y − g`.
    pub fn misfit(&self, g: &[f64]) -> Result<f64> {
        if g.len() != self.y.len() {
            return Err(Error::domain(format!(
                "forward output has {} entries, data has {}",
                g.len(),
                self.y.len()
            )));
        }
        let r = DVector::from_iterator(self.y.len(), self.y.iter().zip(g).map(|(a, b)| a - b));
        // ‖L⁻¹r‖² with Γ = LLᵀ
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&r)
            .ok_or_else(|| Error::domain("singular Cholesky factor"))?;
        Ok(0.5 * z.norm_squared())
    }

    /// Cholesky factor `L` of `Γ`, for drawing noise `Lz`.
    pub fn cholesky_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}
