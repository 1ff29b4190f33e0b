//! A- and D-optimality objectives, GLM weights and Fisher information,
//! and the normal-inverse-gamma posterior update.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a Cholesky factorization is treated as failed.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionKind {
    A,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// Strict improvement of `candidate` over `incumbent`.
    pub fn is_better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Minimize => candidate < incumbent,
            Direction::Maximize => candidate > incumbent,
        }
    }

    /// Sentinel for an infeasible design.
    pub fn worst(self) -> f64 {
        match self {
            Direction::Minimize => f64::INFINITY,
            Direction::Maximize => f64::NEG_INFINITY,
        }
    }

    pub fn is_worst(self, value: f64) -> bool {
        value == self.worst()
    }

    /// Improvement from `before` to `after` measured along the direction.
    pub fn gain(self, before: f64, after: f64) -> f64 {
        match self {
            Direction::Minimize => before - after,
            Direction::Maximize => after - before,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    pub lambda: f64,
}

impl CriterionSpec {
    pub fn new(kind: CriterionKind, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!(
                "smoothing parameter lambda must be non-negative, got {lambda}"
            )));
        }
        Ok(Self { kind, lambda })
    }

    pub fn direction(&self) -> Direction {
        match self.kind {
            CriterionKind::A => Direction::Minimize,
            CriterionKind::D => Direction::Maximize,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            CriterionKind::A => "A-optimality",
            CriterionKind::D => "D-optimality",
        }
    }
}

/// Response family with its canonical link. Dispersion is fixed at 1 and prior weights at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmFamily {
    BinomialLogit,
    PoissonLog,
}

impl GlmFamily {
    pub fn from_names(family: &str, link: &str) -> Result<Self> {
        match (family.to_ascii_lowercase().as_str(), link.to_ascii_lowercase().as_str()) {
            ("binomial", "logit") => Ok(GlmFamily::BinomialLogit),
            ("poisson", "log") => Ok(GlmFamily::PoissonLog),
            (f, l) => Err(Error::Config(format!(
                "unsupported family/link '{f}'/'{l}': only binomial/logit and poisson/log are implemented"
            ))),
        }
    }

    pub fn family_name(self) -> &'static str {
        match self {
            GlmFamily::BinomialLogit => "binomial",
            GlmFamily::PoissonLog => "poisson",
        }
    }

    pub fn link_name(self) -> &'static str {
        match self {
            GlmFamily::BinomialLogit => "logit",
            GlmFamily::PoissonLog => "log",
        }
    }

    pub const fn dispersion(self) -> f64 {
        1.0
    }
}

/// Working weight `1 / (g'(μ)² Var(y))` as a function of the linear predictor.
pub trait GlmWeight: Sync {
    fn weight(&self, eta: f64) -> f64;
}

impl GlmWeight for GlmFamily {
    #[inline]
    fn weight(&self, eta: f64) -> f64 {
        match self {
            GlmFamily::BinomialLogit => {
                // μ(1-μ) written with e^{-|η|} so it never overflows
                let e = (-eta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            GlmFamily::PoissonLog => eta.exp(),
        }
    }
}

pub fn glm_weight(family: GlmFamily, eta: f64) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::NonFinite(format!("linear predictor {eta}")));
    }
    Ok(family.weight(eta))
}

/// A- or D-value of a symmetric information matrix, or the direction's
/// worst value when the matrix is singular.
pub fn information_value(m: &DMatrix<f64>, kind: CriterionKind) -> f64 {
    let p = m.nrows();
    let mut scratch = vec![0.0; p * p];
    information_value_in(m.as_slice(), p, kind, &mut scratch)
}

/// Same as [`information_value`] on a column-major `p × p` slice, using
/// `scratch` (length `p²`) for the factorization.
pub fn information_value_in(m: &[f64], p: usize, kind: CriterionKind, scratch: &mut [f64]) -> f64 {
    let worst = match kind {
        CriterionKind::A => f64::INFINITY,
        CriterionKind::D => f64::NEG_INFINITY,
    };
    if p == 0 {
        return worst;
    }
    if cholesky_lower(m, p, scratch) {
        return match kind {
            CriterionKind::D => 2.0 * (0..p).map(|i| scratch[i + i * p].ln()).sum::<f64>(),
            CriterionKind::A => trace_inverse_from_cholesky(scratch, p),
        };
    }
    eigen_fallback(m, p, kind).unwrap_or(worst)
}

/// In-place lower Cholesky factor of `m` into `l` (column-major). Fails when a
/// pivot falls below `PIVOT_TOL` times the largest diagonal entry.
fn cholesky_lower(m: &[f64], p: usize, l: &mut [f64]) -> bool {
    let max_diag = (0..p).map(|i| m[i + i * p]).fold(0.0_f64, f64::max);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return false;
    }
    let floor = PIVOT_TOL * max_diag;
    for j in 0..p {
        let mut d = m[j + j * p];
        for k in 0..j {
            d -= l[j + k * p] * l[j + k * p];
        }
        if !(d > floor) {
            return false;
        }
        let djj = d.sqrt();
        l[j + j * p] = djj;
        for i in (j + 1)..p {
            let mut s = m[i + j * p];
            for k in 0..j {
                s -= l[i + k * p] * l[j + k * p];
            }
            l[i + j * p] = s / djj;
        }
    }
    true
}

/// `tr(M⁻¹) = ‖L⁻¹‖²_F` by forward substitution on each unit vector.
fn trace_inverse_from_cholesky(l: &[f64], p: usize) -> f64 {
    let mut total = 0.0;
    let mut x = [0.0_f64; 64];
    let mut heap;
    let x: &mut [f64] = if p <= 64 {
        &mut x[..p]
    } else {
        heap = vec![0.0; p];
        &mut heap
    };
    for k in 0..p {
        for i in k..p {
            let mut s = if i == k { 1.0 } else { 0.0 };
            for j in k..i {
                s -= l[i + j * p] * x[j];
            }
            let xi = s / l[i + i * p];
            x[i] = xi;
            total += xi * xi;
        }
    }
    total
}

fn eigen_fallback(m: &[f64], p: usize, kind: CriterionKind) -> Option<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mat = DMatrix::from_column_slice(p, p, m);
    let eig = SymmetricEigen::new(0.5 * (&mat + mat.transpose()));
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= PIVOT_TOL * max {
        return None;
    }
    Some(match kind {
        CriterionKind::D => eig.eigenvalues.iter().map(|v| v.ln()).sum(),
        CriterionKind::A => eig.eigenvalues.iter().map(|v| 1.0 / v).sum(),
    })
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn check_penalty(z: &DMatrix<f64>, r0: &DMatrix<f64>) -> Result<()> {
    if r0.nrows() != z.ncols() || r0.ncols() != z.ncols() {
        return Err(Error::Shape(format!(
            "penalty is {}x{}, model matrix has {} columns",
            r0.nrows(),
            r0.ncols(),
            z.ncols()
        )));
    }
    Ok(())
}

/// `tr((ZᵀZ + λR₀)⁻¹)` for A (minimized) or `log|ZᵀZ + λR₀|` for D (maximized).
pub fn objective_lm(z: &DMatrix<f64>, r0: &DMatrix<f64>, spec: &CriterionSpec) -> Result<f64> {
    check_finite(z, "model matrix")?;
    check_penalty(z, r0)?;
    let m = z.tr_mul(z) + r0 * spec.lambda;
    Ok(information_value(&m, spec.kind))
}

/// `ZᵀWZ + λR₀` with `w_ii` the family weight at `z_iᵀθ`.
pub fn fisher_information<W: GlmWeight>(
    z: &DMatrix<f64>,
    theta: &DVector<f64>,
    family: &W,
    lambda: f64,
    r0: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if theta.len() != z.ncols() {
        return Err(Error::Shape(format!(
            "theta has length {}, model matrix has {} columns",
            theta.len(),
            z.ncols()
        )));
    }
    check_penalty(z, r0)?;
    let eta = z * theta;
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear predictor".into()));
    }
    let mut weighted = z.clone();
    for (i, e) in eta.iter().enumerate() {
        let w = family.weight(*e);
        weighted.row_mut(i).scale_mut(w);
    }
    let mut info = z.tr_mul(&weighted) + r0 * lambda;
    // force exact symmetry
    let p = info.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (info[(i, j)] + info[(j, i)]);
            info[(i, j)] = v;
            info[(j, i)] = v;
        }
    }
    Ok(info)
}

/// Pseudo-Bayesian objective at a single parameter value.
pub fn objective_glm_at_theta<W: GlmWeight>(
    z: &DMatrix<f64>,
    theta: &DVector<f64>,
    family: &W,
    r0: &DMatrix<f64>,
    spec: &CriterionSpec,
) -> Result<f64> {
    check_finite(z, "model matrix")?;
    let info = fisher_information(z, theta, family, spec.lambda, r0)?;
    Ok(information_value(&info, spec.kind))
}

/// Normal-inverse-gamma hyperparameters for `(θ, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NigState {
    pub mu: DVector<f64>,
    pub v: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
}

impl NigState {
    pub fn new(mu: DVector<f64>, v: DMatrix<f64>, a: f64, b: f64) -> Result<Self> {
        if v.nrows() != mu.len() || v.ncols() != mu.len() {
            return Err(Error::Shape("prior covariance must be P x P".into()));
        }
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Config("NIG hyperparameters a and b must be positive".into()));
        }
        if (&v - v.transpose()).amax() > 1e-12 * v.amax().max(1.0) {
            return Err(Error::Config("prior covariance must be symmetric".into()));
        }
        if v.clone().cholesky().is_none() {
            return Err(Error::Singular("prior covariance is not positive definite".into()));
        }
        Ok(Self { mu, v, a, b })
    }
}

/// Conjugate update of the NIG prior after observing `y` at model matrix `z`.
pub fn nig_posterior_update(state: &NigState, z: &DMatrix<f64>, y: &DVector<f64>) -> Result<NigState> {
    let p = state.mu.len();
    if z.ncols() != p || z.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "model matrix is {}x{}, expected {}x{p}",
            z.nrows(),
            z.ncols(),
            y.len()
        )));
    }
    let v_inv = state
        .v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("prior covariance V".into()))?
        .inverse();
    let precision = z.tr_mul(z) + &v_inv;
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("posterior precision ZᵀZ + V⁻¹".into()))?;
    let v_n = chol.inverse();
    let rhs = &v_inv * &state.mu + z.tr_mul(y);
    let theta_n = &v_n * rhs;
    let n = y.len() as f64;
    let b_star = state.b + (state.mu.dot(&(&v_inv * &state.mu)) + y.dot(y)
        - theta_n.dot(&(&precision * &theta_n)));
    Ok(NigState {
        mu: theta_n,
        v: v_n,
        a: state.a + n,
        b: b_star,
    })
}
