//! Prior distributions over the parameter vector and the expectation of
//! design objectives under them, by tensor-product Gauss quadrature or by
//! seeded Monte Carlo.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::criteria::Direction;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite_normal, gauss_legendre};

pub const DEFAULT_LEVEL: usize = 5;
pub const DEFAULT_MC_SIZE: usize = 10_000;

/// Largest tensor grid (points × dimensions) we are willing to build.
const MAX_GRID_ENTRIES: usize = 50_000_000;

/// Prior covariance in any of the accepted shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

impl Covariance {
    /// Broadcast to a dense `p × p` matrix.
    pub fn to_matrix(&self, p: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            Covariance::Scalar(s) => DMatrix::from_diagonal_element(p, p, *s),
            Covariance::Diagonal(d) => {
                check_len(d.len(), p, "prior variance vector")?;
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
            }
            Covariance::Full(m) => {
                if m.nrows() != p || m.ncols() != p {
                    return Err(Error::Config(format!(
                        "prior covariance is {}x{}, expected {p}x{p}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m.clone()
            }
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("prior covariance has non-finite entries".into()));
        }
        if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
            return Err(Error::Config("prior covariance must be symmetric".into()));
        }
        Ok(m)
    }
}

/// Named samplers drawing every entry of the sample matrix independently.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinSampler {
    /// Normal with the given mean and standard deviation.
    Rnorm { mean: f64, sd: f64 },
    /// Uniform on `[min, max]`.
    Runif { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    /// `mu` has length 1 (shared) or `P`.
    Normal { mu: Vec<f64>, sigma2: Covariance },
    /// One `(lo, hi)` pair shared by every dimension, or one per dimension.
    Uniform { bounds: Vec<(f64, f64)> },
    Sampler(BuiltinSampler),
}

impl PriorSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            PriorSpec::Normal { mu, sigma2 } => {
                broadcast(mu, p, "prior mean")?;
                let cov = sigma2.to_matrix(p)?;
                if cov.cholesky().is_none() {
                    return Err(Error::Config("prior covariance must be positive definite".into()));
                }
                Ok(())
            }
            PriorSpec::Uniform { bounds } => {
                broadcast(bounds, p, "uniform bounds")?;
                check_bounds(bounds)
            }
            PriorSpec::Sampler(BuiltinSampler::Rnorm { mean, sd }) => {
                if !(mean.is_finite() && sd.is_finite() && *sd > 0.0) {
                    return Err(Error::Config("rnorm sampler needs a finite mean and sd > 0".into()));
                }
                Ok(())
            }
            PriorSpec::Sampler(BuiltinSampler::Runif { min, max }) => check_bounds(&[(*min, *max)]),
        }
    }
}

fn check_len(got: usize, p: usize, what: &str) -> Result<()> {
    if got != p {
        return Err(Error::Config(format!("{what} has length {got}, expected 1 or {p}")));
    }
    Ok(())
}

fn broadcast<T: Clone>(values: &[T], p: usize, what: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); p]),
        n if n == p => Ok(values.to_vec()),
        n => Err(Error::Config(format!("{what} has length {n}, expected 1 or {p}"))),
    }
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "uniform prior bounds need lo < hi, got ({lo}, {hi})"
            )));
        }
    }
    Ok(())
}

/// Abscissas (one row per point) with probability weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.ncols()
    }
}

/// Tensor product of a 1-D rule (already mapped per dimension), first dimension slowest.
fn tensorize(nodes_1d: &[Vec<f64>], weights_1d: &[f64]) -> Result<QuadratureGrid> {
    let p = nodes_1d.len();
    let level = weights_1d.len();
    let total = level
        .checked_pow(p as u32)
        .filter(|b| b.saturating_mul(p.max(1)) <= MAX_GRID_ENTRIES)
        .ok_or_else(|| {
            Error::Config(format!(
                "a level-{level} tensor grid in {p} dimensions is too large; use Monte Carlo"
            ))
        })?;
    let mut nodes = DMatrix::<f64>::zeros(total, p);
    let mut weights = vec![1.0; total];
    let mut idx = vec![0usize; p];
    for b in 0..total {
        for d in 0..p {
            nodes[(b, d)] = nodes_1d[d][idx[d]];
            weights[b] *= weights_1d[idx[d]];
        }
        for d in (0..p).rev() {
            idx[d] += 1;
            if idx[d] < level {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(QuadratureGrid { nodes, weights })
}

/// Gauss-Hermite grid for `N(mu, sigma2)` in `p` dimensions with `level^p` points.
pub fn gauss_hermite_grid(level: usize, mu: &[f64], sigma2: &Covariance, p: usize) -> Result<QuadratureGrid> {
    if level == 0 {
        return Err(Error::Config("quadrature level must be at least 1".into()));
    }
    let mu = broadcast(mu, p, "prior mean")?;
    let cov = sigma2.to_matrix(p)?;
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().any(|v| *v <= 0.0) || cov.cholesky().is_none() {
        return Err(Error::Config("prior covariance must be positive definite".into()));
    }
    // symmetric square root Q Λ^{1/2} Qᵀ
    let sqrt_lambda = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let factor = &eig.eigenvectors * sqrt_lambda * eig.eigenvectors.transpose();

    let rule = gauss_hermite_normal(level);
    let standard = vec![rule.nodes.clone(); p];
    let mut grid = tensorize(&standard, &rule.weights)?;
    let transformed = &grid.nodes * factor.transpose();
    for b in 0..grid.len() {
        for d in 0..p {
            grid.nodes[(b, d)] = mu[d] + transformed[(b, d)];
        }
    }
    Ok(grid)
}

/// Gauss-Legendre grid for independent uniforms on the given bounds.
pub fn gauss_legendre_grid(level: usize, bounds: &[(f64, f64)], p: usize) -> Result<QuadratureGrid> {
    if level == 0 {
        return Err(Error::Config("quadrature level must be at least 1".into()));
    }
    let bounds = broadcast(bounds, p, "uniform bounds")?;
    check_bounds(&bounds)?;
    let rule = gauss_legendre(level);
    let weights: Vec<f64> = rule.weights.iter().map(|w| 0.5 * w).collect();
    let mapped: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            rule.nodes
                .iter()
                .map(|x| 0.5 * (lo + hi) + 0.5 * (hi - lo) * x)
                .collect()
        })
        .collect();
    tensorize(&mapped, &weights)
}

/// Quadrature grid matching the prior family.
pub fn quadrature_grid(prior: &PriorSpec, level: usize, p: usize) -> Result<QuadratureGrid> {
    match prior {
        PriorSpec::Normal { mu, sigma2 } => gauss_hermite_grid(level, mu, sigma2, p),
        PriorSpec::Uniform { bounds } => gauss_legendre_grid(level, bounds, p),
        PriorSpec::Sampler(_) => Err(Error::Config(
            "quadrature needs a normal (mu/sigma2) or uniform (unifbound) prior, not a sampler".into(),
        )),
    }
}

/// `b` independent draws (rows) from the prior, reproducible from `seed`.
pub fn mc_sample(prior: &PriorSpec, b: usize, p: usize, seed: u64) -> Result<DMatrix<f64>> {
    if b == 0 {
        return Err(Error::Config("Monte Carlo sample size must be at least 1".into()));
    }
    prior.validate(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::<f64>::zeros(b, p);
    match prior {
        PriorSpec::Normal { mu, sigma2 } => {
            let mu = broadcast(mu, p, "prior mean")?;
            let chol = sigma2
                .to_matrix(p)?
                .cholesky()
                .ok_or_else(|| Error::Config("prior covariance must be positive definite".into()))?;
            let l = chol.l();
            let mut z = vec![0.0; p];
            for row in 0..b {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                for d in 0..p {
                    let s: f64 = (0..=d).map(|k| l[(d, k)] * z[k]).sum();
                    out[(row, d)] = mu[d] + s;
                }
            }
        }
        PriorSpec::Uniform { bounds } => {
            let bounds = broadcast(bounds, p, "uniform bounds")?;
            let dists: Vec<Uniform<f64>> = bounds
                .iter()
                .map(|&(lo, hi)| Uniform::new_inclusive(lo, hi))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("uniform prior: {e}")))?;
            for row in 0..b {
                for (d, dist) in dists.iter().enumerate() {
                    out[(row, d)] = dist.sample(&mut rng);
                }
            }
        }
        PriorSpec::Sampler(BuiltinSampler::Rnorm { mean, sd }) => {
            for row in 0..b {
                for d in 0..p {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    out[(row, d)] = mean + sd * z;
                }
            }
        }
        PriorSpec::Sampler(BuiltinSampler::Runif { min, max }) => {
            let dist = Uniform::new_inclusive(*min, *max)
                .map_err(|e| Error::Config(format!("runif sampler: {e}")))?;
            for row in 0..b {
                for d in 0..p {
                    out[(row, d)] = dist.sample(&mut rng);
                }
            }
        }
    }
    Ok(out)
}

/// `Σ_b ω_b ψ(θ_b)`. A single infeasible point makes the whole expectation infeasible.
pub fn expected_objective(
    eval_at_theta: impl Fn(&[f64]) -> f64,
    points: &DMatrix<f64>,
    weights: &[f64],
    direction: Direction,
) -> f64 {
    assert_eq!(points.nrows(), weights.len(), "one weight per point");
    let mut theta = vec![0.0; points.ncols()];
    let mut total = 0.0;
    for (b, w) in weights.iter().enumerate() {
        for (d, t) in theta.iter_mut().enumerate() {
            *t = points[(b, d)];
        }
        let v = eval_at_theta(&theta);
        if v.is_nan() || direction.is_worst(v) {
            return direction.worst();
        }
        total += w * v;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn moment(grid: &QuadratureGrid, d: usize, k: i32) -> f64 {
        (0..grid.len()).map(|b| grid.weights[b] * grid.nodes[(b, d)].powi(k)).sum()
    }

    #[test]
    fn hermite_examples() {
        let g = gauss_hermite_grid(1, &[0.0], &Covariance::Scalar(1.0), 1).unwrap();
        assert_eq!(g.nodes[(0, 0)], 0.0);
        assert_eq!(g.weights, vec![1.0]);

        let g = gauss_hermite_grid(3, &[0.0], &Covariance::Scalar(1.0), 1).unwrap();
        assert_abs_diff_eq!(moment(&g, 0, 2), 1.0, epsilon = 1e-13);

        let g = gauss_hermite_grid(5, &[0.0], &Covariance::Scalar(1.0), 1).unwrap();
        assert_abs_diff_eq!(moment(&g, 0, 4), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn legendre_examples() {
        let g = gauss_legendre_grid(2, &[(-1.0, 1.0)], 1).unwrap();
        assert_abs_diff_eq!(moment(&g, 0, 2), 1.0 / 3.0, epsilon = 1e-15);
        for level in 1..6 {
            let g = gauss_legendre_grid(level, &[(3.0, 9.0)], 1).unwrap();
            assert_abs_diff_eq!(moment(&g, 0, 1), 6.0, epsilon = 1e-13);
        }
        let g = gauss_legendre_grid(1, &[(0.0, 1.0)], 1).unwrap();
        assert_eq!(g.nodes[(0, 0)], 0.5);
        assert_eq!(g.weights, vec![1.0]);
        assert!(gauss_legendre_grid(2, &[(1.0, 1.0)], 1).is_err());
    }

    #[test]
    fn tensor_sizes_and_broadcast() {
        let g = gauss_legendre_grid(5, &[(-2.0, 2.0), (3.0, 9.0), (3.0, 9.0)], 3).unwrap();
        assert_eq!(g.len(), 125);
        assert_abs_diff_eq!(g.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(moment(&g, 1, 1), 6.0, epsilon = 1e-13);
        assert!(gauss_legendre_grid(3, &[(0.0, 1.0), (0.0, 1.0)], 3).is_err());

        let g = gauss_hermite_grid(4, &[1.0, -1.0], &Covariance::Diagonal(vec![2.0, 0.5]), 2).unwrap();
        assert_eq!(g.len(), 16);
        assert_abs_diff_eq!(moment(&g, 0, 1), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(moment(&g, 1, 1), -1.0, epsilon = 1e-13);
    }

    #[test]
    fn correlated_normal_grid_reproduces_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let g = gauss_hermite_grid(3, &[0.0], &Covariance::Full(cov.clone()), 2).unwrap();
        let cross: f64 = (0..g.len()).map(|b| g.weights[b] * g.nodes[(b, 0)] * g.nodes[(b, 1)]).sum();
        assert_abs_diff_eq!(cross, 0.6, epsilon = 1e-13);
        assert_abs_diff_eq!(moment(&g, 0, 2), 2.0, epsilon = 1e-13);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(gauss_hermite_grid(3, &[0.0], &Covariance::Full(bad), 2).is_err());
    }

    #[test]
    fn mc_sampling() {
        let prior = PriorSpec::Normal {
            mu: vec![0.0],
            sigma2: Covariance::Scalar(2.0),
        };
        let s = mc_sample(&prior, 10_000, 6, 7).unwrap();
        assert_eq!(s.shape(), (10_000, 6));
        assert_eq!(s, mc_sample(&prior, 10_000, 6, 7).unwrap());
        assert_ne!(s, mc_sample(&prior, 10_000, 6, 8).unwrap());
        let bound = 4.0 * (2.0f64 / 10_000.0).sqrt();
        for d in 0..6 {
            let mean = s.column(d).mean();
            assert!(mean.abs() < bound, "column {d} mean {mean}");
        }
        let unif = PriorSpec::Uniform {
            bounds: vec![(3.0, 9.0)],
        };
        let s = mc_sample(&unif, 500, 2, 1).unwrap();
        assert!(s.iter().all(|v| (3.0..=9.0).contains(v)));
        assert!(mc_sample(&unif, 0, 2, 1).is_err());
    }

    #[test]
    fn expectation_basics() {
        let points = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let w = [0.2, 0.3, 0.5];
        assert_abs_diff_eq!(
            expected_objective(|_| 4.5, &points, &w, Direction::Maximize),
            4.5,
            epsilon = 1e-15
        );
        let single = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert_eq!(
            expected_objective(|t| t[0] * t[0], &single, &[1.0], Direction::Minimize),
            4.0
        );
        let v = expected_objective(
            |t| if t[0] > 2.5 { f64::NEG_INFINITY } else { t[0] },
            &points,
            &w,
            Direction::Maximize,
        );
        assert_eq!(v, f64::NEG_INFINITY);
    }
}
