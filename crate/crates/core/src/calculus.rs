//! Exact integrals of products of basis functions over the time interval.
//!
//! Every integrand is a piecewise polynomial whose pieces meet at the merged
//! breakpoints of the participating bases, so a Gauss-Legendre rule with
//! enough nodes on each span integrates it exactly.

use nalgebra::DMatrix;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, Rule};

/// Pairwise integrals of factor-side (rows) and parameter-side (columns) basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
}

impl GramMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row_dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn col_dim(&self) -> usize {
        self.values.ncols()
    }
}

/// `∫ c_u(t) b_v(t) dt` for every pair of factor and parameter basis functions.
pub fn cross_gram(factor: &BasisSpec, param: &BasisSpec) -> Result<GramMatrix> {
    product_gram(std::slice::from_ref(factor), param)
}

/// Integrals of the Kronecker product of several factor bases against a
/// parameter basis. The row index runs over the product with the first
/// factor's index varying slowest.
pub fn product_gram(factors: &[BasisSpec], param: &BasisSpec) -> Result<GramMatrix> {
    if factors.is_empty() {
        return Err(Error::Config("product_gram needs at least one factor basis".into()));
    }
    for f in factors {
        check_same_bounds(f, param)?;
    }
    let rows: usize = factors.iter().map(BasisSpec::dimension).product();
    let cols = param.dimension();
    let total_degree: usize = factors.iter().map(BasisSpec::degree).sum::<usize>() + param.degree();
    let rule = rule_for_degree(total_degree);

    let mut specs: Vec<&BasisSpec> = factors.iter().collect();
    specs.push(param);
    let spans = merged_breakpoints(&specs);

    let mut values = DMatrix::<f64>::zeros(rows, cols);
    let mut kron = vec![0.0; rows];
    let mut scratch = vec![0.0; rows];
    for_each_node(&spans, &rule, |t, w| {
        kron_values(factors, t, &mut kron, &mut scratch)?;
        let b = param.eval(t)?;
        for (v, bv) in b.iter().enumerate() {
            if *bv == 0.0 {
                continue;
            }
            let wb = w * bv;
            for (u, kv) in kron.iter().enumerate() {
                values[(u, v)] += wb * kv;
            }
        }
        Ok(())
    })?;
    Ok(GramMatrix { values })
}

/// Curvature penalty `∫ b_u''(t) b_v''(t) dt`; the zero matrix when degree < 2.
pub fn roughness_matrix(param: &BasisSpec) -> GramMatrix {
    let dim = param.dimension();
    let mut values = DMatrix::<f64>::zeros(dim, dim);
    if param.degree() < 2 {
        return GramMatrix { values };
    }
    let rule = rule_for_degree(2 * (param.degree() - 2));
    let spans = param.breakpoints();
    for_each_node(&spans, &rule, |t, w| {
        let d2 = param.eval_deriv(t, 2)?;
        for u in 0..dim {
            if d2[u] == 0.0 {
                continue;
            }
            for v in 0..dim {
                values[(u, v)] += w * d2[u] * d2[v];
            }
        }
        Ok(())
    })
    .expect("quadrature nodes lie inside the basis domain");
    // exact symmetry
    for u in 0..dim {
        for v in (u + 1)..dim {
            let m = 0.5 * (values[(u, v)] + values[(v, u)]);
            values[(u, v)] = m;
            values[(v, u)] = m;
        }
    }
    GramMatrix { values }
}

/// Gauss-Legendre rule exact for polynomials of the given degree.
fn rule_for_degree(degree: usize) -> Rule {
    gauss_legendre(degree.div_ceil(2) + 1)
}

fn check_same_bounds(a: &BasisSpec, b: &BasisSpec) -> Result<()> {
    if a.tbounds() != b.tbounds() {
        return Err(Error::Config(format!(
            "bases live on different time intervals: {:?} vs {:?}",
            a.tbounds(),
            b.tbounds()
        )));
    }
    Ok(())
}

fn merged_breakpoints(specs: &[&BasisSpec]) -> Vec<f64> {
    let mut all: Vec<f64> = specs.iter().flat_map(|s| s.breakpoints()).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

fn for_each_node(
    breakpoints: &[f64],
    rule: &Rule,
    mut visit: impl FnMut(f64, f64) -> Result<()>,
) -> Result<()> {
    for span in breakpoints.windows(2) {
        let (a, b) = (span[0], span[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            visit(mid + half * x, w * half)?;
        }
    }
    Ok(())
}

/// Kronecker product of the factor basis values at `t`, first factor slowest.
fn kron_values(factors: &[BasisSpec], t: f64, out: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    out[0] = 1.0;
    let mut len = 1;
    for f in factors {
        let vals = f.eval(t)?;
        scratch[..len].copy_from_slice(&out[..len]);
        let mut k = 0;
        for a in &scratch[..len] {
            for b in &vals {
                out[k] = a * b;
                k += 1;
            }
        }
        len = k;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::TimeBounds;
    use approx::assert_abs_diff_eq;

    fn unit() -> TimeBounds {
        TimeBounds::new(0.0, 1.0).unwrap()
    }

    fn assert_matrix(got: &DMatrix<f64>, want: &[&[f64]]) {
        assert_eq!(got.nrows(), want.len());
        for (i, row) in want.iter().enumerate() {
            assert_eq!(got.ncols(), row.len());
            for (j, w) in row.iter().enumerate() {
                assert_abs_diff_eq!(got[(i, j)], *w, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn cross_gram_examples() {
        let c = BasisSpec::constant(unit());
        assert_matrix(cross_gram(&c, &c).unwrap().values(), &[&[1.0]]);

        let step = BasisSpec::bspline(0, vec![0.5], unit()).unwrap();
        let lin = BasisSpec::power(1, unit());
        assert_matrix(
            cross_gram(&step, &lin).unwrap().values(),
            &[&[0.5, 0.125], &[0.5, 0.375]],
        );
        assert_matrix(
            cross_gram(&lin, &lin).unwrap().values(),
            &[&[1.0, 0.5], &[0.5, 1.0 / 3.0]],
        );
    }

    #[test]
    fn product_gram_examples() {
        let c = BasisSpec::constant(unit());
        let g = product_gram(&[c.clone(), c.clone()], &c).unwrap();
        assert_matrix(g.values(), &[&[1.0]]);

        let step = BasisSpec::bspline(0, vec![0.5], unit()).unwrap();
        let g = product_gram(&[step.clone(), step], &c).unwrap();
        assert_matrix(g.values(), &[&[0.5], &[0.0], &[0.0], &[0.5]]);

        let lin = BasisSpec::power(1, unit());
        let g = product_gram(&[lin.clone(), lin], &c).unwrap();
        assert_matrix(g.values(), &[&[1.0], &[0.5], &[0.5], &[1.0 / 3.0]]);
    }

    #[test]
    fn roughness_examples() {
        let g = roughness_matrix(&BasisSpec::power(1, unit()));
        assert_matrix(g.values(), &[&[0.0, 0.0], &[0.0, 0.0]]);
        let g = roughness_matrix(&BasisSpec::power(2, unit()));
        assert_matrix(
            g.values(),
            &[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 4.0]],
        );
        let lin_spline = BasisSpec::bspline(1, vec![0.3, 0.6], unit()).unwrap();
        assert!(roughness_matrix(&lin_spline).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn errors() {
        let a = BasisSpec::constant(unit());
        let b = BasisSpec::constant(TimeBounds::new(0.0, 2.0).unwrap());
        assert!(matches!(cross_gram(&a, &b), Err(Error::Config(_))));
        assert!(matches!(product_gram(&[], &a), Err(Error::Config(_))));
    }

    #[test]
    fn doubling_the_interval_doubles_constant_gram() {
        let c1 = BasisSpec::constant(unit());
        let c2 = BasisSpec::constant(TimeBounds::new(0.0, 2.0).unwrap());
        let g1 = cross_gram(&c1, &c1).unwrap().values()[(0, 0)];
        let g2 = cross_gram(&c2, &c2).unwrap().values()[(0, 0)];
        assert_eq!(g2, 2.0 * g1);
    }
}
