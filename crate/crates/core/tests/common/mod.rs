//! Reference implementations used as test oracles. Nothing here calls into
//! the library's evaluation or integration code.

#![allow(dead_code)]
// Kronrod constants are kept at their published precision.
#![allow(clippy::excessive_precision)]

use nalgebra::DMatrix;
use rand::Rng;

use profile_design::basis::{BasisFamily, BasisSpec, TimeBounds};
use profile_design::formula::{expand_terms, parse_formula, FactorSpec, ParamSpec};
use profile_design::model::{Design, ModelAssembly};

/// Plain description of a basis, independent of `BasisSpec`'s internals.
#[derive(Debug, Clone)]
pub struct RefBasis {
    pub family: BasisFamily,
    pub degree: usize,
    pub knots: Vec<f64>,
    pub a: f64,
    pub b: f64,
    full: Vec<f64>,
}

impl RefBasis {
    pub fn of(spec: &BasisSpec) -> Self {
        let tb = spec.tbounds();
        let (p, knots) = (spec.degree(), spec.interior_knots().to_vec());
        let mut full = vec![tb.start; p + 1];
        full.extend(&knots);
        full.extend(vec![tb.end; p + 1]);
        Self {
            family: spec.family(),
            degree: p,
            knots,
            a: tb.start,
            b: tb.end,
            full,
        }
    }

    pub fn dim(&self) -> usize {
        match self.family {
            BasisFamily::Power => self.degree + 1,
            BasisFamily::Bspline => self.degree + self.knots.len() + 1,
        }
    }

    /// `k`-th derivative of basis function `i` at `t`.
    pub fn value(&self, i: usize, k: usize, t: f64) -> f64 {
        match self.family {
            BasisFamily::Power => {
                let e = i as i32;
                if (k as i32) > e {
                    return 0.0;
                }
                let coef: f64 = (0..k).map(|m| (e - m as i32) as f64).product();
                coef * t.powi(e - k as i32)
            }
            BasisFamily::Bspline => cox_de_boor(&self.full, i, self.degree, k, t, self.b),
        }
    }

    /// Points where the basis may lose smoothness, including both ends.
    pub fn breaks(&self) -> Vec<f64> {
        let mut v = vec![self.a];
        if self.family == BasisFamily::Bspline {
            v.extend(&self.knots);
        }
        v.push(self.b);
        v
    }
}

/// Recursive Cox-de Boor definition with derivatives by the standard
/// differentiation identity; the last non-empty span is closed on the right.
pub fn cox_de_boor(u: &[f64], i: usize, p: usize, k: usize, t: f64, right: f64) -> f64 {
    if k > 0 {
        if p == 0 {
            return 0.0;
        }
        let mut v = 0.0;
        let d1 = u[i + p] - u[i];
        if d1 > 0.0 {
            v += p as f64 / d1 * cox_de_boor(u, i, p - 1, k - 1, t, right);
        }
        let d2 = u[i + p + 1] - u[i + 1];
        if d2 > 0.0 {
            v -= p as f64 / d2 * cox_de_boor(u, i + 1, p - 1, k - 1, t, right);
        }
        return v;
    }
    if p == 0 {
        let inside = u[i] <= t && t < u[i + 1];
        let at_end = t == right && u[i] < u[i + 1] && u[i + 1] == right;
        return if inside || at_end { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = u[i + p] - u[i];
    if d1 > 0.0 {
        v += (t - u[i]) / d1 * cox_de_boor(u, i, p - 1, 0, t, right);
    }
    let d2 = u[i + p + 1] - u[i + 1];
    if d2 > 0.0 {
        v += (u[i + p + 1] - t) / d2 * cox_de_boor(u, i + 1, p - 1, 0, t, right);
    }
    v
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod estimate, Kronrod-Gauss error estimate and the integral of `|f|`.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut kabs = WGK[7] * fc.abs();
    for j in 0..7 {
        let x = h * XGK[j];
        let (l, r) = (f(c - x), f(c + x));
        k += WGK[j] * (l + r);
        kabs += WGK[j] * (l.abs() + r.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (l + r);
        }
    }
    (k * h, ((k - g) * h).abs(), kabs * h.abs())
}

/// Adaptive 15-point Gauss-Kronrod quadrature by recursive bisection.
///
/// A panel is accepted only when the panel estimate agrees with the sum
/// over its halves and each half passes its own error estimate. Either
/// check alone can pass by coincidence next to a kink or a jump. Integration
/// starts from uniform panels so that no narrowly supported integrand goes
/// unsampled. A jump between an interval end and its outermost node can
/// still be missed, so discontinuous integrands go through `adaptive_pieces`.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_panels(f, a, b, tol, 64)
}

fn adaptive_panels(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let (l, lerr, labs) = gk15(f, a, m);
        let (r, rerr, rabs) = gk15(f, m, b);
        let err = (whole - (l + r)).abs() + lerr + rerr;
        // below this the estimate is rounding noise
        let floor = 50.0 * f64::EPSILON * (labs + rabs);
        if err <= tol.max(floor) || depth == 0 {
            return l + r;
        }
        rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
    }
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = if k + 1 == panels { b } else { lo + h };
            let whole = gk15(f, lo, hi).0;
            rec(f, lo, hi, whole, tol / panels as f64, 45)
        })
        .sum()
}

/// Adaptive quadrature on each piece between consecutive `breaks`; every
/// piece carries a smooth integrand, so a few panels per piece suffice.
pub fn adaptive_pieces(f: &dyn Fn(f64) -> f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts = breaks.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| adaptive_panels(f, w[0], w[1], tol, 2)).sum()
}

fn merged_breaks(bases: &[&RefBasis]) -> Vec<f64> {
    bases.iter().flat_map(|b| b.breaks()).collect()
}

/// Oracle for `∫ Π_s c_{l_s}(t) b_r(t) dt`, rows in Kronecker order (left factor slowest).
pub fn gram_oracle(factors: &[RefBasis], param: &RefBasis) -> DMatrix<f64> {
    let dims: Vec<usize> = factors.iter().map(RefBasis::dim).collect();
    let rows: usize = dims.iter().product();
    let mut all: Vec<&RefBasis> = factors.iter().collect();
    all.push(param);
    let breaks = merged_breaks(&all);
    DMatrix::from_fn(rows, param.dim(), |row, r| {
        let mut idx = vec![0; factors.len()];
        let mut rem = row;
        for s in (0..factors.len()).rev() {
            idx[s] = rem % dims[s];
            rem /= dims[s];
        }
        let f = |t: f64| {
            let mut v = param.value(r, 0, t);
            for (s, fb) in factors.iter().enumerate() {
                v *= fb.value(idx[s], 0, t);
            }
            v
        };
        adaptive_pieces(&f, &breaks, 1e-15)
    })
}

/// Oracle for `∫ b_r''(t) b_s''(t) dt`.
pub fn roughness_oracle(param: &RefBasis) -> DMatrix<f64> {
    let n = param.dim();
    let breaks = param.breaks();
    DMatrix::from_fn(n, n, |r, s| {
        let f = |t: f64| param.value(r, 2, t) * param.value(s, 2, t);
        adaptive_pieces(&f, &breaks, 1e-15)
    })
}

/// Largest entrywise `|a - b| / max(|b|, floor)`, with `floor` a small
/// fraction of the largest reference entry so that structural zeros are
/// compared against the matrix scale rather than against zero.
pub fn max_rel_err(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    assert_eq!(got.shape(), want.shape());
    let scale = (1e-3 * want.amax()).max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want.iter())
        .map(|(g, w)| (g - w).abs() / w.abs().max(scale))
        .fold(0.0, f64::max)
}

/// Random basis on `tb` with well-separated knots.
pub fn random_basis<R: Rng>(rng: &mut R, tb: TimeBounds, allow_power: bool) -> BasisSpec {
    let power = allow_power && rng.random_bool(0.3);
    if power {
        return BasisSpec::power(rng.random_range(0..=4), tb);
    }
    let degree = rng.random_range(0..=3);
    let nk = rng.random_range(0..=4);
    let mut knots: Vec<f64> = Vec::new();
    while knots.len() < nk {
        let frac: f64 = rng.random_range(0.08..0.92);
        let t = tb.start + frac * tb.length();
        if knots.iter().all(|k| (k - t).abs() > 0.05 * tb.length()) {
            knots.push(t);
        }
    }
    knots.sort_by(f64::total_cmp);
    BasisSpec::bspline(degree, knots, tb).unwrap()
}

pub fn random_tbounds<R: Rng>(rng: &mut R) -> TimeBounds {
    let a = rng.random_range(-1.0..1.0);
    TimeBounds::new(a, a + rng.random_range(0.5..3.0)).unwrap()
}

/// Two quadratic B-spline factors with an interaction, as in the interaction fixture.
pub fn interaction_model() -> (ModelAssembly, Vec<FactorSpec>) {
    let tb = TimeBounds::new(0.0, 1.0).unwrap();
    let knots = vec![0.2, 0.4, 0.6, 0.8];
    let factors: Vec<FactorSpec> = ["x1", "x2"]
        .iter()
        .map(|n| FactorSpec {
            name: n.to_string(),
            basis: BasisSpec::bspline(2, knots.clone(), tb).unwrap(),
        })
        .collect();
    let ast = parse_formula("~ x1 + x2 + x1:x2").unwrap();
    let params: Vec<ParamSpec> = [2, 1, 2]
        .iter()
        .map(|&d| ParamSpec {
            family: BasisFamily::Bspline,
            degree: d,
            knots: vec![0.5],
        })
        .collect();
    let terms = expand_terms(&ast, &factors, &params, tb).unwrap();
    (ModelAssembly::assemble(terms, &factors).unwrap(), factors)
}

/// `x_{ij}(t)` evaluated pointwise from the coefficients.
pub fn profile_at(design: &Design, basis: &RefBasis, j: usize, i: usize, t: f64) -> f64 {
    let g = design.factor(j);
    (0..basis.dim()).map(|l| g[(i, l)] * basis.value(l, 0, t)).sum()
}

/// Model matrix of the interaction model by direct integration of
/// `∫ f_q(x_i(t)) b(t) dt`, column blocks intercept, x1, x2, x1:x2.
pub fn interaction_z_oracle(asm: &ModelAssembly, design: &Design) -> DMatrix<f64> {
    let fx: Vec<RefBasis> = asm.factors().iter().map(|f| RefBasis::of(&f.basis)).collect();
    let params: Vec<RefBasis> = asm.terms().terms().iter().map(|t| RefBasis::of(&t.param)).collect();
    let n = design.n_runs();
    let p: usize = params.iter().map(RefBasis::dim).sum();
    let mut all: Vec<&RefBasis> = fx.iter().collect();
    all.extend(params.iter());
    let breaks = merged_breaks(&all);
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut col = 0;
        for (q, pb) in params.iter().enumerate() {
            for r in 0..pb.dim() {
                let f = |t: f64| {
                    let x1 = profile_at(design, &fx[0], 0, i, t);
                    let x2 = profile_at(design, &fx[1], 1, i, t);
                    let fq = match q {
                        0 => 1.0,
                        1 => x1,
                        2 => x2,
                        _ => x1 * x2,
                    };
                    fq * pb.value(r, 0, t)
                };
                z[(i, col)] = adaptive_pieces(&f, &breaks, 1e-15);
                col += 1;
            }
        }
    }
    z
}
