//! B-spline and power bases over a time interval.
//!
//! B-splines use the clamped (open-uniform) knot vector: both boundary
//! knots are repeated `degree + 1` times. Evaluation at the right boundary
//! uses the last non-empty span, so the final basis function equals 1 there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    Bspline,
    Power,
}

impl BasisFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisFamily::Bspline => "bspline",
            BasisFamily::Power => "power",
        }
    }
}

/// Closed time interval `[start, end]` over which every function lives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBounds {
    pub start: f64,
    pub end: f64,
}

impl TimeBounds {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || start >= end {
            return Err(Error::Config(format!(
                "time bounds must satisfy start < end, got ({start}, {end})"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    family: BasisFamily,
    degree: usize,
    interior_knots: Vec<f64>,
    tbounds: TimeBounds,
    /// Clamped knot vector; empty for the power family.
    extended: Vec<f64>,
}

impl BasisSpec {
    pub fn new(
        family: BasisFamily,
        degree: usize,
        interior_knots: Vec<f64>,
        tbounds: TimeBounds,
    ) -> Result<Self> {
        match family {
            BasisFamily::Bspline => Self::bspline(degree, interior_knots, tbounds),
            BasisFamily::Power => {
                if !interior_knots.is_empty() {
                    return Err(Error::Config(
                        "power basis takes no knots: the knot vector should be empty".into(),
                    ));
                }
                Ok(Self::power(degree, tbounds))
            }
        }
    }

    pub fn bspline(degree: usize, interior_knots: Vec<f64>, tbounds: TimeBounds) -> Result<Self> {
        let mut prev = tbounds.start;
        for &k in &interior_knots {
            if !k.is_finite() || k <= tbounds.start || k >= tbounds.end {
                return Err(Error::Config(format!(
                    "interior knot {k} is not strictly inside ({}, {})",
                    tbounds.start, tbounds.end
                )));
            }
            if k <= prev {
                return Err(Error::Config(format!(
                    "interior knots must be strictly increasing (repeated or unsorted knot at {k})"
                )));
            }
            prev = k;
        }
        let mut extended = Vec::with_capacity(interior_knots.len() + 2 * (degree + 1));
        extended.extend(std::iter::repeat_n(tbounds.start, degree + 1));
        extended.extend_from_slice(&interior_knots);
        extended.extend(std::iter::repeat_n(tbounds.end, degree + 1));
        Ok(Self {
            family: BasisFamily::Bspline,
            degree,
            interior_knots,
            tbounds,
            extended,
        })
    }

    pub fn power(degree: usize, tbounds: TimeBounds) -> Self {
        Self {
            family: BasisFamily::Power,
            degree,
            interior_knots: Vec::new(),
            tbounds,
            extended: Vec::new(),
        }
    }

    /// The single basis function identically equal to one.
    pub fn constant(tbounds: TimeBounds) -> Self {
        Self::power(0, tbounds)
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn tbounds(&self) -> TimeBounds {
        self.tbounds
    }

    pub fn dimension(&self) -> usize {
        match self.family {
            BasisFamily::Bspline => self.degree + self.interior_knots.len() + 1,
            BasisFamily::Power => self.degree + 1,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.dimension() == 1 && self.degree == 0
    }

    /// Span endpoints; every basis function is a polynomial between consecutive entries.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.interior_knots.len() + 2);
        out.push(self.tbounds.start);
        out.extend_from_slice(&self.interior_knots);
        out.push(self.tbounds.end);
        out
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.eval_deriv(t, 0)
    }

    /// `order`-th derivative of every basis function at `t`.
    pub fn eval_deriv(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        self.check_domain(t)?;
        let mut out = vec![0.0; self.dimension()];
        if order > self.degree {
            return Ok(out);
        }
        match self.family {
            BasisFamily::Power => {
                for (m, slot) in out.iter_mut().enumerate().skip(order) {
                    let falling: f64 = ((m - order + 1)..=m).map(|v| v as f64).product();
                    *slot = falling * t.powi((m - order) as i32);
                }
            }
            BasisFamily::Bspline => {
                let span = self.find_span(t);
                let ders = self.ders_basis_funs(span, t, order);
                let first = span - self.degree;
                for (j, v) in ders[order].iter().enumerate() {
                    out[first + j] = *v;
                }
            }
        }
        Ok(out)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if !self.tbounds.contains(t) {
            return Err(Error::Domain(format!(
                "t = {t} outside [{}, {}]",
                self.tbounds.start, self.tbounds.end
            )));
        }
        Ok(())
    }

    /// Index `i` into the clamped knot vector with `U[i] <= t < U[i+1]`,
    /// using the last non-empty span at the right boundary.
    fn find_span(&self, t: f64) -> usize {
        let p = self.degree;
        let last = self.dimension() - 1;
        if t >= self.tbounds.end {
            return last;
        }
        // interior knots are simple, so a linear scan over them is enough
        let mut span = p;
        for (k, &knot) in self.interior_knots.iter().enumerate() {
            if t >= knot {
                span = p + k + 1;
            } else {
                break;
            }
        }
        span
    }

    /// Nonzero basis functions and their derivatives up to `n` on `span`
    /// (Piegl & Tiller, algorithm A2.3). Row `k` holds the `k`-th derivative
    /// of functions `span - p ..= span`.
    fn ders_basis_funs(&self, span: usize, t: f64, n: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let u = &self.extended;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; n + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }
}
