//! Designs and the map from basis coefficients to the model matrix.

use nalgebra::DMatrix;

use crate::basis::BasisSpec;
use crate::calculus::{product_gram, roughness_matrix};
use crate::error::{Error, Result};
use crate::formula::{FactorSpec, TermKind, TermList};

/// One coefficient matrix per factor; row `i` holds run `i`'s basis coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    names: Vec<String>,
    coefficients: Vec<DMatrix<f64>>,
}

/// Address of a single design coordinate `Γ_factor[run, coef]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coord {
    pub factor: usize,
    pub run: usize,
    pub coef: usize,
}

impl Design {
    pub fn new(names: Vec<String>, coefficients: Vec<DMatrix<f64>>) -> Result<Self> {
        if names.len() != coefficients.len() {
            return Err(Error::Shape(format!(
                "{} factor names for {} coefficient matrices",
                names.len(),
                coefficients.len()
            )));
        }
        if let Some(first) = coefficients.first() {
            let n = first.nrows();
            if let Some((j, m)) = coefficients.iter().enumerate().find(|(_, m)| m.nrows() != n) {
                return Err(Error::Shape(format!(
                    "factor '{}' has {} runs, expected {n}",
                    names[j],
                    m.nrows()
                )));
            }
        }
        if coefficients.iter().flat_map(|m| m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design coefficients must be finite".into()));
        }
        Ok(Self {
            names,
            coefficients,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_factors(&self) -> usize {
        self.coefficients.len()
    }

    pub fn n_runs(&self) -> usize {
        self.coefficients.first().map_or(0, DMatrix::nrows)
    }

    pub fn factor(&self, j: usize) -> &DMatrix<f64> {
        &self.coefficients[j]
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.coefficients
    }

    pub fn get(&self, c: Coord) -> f64 {
        self.coefficients[c.factor][(c.run, c.coef)]
    }

    pub fn set(&mut self, c: Coord, value: f64) {
        self.coefficients[c.factor][(c.run, c.coef)] = value;
    }

    /// Every coordinate in sweep order: factors, then runs, then coefficients.
    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        self.coefficients.iter().enumerate().flat_map(|(factor, m)| {
            (0..m.nrows()).flat_map(move |run| {
                (0..m.ncols()).map(move |coef| Coord { factor, run, coef })
            })
        })
    }

    pub fn within_bounds(&self, lo: f64, hi: f64) -> bool {
        self.coefficients
            .iter()
            .flat_map(|m| m.iter())
            .all(|v| *v >= lo && *v <= hi)
    }

    /// Checks factor names and column counts against the factor bases.
    pub fn check_shape(&self, factors: &[FactorSpec], n_runs: usize) -> Result<()> {
        if self.num_factors() != factors.len() {
            return Err(Error::Shape(format!(
                "design has {} factors, model has {}",
                self.num_factors(),
                factors.len()
            )));
        }
        for (j, f) in factors.iter().enumerate() {
            if self.names[j] != f.name {
                return Err(Error::Shape(format!(
                    "design factor {} is named '{}', expected '{}'",
                    j + 1,
                    self.names[j],
                    f.name
                )));
            }
            let m = &self.coefficients[j];
            if m.nrows() != n_runs || m.ncols() != f.basis.dimension() {
                return Err(Error::Shape(format!(
                    "factor '{}' coefficients are {}x{}, expected {}x{}",
                    f.name,
                    m.nrows(),
                    m.ncols(),
                    n_runs,
                    f.basis.dimension()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct TermBlock {
    kind: TermKind,
    slots: Vec<usize>,
    /// Rows: Kronecker product of the slot bases (first slot slowest). Columns: parameter basis.
    gram: DMatrix<f64>,
    offset: usize,
}

/// Everything about the model that does not depend on the design.
#[derive(Debug, Clone)]
pub struct ModelAssembly {
    terms: TermList,
    factors: Vec<FactorSpec>,
    blocks: Vec<TermBlock>,
    roughness: DMatrix<f64>,
    num_params: usize,
}

impl ModelAssembly {
    pub fn assemble(terms: TermList, factors: &[FactorSpec]) -> Result<Self> {
        let num_params = terms.num_params();
        let mut roughness = DMatrix::<f64>::zeros(num_params, num_params);
        let mut blocks = Vec::with_capacity(terms.num_terms());
        let mut offset = 0;
        for term in terms.terms() {
            let slots = term.kind.factor_slots();
            if let Some(&bad) = slots.iter().find(|&&s| s >= factors.len()) {
                return Err(Error::Config(format!("term refers to missing factor {bad}")));
            }
            let gram = if slots.is_empty() {
                product_gram(&[BasisSpec::constant(terms.tbounds())], &term.param)?
            } else {
                let bases: Vec<BasisSpec> = slots.iter().map(|&s| factors[s].basis.clone()).collect();
                product_gram(&bases, &term.param)?
            };
            let dim = term.dimension();
            if term.kind != TermKind::Intercept {
                let r = roughness_matrix(&term.param);
                roughness
                    .view_mut((offset, offset), (dim, dim))
                    .copy_from(r.values());
            }
            blocks.push(TermBlock {
                kind: term.kind,
                slots,
                gram: gram.into_inner(),
                offset,
            });
            offset += dim;
        }
        Ok(Self {
            terms,
            factors: factors.to_vec(),
            blocks,
            roughness,
            num_params,
        })
    }

    pub fn terms(&self) -> &TermList {
        &self.terms
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    /// Block-diagonal roughness penalty `R₀`.
    pub fn roughness(&self) -> &DMatrix<f64> {
        &self.roughness
    }

    /// Cached Gram matrix of term `q`.
    pub fn term_gram(&self, q: usize) -> &DMatrix<f64> {
        &self.blocks[q].gram
    }

    /// Column range of term `q` in the model matrix.
    pub fn term_columns(&self, q: usize) -> std::ops::Range<usize> {
        let b = &self.blocks[q];
        b.offset..b.offset + b.gram.ncols()
    }

    /// Whether changing factor `j` can alter column block `q`.
    pub fn term_involves(&self, q: usize, j: usize) -> bool {
        self.blocks[q].kind.involves(j)
    }

    pub fn model_matrix(&self, design: &Design) -> Result<DMatrix<f64>> {
        design.check_shape(&self.factors, design.n_runs())?;
        let n = design.n_runs();
        let mut z = DMatrix::<f64>::zeros(n, self.num_params);
        let mut row = vec![0.0; self.num_params];
        for i in 0..n {
            self.fill_row(design, i, &mut row);
            for (c, v) in row.iter().enumerate() {
                z[(i, c)] = *v;
            }
        }
        Ok(z)
    }

    /// Model-matrix row of run `i`. The design shape must already be validated.
    pub fn fill_row(&self, design: &Design, i: usize, out: &mut [f64]) {
        let mut kron = Vec::new();
        let mut scratch = Vec::new();
        for block in &self.blocks {
            kron.clear();
            kron.push(1.0);
            for &s in &block.slots {
                let coefs = design.factor(s).row(i);
                scratch.clear();
                scratch.extend(kron.iter().flat_map(|a| coefs.iter().map(move |b| a * b)));
                std::mem::swap(&mut kron, &mut scratch);
            }
            let cols = block.gram.ncols();
            for v in 0..cols {
                let col = block.gram.column(v);
                out[block.offset + v] = kron.iter().zip(col.iter()).map(|(a, g)| a * g).sum();
            }
        }
    }

    /// Values of factor `j`'s functions for every run on `grid`.
    pub fn profile_values(&self, design: &Design, j: usize, grid: &[f64]) -> Result<DMatrix<f64>> {
        let spec = self
            .factors
            .get(j)
            .ok_or_else(|| Error::Shape(format!("no factor with index {j}")))?;
        profile_function_eval(design.factor(j), &spec.basis, grid)
    }
}

/// `x_i(t) = Γ[i, :] · c(t)` for every run and grid point (runs × grid).
pub fn profile_function_eval(
    coefficients: &DMatrix<f64>,
    basis: &BasisSpec,
    grid: &[f64],
) -> Result<DMatrix<f64>> {
    if coefficients.ncols() != basis.dimension() {
        return Err(Error::Shape(format!(
            "{} coefficient columns for a basis of dimension {}",
            coefficients.ncols(),
            basis.dimension()
        )));
    }
    let mut out = DMatrix::<f64>::zeros(coefficients.nrows(), grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let c = basis.eval(t)?;
        for i in 0..coefficients.nrows() {
            out[(i, k)] = coefficients.row(i).iter().zip(&c).map(|(g, v)| g * v).sum();
        }
    }
    Ok(out)
}

/// `n` equally spaced points from `start` to `end`, both included exactly.
pub fn uniform_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    end
                } else {
                    start + (end - start) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}
