//! Design objectives for the functional linear and generalised linear models.
//!
//! Both keep the model matrix and the information matrices of the current
//! design in a workspace. Changing one coordinate touches a single run, so a
//! probe swaps one row's rank-one contribution and refactorizes; a commit
//! rebuilds the affected matrices from scratch to avoid drift.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::criteria::{
    information_value_in, objective_glm_at_theta, objective_lm, CriterionSpec, Direction, GlmFamily,
    GlmWeight,
};
use crate::error::{Error, Result};
use crate::model::{Coord, Design, ModelAssembly};
use crate::optimizer::Objective;
use crate::priors::expected_objective;

/// Below this many prior points the expectation is evaluated on one thread.
const PAR_MIN_POINTS: usize = 256;

/// `ZᵀZ + λR₀` objective (A: trace of the inverse, D: log-determinant).
pub struct LinearObjective<'a> {
    assembly: &'a ModelAssembly,
    spec: CriterionSpec,
}

pub struct LinearWorkspace {
    design: Design,
    z: DMatrix<f64>,
    info: Vec<f64>,
    value: f64,
    row: Vec<f64>,
    trial: Vec<f64>,
    chol: Vec<f64>,
}

impl<'a> LinearObjective<'a> {
    pub fn new(assembly: &'a ModelAssembly, spec: CriterionSpec) -> Self {
        Self { assembly, spec }
    }

    /// Direct evaluation from a freshly built model matrix.
    pub fn evaluate(&self, design: &Design) -> Result<f64> {
        let z = self.assembly.model_matrix(design)?;
        objective_lm(&z, self.assembly.roughness(), &self.spec)
    }

    fn rebuild_info(&self, ws: &mut LinearWorkspace) {
        let m = ws.z.tr_mul(&ws.z) + self.assembly.roughness() * self.spec.lambda;
        ws.info.copy_from_slice(m.as_slice());
        let p = self.assembly.num_params();
        ws.value = information_value_in(&ws.info, p, self.spec.kind, &mut ws.chol);
    }
}

impl Objective for LinearObjective<'_> {
    type Workspace = LinearWorkspace;

    fn direction(&self) -> Direction {
        self.spec.direction()
    }

    fn load(&self, design: &Design) -> LinearWorkspace {
        let p = self.assembly.num_params();
        let z = self
            .assembly
            .model_matrix(design)
            .expect("design shape is validated before the search");
        let mut ws = LinearWorkspace {
            design: design.clone(),
            z,
            info: vec![0.0; p * p],
            value: 0.0,
            row: vec![0.0; p],
            trial: vec![0.0; p * p],
            chol: vec![0.0; p * p],
        };
        self.rebuild_info(&mut ws);
        ws
    }

    fn value(&self, ws: &LinearWorkspace) -> f64 {
        ws.value
    }

    fn design<'w>(&self, ws: &'w LinearWorkspace) -> &'w Design {
        &ws.design
    }

    fn probe(&self, ws: &mut LinearWorkspace, coord: Coord, value: f64) -> f64 {
        let p = self.assembly.num_params();
        let old = ws.design.get(coord);
        ws.design.set(coord, value);
        self.assembly.fill_row(&ws.design, coord.run, &mut ws.row);
        ws.design.set(coord, old);

        let i = coord.run;
        ws.trial.copy_from_slice(&ws.info);
        // lower triangle is all the factorization reads
        for c in 0..p {
            let (zc_old, zc_new) = (ws.z[(i, c)], ws.row[c]);
            for r in c..p {
                ws.trial[r + c * p] += ws.row[r] * zc_new - ws.z[(i, r)] * zc_old;
            }
        }
        information_value_in(&ws.trial, p, self.spec.kind, &mut ws.chol)
    }

    fn commit(&self, ws: &mut LinearWorkspace, coord: Coord, value: f64) -> f64 {
        ws.design.set(coord, value);
        self.assembly.fill_row(&ws.design, coord.run, &mut ws.row);
        for (c, v) in ws.row.iter().enumerate() {
            ws.z[(coord.run, c)] = *v;
        }
        self.rebuild_info(ws);
        ws.value
    }
}

/// Prior expectation of a pseudo-Bayesian A/D objective over weighted points.
pub struct GlmObjective<'a> {
    assembly: &'a ModelAssembly,
    spec: CriterionSpec,
    family: GlmFamily,
    /// One prior point per row.
    points: DMatrix<f64>,
    weights: Vec<f64>,
}

pub struct GlmWorkspace {
    design: Design,
    z: DMatrix<f64>,
    /// Linear predictors, `eta[b * n + i]` for point `b` and run `i`.
    eta: Vec<f64>,
    /// Lower triangles of the information matrices, `p²` per point.
    infos: Vec<f64>,
    values: Vec<f64>,
    value: f64,
    row: Vec<f64>,
}

impl<'a> GlmObjective<'a> {
    pub fn new(
        assembly: &'a ModelAssembly,
        spec: CriterionSpec,
        family: GlmFamily,
        points: DMatrix<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if points.ncols() != assembly.num_params() {
            return Err(Error::Shape(format!(
                "prior points have {} columns, the model has {} parameters",
                points.ncols(),
                assembly.num_params()
            )));
        }
        if points.nrows() != weights.len() || weights.is_empty() {
            return Err(Error::Shape(format!(
                "{} prior points with {} weights",
                points.nrows(),
                weights.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prior points".into()));
        }
        Ok(Self {
            assembly,
            spec,
            family,
            points,
            weights,
        })
    }

    pub fn num_points(&self) -> usize {
        self.weights.len()
    }

    /// Reference evaluation point by point through the Fisher information.
    pub fn evaluate(&self, design: &Design) -> Result<f64> {
        let z = self.assembly.model_matrix(design)?;
        let r0 = self.assembly.roughness();
        let dir = self.spec.direction();
        Ok(expected_objective(
            |theta| {
                let theta = DVector::from_column_slice(theta);
                objective_glm_at_theta(&z, &theta, &self.family, r0, &self.spec)
                    .unwrap_or(dir.worst())
            },
            &self.points,
            &self.weights,
            dir,
        ))
    }

    /// Objective values at every prior point for `design`.
    pub fn pointwise(&self, design: &Design) -> Result<Vec<f64>> {
        let z = self.assembly.model_matrix(design)?;
        let r0 = self.assembly.roughness();
        let dir = self.spec.direction();
        Ok((0..self.num_points())
            .map(|b| {
                let theta = DVector::from_iterator(self.points.ncols(), self.points.row(b).iter().copied());
                objective_glm_at_theta(&z, &theta, &self.family, r0, &self.spec)
                    .unwrap_or(dir.worst())
            })
            .collect())
    }

    fn combine(&self, values: &[f64]) -> f64 {
        let dir = self.spec.direction();
        let mut total = 0.0;
        for (v, w) in values.iter().zip(&self.weights) {
            if v.is_nan() || dir.is_worst(*v) {
                return dir.worst();
            }
            total += w * v;
        }
        total
    }

    fn rebuild_point(&self, b: usize, z: &DMatrix<f64>, eta: &mut [f64], info: &mut [f64], chol: &mut [f64]) -> f64 {
        let p = self.assembly.num_params();
        let n = z.nrows();
        let r0 = self.assembly.roughness();
        for c in 0..p {
            for r in c..p {
                info[r + c * p] = self.spec.lambda * r0[(r, c)];
            }
        }
        for i in 0..n {
            let e: f64 = (0..p).map(|c| z[(i, c)] * self.points[(b, c)]).sum();
            eta[i] = e;
            let w = self.family.weight(e);
            for c in 0..p {
                let wc = w * z[(i, c)];
                for r in c..p {
                    info[r + c * p] += z[(i, r)] * wc;
                }
            }
        }
        information_value_in(info, p, self.spec.kind, chol)
    }

    fn rebuild_all(&self, ws: &mut GlmWorkspace) {
        let p = self.assembly.num_params();
        let n = ws.z.nrows();
        let z = &ws.z;
        let jobs = ws
            .eta
            .par_chunks_mut(n.max(1))
            .zip(ws.infos.par_chunks_mut(p * p))
            .zip(ws.values.par_iter_mut())
            .enumerate()
            .with_min_len(PAR_MIN_POINTS / 4);
        jobs.for_each_init(
            || vec![0.0; p * p],
            |chol, (b, ((eta, info), value))| {
                *value = self.rebuild_point(b, z, eta, info, chol);
            },
        );
        ws.value = self.combine(&ws.values);
    }
}

impl Objective for GlmObjective<'_> {
    type Workspace = GlmWorkspace;

    fn direction(&self) -> Direction {
        self.spec.direction()
    }

    fn load(&self, design: &Design) -> GlmWorkspace {
        let p = self.assembly.num_params();
        let n = design.n_runs();
        let bcount = self.num_points();
        let z = self
            .assembly
            .model_matrix(design)
            .expect("design shape is validated before the search");
        let mut ws = GlmWorkspace {
            design: design.clone(),
            z,
            eta: vec![0.0; bcount * n.max(1)],
            infos: vec![0.0; bcount * p * p],
            values: vec![0.0; bcount],
            value: 0.0,
            row: vec![0.0; p],
        };
        self.rebuild_all(&mut ws);
        ws
    }

    fn value(&self, ws: &GlmWorkspace) -> f64 {
        ws.value
    }

    fn design<'w>(&self, ws: &'w GlmWorkspace) -> &'w Design {
        &ws.design
    }

    fn probe(&self, ws: &mut GlmWorkspace, coord: Coord, value: f64) -> f64 {
        let p = self.assembly.num_params();
        let n = ws.z.nrows();
        let i = coord.run;
        let old = ws.design.get(coord);
        ws.design.set(coord, value);
        self.assembly.fill_row(&ws.design, i, &mut ws.row);
        ws.design.set(coord, old);

        let z_old: Vec<f64> = (0..p).map(|c| ws.z[(i, c)]).collect();
        let z_new = &ws.row;
        let eta = &ws.eta;
        let infos = &ws.infos;
        let kind = self.spec.kind;
        let compute = |b: usize, scratch: &mut (Vec<f64>, Vec<f64>)| -> f64 {
            let (trial, chol) = scratch;
            let info = &infos[b * p * p..(b + 1) * p * p];
            let w_old = self.family.weight(eta[b * n + i]);
            let e_new: f64 = (0..p).map(|c| z_new[c] * self.points[(b, c)]).sum();
            let w_new = self.family.weight(e_new);
            for c in 0..p {
                let a_old = w_old * z_old[c];
                let a_new = w_new * z_new[c];
                for r in c..p {
                    let k = r + c * p;
                    trial[k] = info[k] + z_new[r] * a_new - z_old[r] * a_old;
                }
            }
            information_value_in(trial, p, kind, chol)
        };

        let bcount = self.num_points();
        if bcount < PAR_MIN_POINTS {
            let mut scratch = (vec![0.0; p * p], vec![0.0; p * p]);
            let values: Vec<f64> = (0..bcount).map(|b| compute(b, &mut scratch)).collect();
            self.combine(&values)
        } else {
            let values: Vec<f64> = (0..bcount)
                .into_par_iter()
                .with_min_len(PAR_MIN_POINTS / 4)
                .map_init(|| (vec![0.0; p * p], vec![0.0; p * p]), |s, b| compute(b, s))
                .collect();
            self.combine(&values)
        }
    }

    fn commit(&self, ws: &mut GlmWorkspace, coord: Coord, value: f64) -> f64 {
        ws.design.set(coord, value);
        self.assembly.fill_row(&ws.design, coord.run, &mut ws.row);
        for (c, v) in ws.row.iter().enumerate() {
            ws.z[(coord.run, c)] = *v;
        }
        self.rebuild_all(ws);
        ws.value
    }
}
