//! Coordinate exchange over design coefficients, repeated from several starts.
//!
//! Each start draws from its own ChaCha stream derived from the search seed,
//! and results are gathered in start order, so the outcome does not depend on
//! how many workers run the starts.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::criteria::Direction;
use crate::error::{Error, Result};
use crate::formula::FactorSpec;
use crate::model::{Coord, Design};

/// Width at which the golden-section search on a single coordinate stops.
pub const LINE_SEARCH_WIDTH: f64 = 1e-6;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub nsd: usize,
    pub tol: f64,
    pub dlbound: f64,
    pub dubound: f64,
    pub max_sweeps: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            nsd: 1,
            tol: 1e-4,
            dlbound: -1.0,
            dubound: 1.0,
            max_sweeps: 200,
            seed: 0,
            workers: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dlbound.is_finite() && self.dubound.is_finite() && self.dlbound < self.dubound) {
            return Err(Error::Config(format!(
                "design bounds need dlbound < dubound, got ({}, {})",
                self.dlbound, self.dubound
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.nsd == 0 {
            return Err(Error::Config("nsd must be at least 1".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// A design objective with an incremental evaluation workspace.
///
/// `probe` must leave the workspace describing the same design it held before.
pub trait Objective: Sync {
    type Workspace: Send;

    fn direction(&self) -> Direction;

    fn load(&self, design: &Design) -> Self::Workspace;

    fn value(&self, ws: &Self::Workspace) -> f64;

    fn design<'w>(&self, ws: &'w Self::Workspace) -> &'w Design;

    /// Objective with `coord` set to `value`.
    fn probe(&self, ws: &mut Self::Workspace, coord: Coord, value: f64) -> f64;

    /// Set `coord` to `value` and return the exactly recomputed objective.
    fn commit(&self, ws: &mut Self::Workspace, coord: Coord, value: f64) -> f64;
}

/// Wraps a plain function of the whole design. Every probe re-evaluates it.
pub struct FnObjective<F> {
    f: F,
    direction: Direction,
}

impl<F> FnObjective<F>
where
    F: Fn(&Design) -> f64 + Sync,
{
    pub fn new(direction: Direction, f: F) -> Self {
        Self { f, direction }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&Design) -> f64 + Sync,
{
    type Workspace = (Design, f64);

    fn direction(&self) -> Direction {
        self.direction
    }

    fn load(&self, design: &Design) -> Self::Workspace {
        (design.clone(), (self.f)(design))
    }

    fn value(&self, ws: &Self::Workspace) -> f64 {
        ws.1
    }

    fn design<'w>(&self, ws: &'w Self::Workspace) -> &'w Design {
        &ws.0
    }

    fn probe(&self, ws: &mut Self::Workspace, coord: Coord, value: f64) -> f64 {
        let old = ws.0.get(coord);
        ws.0.set(coord, value);
        let v = (self.f)(&ws.0);
        ws.0.set(coord, old);
        v
    }

    fn commit(&self, ws: &mut Self::Workspace, coord: Coord, value: f64) -> f64 {
        ws.0.set(coord, value);
        ws.1 = (self.f)(&ws.0);
        ws.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    /// Zero-based start index.
    pub start: usize,
    pub sweep: usize,
    pub objective: f64,
}

pub type ProgressFn<'a> = dyn Fn(&Progress) + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeOutcome {
    pub design: Design,
    pub objective: f64,
    pub sweeps: usize,
    /// Objective at the start and after every accepted move.
    pub trace: Vec<f64>,
    /// Objective at the start and at the end of every sweep.
    pub sweep_values: Vec<f64>,
}

/// Uniform random coefficients on `[lo, hi]` for every factor.
pub fn random_start<R: Rng + ?Sized>(
    factors: &[FactorSpec],
    n_runs: usize,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Design {
    let names = factors.iter().map(|f| f.name.clone()).collect();
    let mats = factors
        .iter()
        .map(|f| {
            let dim = f.basis.dimension();
            let mut m = DMatrix::<f64>::zeros(n_runs, dim);
            for i in 0..n_runs {
                for l in 0..dim {
                    m[(i, l)] = rng.random_range(lo..=hi);
                }
            }
            m
        })
        .collect();
    Design::new(names, mats).expect("random start has consistent shapes")
}

/// RNG for start `index` (zero-based) of a search seeded with `seed`.
pub fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Best of the interior golden-section probes and both endpoints.
fn line_search<O: Objective>(
    objective: &O,
    ws: &mut O::Workspace,
    coord: Coord,
    lo: f64,
    hi: f64,
    incumbent: (f64, f64),
) -> (f64, f64) {
    let dir = objective.direction();
    let mut best = incumbent;
    let eval = |ws: &mut O::Workspace, x: f64, best: &mut (f64, f64)| -> f64 {
        let v = objective.probe(ws, coord, x);
        if dir.is_better(v, best.1) {
            *best = (x, v);
        }
        v
    };
    eval(ws, lo, &mut best);
    eval(ws, hi, &mut best);

    // ordering key: larger is better
    let key = |v: f64| match dir {
        Direction::Maximize => v,
        Direction::Minimize => -v,
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(ws, c, &mut best);
    let mut fd = eval(ws, d, &mut best);
    while b - a > LINE_SEARCH_WIDTH {
        if key(fc) >= key(fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(ws, c, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(ws, d, &mut best);
        }
    }
    best
}

/// Sweep every coordinate in order, moving each to the best value found by a
/// one-dimensional search, until a sweep gains less than `config.tol`.
pub fn coordinate_exchange<O: Objective>(
    objective: &O,
    start: &Design,
    config: &SearchConfig,
    start_index: usize,
    progress: Option<&ProgressFn<'_>>,
) -> Result<ExchangeOutcome> {
    let dir = objective.direction();
    let (lo, hi) = (config.dlbound, config.dubound);
    let mut ws = objective.load(start);
    let mut current = objective.value(&ws);
    let mut trace = vec![current];
    let mut sweep_values = vec![current];
    let coords: Vec<Coord> = start.coords().collect();
    let mut sweeps = 0;

    while sweeps < config.max_sweeps {
        sweeps += 1;
        let before = current;
        for &coord in &coords {
            let x0 = objective.design(&ws).get(coord);
            let (x, v) = line_search(objective, &mut ws, coord, lo, hi, (x0, current));
            if x == x0 || !dir.is_better(v, current) {
                continue;
            }
            let exact = objective.commit(&mut ws, coord, x);
            if dir.is_better(exact, current) {
                current = exact;
                trace.push(current);
            } else {
                objective.commit(&mut ws, coord, x0);
            }
        }
        sweep_values.push(current);
        if let Some(report) = progress {
            report(&Progress {
                start: start_index,
                sweep: sweeps,
                objective: current,
            });
        }
        if dir.is_worst(current) {
            return Err(Error::InfeasibleSearch { start: start_index });
        }
        if !(dir.gain(before, current) >= config.tol) {
            break;
        }
    }

    Ok(ExchangeOutcome {
        design: objective.design(&ws).clone(),
        objective: current,
        sweeps,
        trace,
        sweep_values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub design: Design,
    pub objval: f64,
    /// Sweeps used by the winning start.
    pub nits: usize,
    pub elapsed: Duration,
    /// One-based index of the winning start.
    pub bestrep: usize,
    pub allstartd: Vec<Design>,
    pub alldesigns: Vec<Design>,
    pub allobjvals: Vec<f64>,
    pub allnits: Vec<usize>,
    /// Per start: objective at the start and after each sweep.
    pub sweep_traces: Vec<Vec<f64>>,
    /// Per start: objective after each accepted move.
    pub move_traces: Vec<Vec<f64>>,
    pub direction: Direction,
}

impl SearchResult {
    /// Equality of everything except wall-clock time.
    pub fn same_outcome(&self, other: &SearchResult) -> bool {
        let mut a = self.clone();
        a.elapsed = other.elapsed;
        a == *other
    }
}

/// Run coordinate exchange from `config.nsd` starts and keep the best.
pub fn multi_start<O: Objective>(
    objective: &O,
    config: &SearchConfig,
    factors: &[FactorSpec],
    n_runs: usize,
    starts: Option<Vec<Design>>,
    progress: Option<&ProgressFn<'_>>,
) -> Result<SearchResult> {
    config.validate()?;
    let clock = Instant::now();
    let starts = match starts {
        Some(s) => {
            if s.len() != config.nsd {
                return Err(Error::Shape(format!(
                    "{} starting designs given, nsd is {}",
                    s.len(),
                    config.nsd
                )));
            }
            for d in &s {
                d.check_shape(factors, n_runs)?;
            }
            s
        }
        None => (0..config.nsd)
            .map(|s| {
                let mut rng = start_rng(config.seed, s);
                random_start(factors, n_runs, config.dlbound, config.dubound, &mut rng)
            })
            .collect(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<Result<ExchangeOutcome>> = pool.install(|| {
        starts
            .par_iter()
            .enumerate()
            .map(|(s, d)| coordinate_exchange(objective, d, config, s, progress))
            .collect()
    });

    let dir = objective.direction();
    let mut alldesigns = Vec::with_capacity(starts.len());
    let mut allobjvals = Vec::with_capacity(starts.len());
    let mut allnits = Vec::with_capacity(starts.len());
    let mut sweep_traces = Vec::with_capacity(starts.len());
    let mut move_traces = Vec::with_capacity(starts.len());
    let mut best: Option<usize> = None;
    for (s, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                if best.is_none_or(|b| dir.is_better(o.objective, allobjvals[b])) {
                    best = Some(s);
                }
                alldesigns.push(o.design);
                allobjvals.push(o.objective);
                allnits.push(o.sweeps);
                sweep_traces.push(o.sweep_values);
                move_traces.push(o.trace);
            }
            Err(Error::InfeasibleSearch { .. }) => {
                alldesigns.push(starts[s].clone());
                allobjvals.push(dir.worst());
                allnits.push(1);
                sweep_traces.push(vec![dir.worst()]);
                move_traces.push(vec![dir.worst()]);
            }
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or(Error::AllStartsInfeasible {
        count: starts.len(),
    })?;

    Ok(SearchResult {
        design: alldesigns[best].clone(),
        objval: allobjvals[best],
        nits: allnits[best],
        elapsed: clock.elapsed(),
        bestrep: best + 1,
        allstartd: starts,
        alldesigns,
        allobjvals,
        allnits,
        sweep_traces,
        move_traces,
        direction: dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisSpec, TimeBounds};

    fn factors() -> Vec<FactorSpec> {
        let t = TimeBounds::new(0.0, 1.0).unwrap();
        vec![
            FactorSpec {
                name: "x1".into(),
                basis: BasisSpec::bspline(0, vec![0.25, 0.5, 0.75], t).unwrap(),
            },
            FactorSpec {
                name: "x2".into(),
                basis: BasisSpec::bspline(0, vec![], t).unwrap(),
            },
        ]
    }

    fn all_coords(d: &Design) -> Vec<f64> {
        d.factors().iter().flat_map(|m| m.iter().copied()).collect()
    }

    #[test]
    fn random_start_shape_bounds_and_seed() {
        let f = factors();
        let d = random_start(&f, 12, -1.0, 1.0, &mut start_rng(3, 0));
        assert_eq!(d.factor(0).shape(), (12, 4));
        assert_eq!(d.factor(1).shape(), (12, 1));
        assert!(d.within_bounds(-1.0, 1.0));
        assert_eq!(d, random_start(&f, 12, -1.0, 1.0, &mut start_rng(3, 0)));
        assert_ne!(d, random_start(&f, 12, -1.0, 1.0, &mut start_rng(3, 1)));
    }

    #[test]
    fn separable_quadratic_reaches_zero() {
        let f = factors();
        let obj = FnObjective::new(Direction::Maximize, |d: &Design| {
            -all_coords(d).iter().map(|v| v * v).sum::<f64>()
        });
        let start = random_start(&f, 4, -1.0, 1.0, &mut start_rng(11, 0));
        let out = coordinate_exchange(&obj, &start, &SearchConfig::default(), 0, None).unwrap();
        assert!(all_coords(&out.design).iter().all(|v| v.abs() < 1e-4));
        assert!(out.trace.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn monotone_objective_hits_upper_bound_in_one_sweep() {
        let f = factors();
        let obj = FnObjective::new(Direction::Maximize, |d: &Design| all_coords(d).iter().sum());
        let start = random_start(&f, 3, -1.0, 1.0, &mut start_rng(5, 0));
        let out = coordinate_exchange(&obj, &start, &SearchConfig::default(), 0, None).unwrap();
        assert!(all_coords(&out.design).iter().all(|v| *v == 1.0));
        // the second sweep confirms convergence
        assert_eq!(out.sweep_values[1], out.objective);
    }

    #[test]
    fn optimal_start_stops_after_one_sweep() {
        let obj = FnObjective::new(Direction::Minimize, |d: &Design| {
            all_coords(d).iter().map(|v| (v - 1.0).abs()).sum()
        });
        let start = Design::new(
            vec!["x1".into(), "x2".into()],
            vec![DMatrix::from_element(2, 4, 1.0), DMatrix::from_element(2, 1, 1.0)],
        )
        .unwrap();
        let out = coordinate_exchange(&obj, &start, &SearchConfig::default(), 0, None).unwrap();
        assert_eq!(out.sweeps, 1);
        assert_eq!(out.design, start);
    }

    #[test]
    fn infeasible_everywhere_is_an_error() {
        let f = factors();
        let obj = FnObjective::new(Direction::Maximize, |_: &Design| f64::NEG_INFINITY);
        let start = random_start(&f, 2, -1.0, 1.0, &mut start_rng(0, 0));
        let err = coordinate_exchange(&obj, &start, &SearchConfig::default(), 4, None).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSearch { start: 4 }));

        let cfg = SearchConfig {
            nsd: 3,
            ..SearchConfig::default()
        };
        let err = multi_start(&obj, &cfg, &f, 2, None, None).unwrap_err();
        assert!(matches!(err, Error::AllStartsInfeasible { count: 3 }));
    }

    #[test]
    fn sentinel_start_escapes() {
        let f = factors();
        // infeasible unless the first coordinate is positive
        let obj = FnObjective::new(Direction::Maximize, |d: &Design| {
            let v = d.factor(0)[(0, 0)];
            if v > 0.0 {
                v
            } else {
                f64::NEG_INFINITY
            }
        });
        let mut start = random_start(&f, 1, -1.0, 1.0, &mut start_rng(0, 0));
        start.set(Coord { factor: 0, run: 0, coef: 0 }, -0.5);
        let out = coordinate_exchange(&obj, &start, &SearchConfig::default(), 0, None).unwrap();
        assert_eq!(out.objective, 1.0);
    }

    #[test]
    fn multi_start_selection_and_validation() {
        let f = factors();
        let obj = FnObjective::new(Direction::Maximize, |d: &Design| {
            -all_coords(d).iter().map(|v| (v - 0.3).powi(2)).sum::<f64>()
        });
        let cfg = SearchConfig {
            nsd: 1,
            ..SearchConfig::default()
        };
        let r = multi_start(&obj, &cfg, &f, 2, None, None).unwrap();
        assert_eq!(r.bestrep, 1);
        assert_eq!(r.allobjvals.len(), 1);

        let wrong = Design::new(
            vec!["x1".into(), "x2".into()],
            vec![DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)],
        )
        .unwrap();
        let err = multi_start(&obj, &cfg, &f, 2, Some(vec![wrong]), None).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        let err = multi_start(&obj, &cfg, &f, 2, Some(vec![]), None).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let f = factors();
        let obj = FnObjective::new(Direction::Minimize, |_: &Design| 1.0);
        let cfg = SearchConfig {
            nsd: 4,
            workers: 2,
            ..SearchConfig::default()
        };
        let r = multi_start(&obj, &cfg, &f, 2, None, None).unwrap();
        assert_eq!(r.bestrep, 1);
    }

    #[test]
    fn config_validation() {
        let bad = SearchConfig {
            dlbound: 1.0,
            dubound: -1.0,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SearchConfig {
            tol: 0.0,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SearchConfig {
            nsd: 0,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
