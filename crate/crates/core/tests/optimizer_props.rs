mod common;

use common::interaction_model;
use proptest::prelude::*;

use profile_design::basis::{BasisSpec, TimeBounds};
use profile_design::criteria::{CriterionKind, CriterionSpec, Direction};
use profile_design::formula::FactorSpec;
use profile_design::model::Design;
use profile_design::objective::LinearObjective;
use profile_design::optimizer::{coordinate_exchange, multi_start, start_rng, random_start, FnObjective, SearchConfig};

fn linear_factors(dim: usize) -> Vec<FactorSpec> {
    let tb = TimeBounds::new(0.0, 1.0).unwrap();
    vec![FactorSpec {
        name: "x".into(),
        basis: BasisSpec::power(dim - 1, tb),
    }]
}

/// Separable quadratic with its minimum at `c` inside the box.
fn quadratic(c: f64) -> FnObjective<impl Fn(&Design) -> f64 + Sync> {
    FnObjective::new(Direction::Minimize, move |d: &Design| {
        d.factor(0).iter().map(|v| (v - c).powi(2)).sum()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_minimum_is_found(c in -0.9f64..0.9, seed in any::<u64>()) {
        let factors = linear_factors(3);
        let config = SearchConfig { nsd: 2, seed, tol: 1e-12, ..Default::default() };
        let r = multi_start(&quadratic(c), &config, &factors, 4, None, None).unwrap();
        prop_assert!(r.objval <= 1e-4, "objective {}", r.objval);
        prop_assert!(r.design.factor(0).iter().all(|v| (v - c).abs() <= 1e-2));
    }

    #[test]
    fn traces_improve_and_designs_stay_in_bounds(seed in any::<u64>(), lo in -2.0f64..-0.1, hi in 0.1f64..2.0) {
        let (asm, factors) = interaction_model();
        let spec = CriterionSpec::new(CriterionKind::A, 0.5).unwrap();
        let objective = LinearObjective::new(&asm, spec);
        let config = SearchConfig { nsd: 1, seed, dlbound: lo, dubound: hi, max_sweeps: 4, ..Default::default() };
        let start = random_start(&factors, 14, lo, hi, &mut start_rng(seed, 0));
        let out = coordinate_exchange(&objective, &start, &config, 0, None).unwrap();
        prop_assert!(out.design.within_bounds(lo, hi));
        prop_assert!(out.trace.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(out.sweep_values.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(out.sweep_values.len(), out.sweeps + 1);
        prop_assert_eq!(*out.sweep_values.last().unwrap(), out.objective);
        prop_assert!((objective.evaluate(&out.design).unwrap() - out.objective).abs() <= 1e-10 * out.objective);
    }
}

#[test]
fn worker_count_does_not_change_the_result() {
    let (asm, factors) = interaction_model();
    let spec = CriterionSpec::new(CriterionKind::D, 0.1).unwrap();
    let objective = LinearObjective::new(&asm, spec);
    let mut config = SearchConfig {
        nsd: 6,
        seed: 17,
        max_sweeps: 3,
        ..Default::default()
    };
    let one = multi_start(&objective, &config, &factors, 14, None, None).unwrap();
    config.workers = 8;
    let eight = multi_start(&objective, &config, &factors, 14, None, None).unwrap();
    assert!(one.same_outcome(&eight));
}

#[test]
fn best_start_is_reported() {
    let (asm, factors) = interaction_model();
    let spec = CriterionSpec::new(CriterionKind::A, 0.2).unwrap();
    let objective = LinearObjective::new(&asm, spec);
    let config = SearchConfig {
        nsd: 5,
        seed: 3,
        max_sweeps: 2,
        ..Default::default()
    };
    let r = multi_start(&objective, &config, &factors, 14, None, None).unwrap();
    let best = r.allobjvals.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(r.objval, best);
    assert_eq!(r.allobjvals[r.bestrep - 1], best);
    assert_eq!(r.design, r.alldesigns[r.bestrep - 1]);
    assert_eq!(r.nits, r.allnits[r.bestrep - 1]);
    for (s, d) in r.allstartd.iter().enumerate() {
        assert_eq!(*d, random_start(&factors, 14, -1.0, 1.0, &mut start_rng(3, s)));
    }
}

#[test]
fn supplied_starts_must_match_nsd() {
    let factors = linear_factors(2);
    let config = SearchConfig {
        nsd: 2,
        ..Default::default()
    };
    let start = random_start(&factors, 3, -1.0, 1.0, &mut start_rng(0, 0));
    assert!(multi_start(&quadratic(0.0), &config, &factors, 3, Some(vec![start]), None).is_err());
}

#[test]
fn invalid_settings_are_rejected() {
    let bad = [
        SearchConfig { dlbound: 1.0, dubound: 1.0, ..Default::default() },
        SearchConfig { tol: 0.0, ..Default::default() },
        SearchConfig { nsd: 0, ..Default::default() },
        SearchConfig { workers: 0, ..Default::default() },
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
}
