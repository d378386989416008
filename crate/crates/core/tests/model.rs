mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::cs_scenario;
use mfoc::linalg::{dist, norm};
use mfoc::model::{
    sample_initial, uniform_grid, validate_scenario, BoundFunction, ControlCell, ControlField, CostSpec, InitialSpec,
    Kernel, Parameterization, Penalty, Scenario,
};
use mfoc::Error;

#[test]
fn well_formed_scenario_validates() {
    assert!(validate_scenario(&cs_scenario(2, 8, 1.0, 40)).is_empty());
}

#[test]
fn negative_weight_is_one_violation() {
    let mut s = cs_scenario(2, 8, 1.0, 40);
    s.cost = CostSpec::l1(-1.0);
    assert_eq!(validate_scenario(&s), vec!["ψ nonnegativity".to_string()]);
}

#[test]
fn doubled_control_is_one_violation() {
    let mut s = cs_scenario(1, 4, 1.0, 40);
    s.control.parameterization = Parameterization::Constant;
    let mut cells = vec![
        ControlCell {
            a: vec![0.5],
            ..Default::default()
        };
        4
    ];
    cells[2].a = vec![4.0];
    s.control.values = Some(cells);
    assert_eq!(validate_scenario(&s), vec!["admissibility cell 2".to_string()]);
}

#[test]
fn violations_come_in_a_fixed_order() {
    let mut s = cs_scenario(2, 8, 1.0, 40);
    s.steps = 41;
    s.cost = CostSpec::l1(-1.0);
    let v = validate_scenario(&s);
    assert_eq!(v.len(), 2, "{v:?}");
    assert!(v[0].starts_with("steps 41"));
    assert_eq!(v[1], "ψ nonnegativity");
    assert_eq!(validate_scenario(&s), v);
}

#[test]
fn scenario_file_round_trip() {
    let text = r#"{
        "dim": 1, "agents": 2, "horizon": 1.5, "steps": 30,
        "kernel": {"type": "cucker_smale", "k": 1.0, "sigma": 1.0, "beta": 0.5},
        "cost": {"tracking": "velocity_variance", "penalty": {"type": "l1", "gamma": 0.1}},
        "ell": {"values": [1.0, 2.0]},
        "initial": {"type": "explicit", "atoms": [[0.0, 1.0], [2.0, -1.0]]},
        "control": {"parameterization": "affine_velocity", "cells": 3,
                    "values": [{"a": [0.1], "B": [[-0.2]]}, {"a": [0.0], "B": [[0.0]]}, {"a": [0.3]}]},
        "confinement_radius": 3.0
    }"#;
    let s = Scenario::from_json(text).unwrap();
    assert!(validate_scenario(&s).is_empty(), "{:?}", validate_scenario(&s));
    let back = Scenario::from_json(&s.to_json()).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.digest(), s.digest());
    let f = s.control_field().unwrap();
    assert_eq!(f.cells[0].b, vec![-0.2]);
    assert_eq!(f.cells[2].b, vec![0.0]);
    let keys: Vec<String> = serde_json::from_str::<serde_json::Value>(&s.to_json())
        .unwrap()
        .as_object()
        .unwrap()
        .keys()
        .cloned()
        .collect();
    for k in [
        "dim",
        "agents",
        "horizon",
        "steps",
        "kernel",
        "cost",
        "ell",
        "initial",
        "control",
        "confinement_radius",
    ] {
        assert!(keys.contains(&k.to_string()), "missing {k}");
    }
}

#[test]
fn explicit_atoms_pass_through() {
    let spec = InitialSpec::Explicit {
        atoms: vec![vec![0.0, 1.0], vec![2.0, -1.0]],
    };
    let e = sample_initial(&spec, 1, 2, 5.0, 99).unwrap();
    assert_eq!(e.as_flat(), &[0.0, 1.0, 2.0, -1.0]);
}

#[test]
fn seeded_sampling_is_deterministic_and_confined() {
    let spec = InitialSpec::UniformBox {
        low: -1.0,
        high: 1.0,
        seed: 7,
    };
    let a = sample_initial(&spec, 2, 16, 2.5, 7).unwrap();
    let b = sample_initial(&spec, 2, 16, 2.5, 7).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_initial(&spec, 2, 16, 2.5, 8).unwrap());
    for i in 0..16 {
        assert!(norm(a.atom(i)) <= 1.5);
    }
}

#[test]
fn degenerate_truncation_fails() {
    let spec = InitialSpec::TruncatedGaussian {
        mean: vec![100.0, 0.0],
        std: 0.1,
        seed: 1,
    };
    assert!(matches!(
        sample_initial(&spec, 1, 4, 1.0, 1),
        Err(Error::Sampling { .. })
    ));
}

#[test]
fn truncated_gaussian_mean_matches_monte_carlo() {
    let mean = vec![3.0, 0.0, -1.0, 0.5];
    let spec = InitialSpec::TruncatedGaussian {
        mean: mean.clone(),
        std: 2.0,
        seed: 11,
    };
    let e = sample_initial(&spec, 2, 10_000, 5.0, 11).unwrap();
    let mut sampled = vec![0.0; 4];
    for i in 0..e.count() {
        for c in 0..4 {
            sampled[c] += e.atom(i)[c] / e.count() as f64;
        }
    }
    // independent oracle: 10^6 accepted draws of the same truncation
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    let mut oracle = vec![0.0; 4];
    let mut accepted = 0usize;
    while accepted < 1_000_000 {
        let z: Vec<f64> = mean
            .iter()
            .map(|m| m + 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if norm(&z) <= 5.0 {
            for c in 0..4 {
                oracle[c] += z[c];
            }
            accepted += 1;
        }
    }
    for c in 0..4 {
        oracle[c] /= accepted as f64;
        assert!(
            (sampled[c] - oracle[c]).abs() < 0.05,
            "coord {c}: {} vs {}",
            sampled[c],
            oracle[c]
        );
    }
    // truncation pulls the mean towards the origin
    assert!(oracle[0] < 2.9);
}

#[test]
fn cucker_smale_growth_on_grid() {
    let k = Kernel::CuckerSmale {
        k: 2.0,
        sigma: 0.7,
        beta: 1.3,
    };
    let c = k.growth_constant();
    assert!((c - 2.0 / 0.49f64.powf(1.3)).abs() < 1e-12);
    for grid in mfoc::transport::ball_grid(4, 6.0, 9) {
        assert!(norm(&k.eval(&grid)) <= c * (1.0 + norm(&grid)) * (1.0 + 1e-12));
    }
}

#[test]
fn kernel_lipschitz_bound_dominates_secants() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in [
        Kernel::CuckerSmale {
            k: 1.0,
            sigma: 1.0,
            beta: 0.5,
        },
        Kernel::CuckerSmale {
            k: 3.0,
            sigma: 0.4,
            beta: 2.0,
        },
        Kernel::Affine {
            matrix: vec![vec![1.0, -2.0, 0.5, 0.0], vec![0.0, 1.0, 1.0, 3.0]],
            offset: vec![1.0, 0.0],
        },
    ] {
        for radius in [0.5, 2.0, 5.0] {
            let sampled = k.sampled_lipschitz(2, radius, 2000, &mut rng);
            assert!(sampled <= k.lipschitz_bound(radius) * (1.0 + 1e-9), "{k:?} at {radius}");
        }
    }
}

#[test]
fn penalty_checks_pass_for_valid_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for cost in [
        CostSpec::l1(0.3),
        CostSpec {
            penalty: Penalty::LqPower { gamma: 0.5, q: 2.0 },
            ..CostSpec::l1(0.0)
        },
        CostSpec {
            penalty: Penalty::LqPower { gamma: 1.0, q: 1.5 },
            ..CostSpec::l1(0.0)
        },
    ] {
        assert!(cost.violations(3, &mut rng).is_empty(), "{cost:?}");
    }
    let concave = CostSpec {
        penalty: Penalty::LqPower { gamma: 1.0, q: 0.5 },
        ..CostSpec::l1(0.0)
    };
    assert!(!concave.violations(3, &mut rng).is_empty());
}

fn affine_phase(dim: usize, cells: usize, coeffs: &[f64]) -> ControlField {
    let per = dim + 2 * dim * dim;
    let cells = coeffs
        .chunks(per)
        .take(cells)
        .map(|c| ControlCell {
            a: c[..dim].to_vec(),
            b: c[dim..dim + dim * dim].to_vec(),
            d: c[dim + dim * dim..].to_vec(),
        })
        .collect();
    ControlField::new(dim, uniform_grid(1.0, 3), Parameterization::AffinePhase, cells).unwrap()
}

proptest! {
    #[test]
    fn projection_is_exact_on_violated_cells(
        coeffs in prop::collection::vec(-3.0f64..3.0, 30),
        bounds in prop::collection::vec(0.1f64..2.0, 3),
    ) {
        let f = affine_phase(2, 3, &coeffs);
        let ell = BoundFunction { values: bounds.clone(), exponent: 1.0 };
        let p = f.project_admissible(&ell);
        prop_assert!(p.is_admissible(&ell));
        for k in 0..3 {
            let before = f.cells[k].mass();
            let after = p.cells[k].mass();
            if before > bounds[k] {
                prop_assert!((after - bounds[k]).abs() <= 1e-12 * bounds[k]);
            } else {
                prop_assert_eq!(&p.cells[k], &f.cells[k]);
            }
        }
        prop_assert_eq!(p.project_admissible(&ell), p);
    }

    #[test]
    fn evaluation_is_lipschitz_per_cell(
        coeffs in prop::collection::vec(-2.0f64..2.0, 30),
        z1 in prop::collection::vec(-5.0f64..5.0, 4),
        z2 in prop::collection::vec(-5.0f64..5.0, 4),
        t in 0.0f64..1.0,
    ) {
        let f = affine_phase(2, 3, &coeffs);
        let cell = &f.cells[f.cell_index(t)];
        let gap = dist(&z1, &z2);
        prop_assume!(gap > 1e-9);
        let slope = dist(&f.eval(t, &z1), &f.eval(t, &z2)) / gap;
        prop_assert!(slope <= cell.lipschitz() * (1.0 + 1e-9) + 1e-12);
    }
}
