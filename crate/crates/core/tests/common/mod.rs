#![allow(dead_code)]

use mfoc::dynamics::{confinement_radius, Trajectory};
use mfoc::model::{
    uniform_grid, BoundFunction, ControlCell, ControlField, ControlSpec, CostSpec, InitialSpec, Kernel,
    Parameterization, PhaseEnsemble, Scenario,
};

/// Cucker-Smale scenario with uniform initial data in `[-1, 1]^{2d}`.
pub fn cs_scenario(dim: usize, agents: usize, horizon: f64, steps: usize) -> Scenario {
    Scenario {
        dim,
        agents,
        horizon,
        steps,
        kernel: Kernel::CuckerSmale {
            k: 1.0,
            sigma: 1.0,
            beta: 0.5,
        },
        cost: CostSpec::l1(0.1),
        ell: BoundFunction::constant(2.0),
        initial: InitialSpec::UniformBox {
            low: -1.0,
            high: 1.0,
            seed: 7,
        },
        control: ControlSpec {
            parameterization: Parameterization::AffineVelocity,
            cells: 4,
            values: None,
        },
        confinement_radius: 1.0 + (2.0 * dim as f64).sqrt(),
    }
}

/// `a == 1` alignment with no control.
pub fn unit_alignment_scenario(dim: usize, agents: usize, horizon: f64, steps: usize) -> Scenario {
    let mut s = cs_scenario(dim, agents, horizon, steps);
    s.kernel = Kernel::unit_alignment();
    s.control = ControlSpec {
        parameterization: Parameterization::Constant,
        cells: 1,
        values: None,
    };
    s
}

/// `H == 0`, `N = 2`, `d = 1`, `v(0) = (1, -1)`, one cell of `f = a + B v`.
pub fn scalar_feedback_scenario(gamma: f64, ell: f64, steps: usize) -> Scenario {
    Scenario {
        dim: 1,
        agents: 2,
        horizon: 1.0,
        steps,
        kernel: Kernel::Zero,
        cost: CostSpec::l1(gamma),
        ell: BoundFunction::constant(ell),
        initial: InitialSpec::Explicit {
            atoms: vec![vec![0.0, 1.0], vec![0.0, -1.0]],
        },
        control: ControlSpec {
            parameterization: Parameterization::AffineVelocity,
            cells: 1,
            values: None,
        },
        confinement_radius: 2.0,
    }
}

/// `J(beta) = (1 - e^{-2 beta T}) / (2 beta) + gamma (1 - e^{-beta T})`.
pub fn scalar_feedback_cost(beta: f64, gamma: f64, horizon: f64) -> f64 {
    let tracking = if beta.abs() < 1e-12 {
        horizon
    } else {
        (1.0 - (-2.0 * beta * horizon).exp()) / (2.0 * beta)
    };
    tracking + gamma * (1.0 - (-beta * horizon).exp())
}

/// An admissible affine-in-velocity control with alternating damping.
pub fn damping_control(s: &Scenario) -> ControlField {
    let d = s.dim;
    let cells = (0..s.control.cells)
        .map(|k| {
            let gain = if k % 2 == 0 { 0.8 } else { 0.3 };
            let mut b = vec![0.0; d * d];
            for c in 0..d {
                b[c * d + c] = -gain;
            }
            let mut a = vec![0.0; d];
            a[0] = 0.2 * if k % 2 == 0 { 1.0 } else { -1.0 };
            ControlCell { a, b, d: Vec::new() }
        })
        .collect();
    let f = ControlField::new(
        d,
        uniform_grid(s.horizon, s.control.cells),
        Parameterization::AffineVelocity,
        cells,
    )
    .unwrap();
    assert!(f.is_admissible(&s.ell));
    f
}

/// Largest phase norm of `tr` and the confinement radius it must respect.
pub fn confinement(s: &Scenario, initial: &PhaseEnsemble, tr: &Trajectory) -> (f64, f64) {
    (tr.max_phase_norm(), confinement_radius(s, initial))
}
