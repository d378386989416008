//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always shown.

mod common;

use std::cell::RefCell;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use mfoc::control::{cost_of, evaluate_cost, optimize, sparsity_report};
use mfoc::dynamics::{integrate, integrate_from, simulate};
use mfoc::harness::{gamma_study, limit_study, GammaOptions, InitMode, LimitOptions};
use mfoc::meanfield::{solve_meanfield, stability_check, weak_form_residual, Quadratic};
use mfoc::model::{
    uniform_grid, BoundFunction, ControlCell, ControlField, CostSpec, EmpiricalMeasure, Kernel, Parameterization,
    PhaseEnsemble, Scenario,
};
use mfoc::transport::w1_distance;

type Outcome = Result<String, String>;

thread_local! {
    /// `(max phase norm, confinement radius)` of every trajectory checked.
    static CONFINEMENT: RefCell<Vec<(String, f64, f64)>> = const { RefCell::new(Vec::new()) };
}

fn record(label: &str, s: &Scenario, init: &PhaseEnsemble, tr: &mfoc::dynamics::Trajectory) {
    let (norm, radius) = confinement(s, init, tr);
    CONFINEMENT.with(|c| c.borrow_mut().push((label.to_string(), norm, radius)));
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn consensus() -> Outcome {
    let s = unit_alignment_scenario(2, 8, 2.0, 2000);
    let init = s.initial_ensemble().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let tr = integrate(&s, &s.zero_control()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    record("consensus", &s, &init, &tr);
    let mean = init.mean_velocity();
    let mut err: f64 = 0.0;
    for m in 0..tr.num_nodes() {
        let decay = (-tr.times()[m]).exp();
        let e = tr.ensemble(m);
        for i in 0..8 {
            for c in 0..2 {
                let exact = mean[c] + (init.velocity(i)[c] - mean[c]) * decay;
                err = err.max((e.velocity(i)[c] - exact).abs());
            }
        }
    }
    check(
        err <= 1e-6 && elapsed < 5.0,
        format!("max error {err:.3e}, {elapsed:.2} s"),
    )
}

fn conservation() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..20u64 {
        let mut s = cs_scenario(2, 16, 2.0, 200);
        s.kernel = Kernel::CuckerSmale {
            k: rng.random_range(0.5..2.0),
            sigma: rng.random_range(0.5..2.0),
            beta: rng.random_range(0.0..1.5),
        };
        let init = s.sample_agents(16, seed).map_err(|e| e.to_string())?;
        let tr = integrate_from(&s, &s.zero_control(), &init).map_err(|e| e.to_string())?;
        record("conservation", &s, &init, &tr);
        let v0 = tr.mean_velocity(0);
        let v1 = tr.mean_velocity(tr.num_nodes() - 1);
        let drift = v0.iter().zip(&v1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = mfoc::linalg::norm(&v0).max(init.max_velocity_norm());
        worst = worst.max(drift / scale);
    }
    check(
        worst <= 1e-12,
        format!("worst relative drift {worst:.3e} over 20 seeds"),
    )
}

fn random_admissible(s: &Scenario, rng: &mut ChaCha8Rng) -> ControlField {
    let d = s.dim;
    let cells = (0..s.control.cells)
        .map(|_| ControlCell {
            a: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b: (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            d: (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    ControlField::new(
        d,
        uniform_grid(s.horizon, s.control.cells),
        Parameterization::AffinePhase,
        cells,
    )
    .unwrap()
    .project_admissible(&s.ell)
}

fn confinement_sweep() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..40u64 {
        let dim = 1 + (k as usize % 3);
        let mut s = cs_scenario(dim, 6 + (k as usize % 5), 1.0 + (k % 3) as f64, 60);
        s.kernel = match k % 3 {
            0 => Kernel::CuckerSmale {
                k: rng.random_range(0.2..3.0),
                sigma: rng.random_range(0.3..2.0),
                beta: rng.random_range(0.0..2.0),
            },
            1 => {
                let n = 2 * dim;
                Kernel::Affine {
                    matrix: (0..dim)
                        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect(),
                    offset: Vec::new(),
                }
            }
            _ => Kernel::Zero,
        };
        s.control.parameterization = Parameterization::AffinePhase;
        s.ell = BoundFunction::constant(rng.random_range(0.1..3.0));
        let f = random_admissible(&s, &mut rng);
        let init = s.sample_agents(s.agents, k).map_err(|e| e.to_string())?;
        let tr = simulate(&s.kernel, &f, &init, s.steps).map_err(|e| e.to_string())?;
        record("sweep", &s, &init, &tr);
    }
    let log = CONFINEMENT.with(|c| c.borrow().clone());
    let outside: Vec<_> = log.iter().filter(|(_, n, r)| n > r).collect();
    let tightest = log.iter().map(|(_, n, r)| n / r).fold(0.0, f64::max);
    check(
        outside.is_empty(),
        format!(
            "{} of {} trajectories inside B(0, R_T), largest |z|/R_T = {tightest:.3e}",
            log.len() - outside.len(),
            log.len()
        ),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn random_atoms(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn random_measure(rng: &mut ChaCha8Rng, dim: usize) -> EmpiricalMeasure {
    let n = rng.random_range(1..=8);
    let atoms = random_atoms(rng, n, dim);
    if rng.random_bool(0.5) {
        EmpiricalMeasure::uniform(&atoms).unwrap()
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        // renormalize the last weight so the total is 1 to rounding
        let mut w = w;
        let head: f64 = w[..n - 1].iter().sum();
        w[n - 1] = 1.0 - head;
        EmpiricalMeasure::weighted(&atoms, &w).unwrap()
    }
}

fn w1_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut brute_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=7);
        let dim = rng.random_range(1..=4);
        let a = random_atoms(&mut rng, n, dim);
        let b = random_atoms(&mut rng, n, dim);
        let best = permutations(n)
            .iter()
            .map(|p| (0..n).map(|i| mfoc::linalg::dist(&a[i], &b[p[i]])).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min);
        let d = w1_distance(
            &EmpiricalMeasure::uniform(&a).unwrap(),
            &EmpiricalMeasure::uniform(&b).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        brute_err = brute_err.max((d - best).abs());
    }
    let mut axiom_err: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(1..=4);
        let (x, y, z) = (
            random_measure(&mut rng, dim),
            random_measure(&mut rng, dim),
            random_measure(&mut rng, dim),
        );
        let d = |p: &EmpiricalMeasure, q: &EmpiricalMeasure| w1_distance(p, q).unwrap();
        axiom_err = axiom_err
            .max(d(&x, &x))
            .max((d(&x, &y) - d(&y, &x)).abs())
            .max(d(&x, &z) - d(&x, &y) - d(&y, &z))
            .max(-d(&x, &y));
    }
    let mut sorted_err: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=60);
        let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mu = EmpiricalMeasure::uniform(&a.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap();
        let nu = EmpiricalMeasure::uniform(&b.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let exact = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / n as f64;
        sorted_err = sorted_err.max((w1_distance(&mu, &nu).unwrap() - exact).abs());
    }
    check(
        brute_err <= 1e-12 && axiom_err <= 1e-10 && sorted_err <= 1e-12,
        format!("brute force {brute_err:.1e}, axioms {axiom_err:.1e}, sorted 1D {sorted_err:.1e}"),
    )
}

fn weak_form_order() -> Outcome {
    let zeta = Quadratic(vec![0.3, -0.2, 0.1, 0.4]);
    let mut residuals = Vec::new();
    for steps in [10, 20, 40, 80] {
        let s = unit_alignment_scenario(2, 8, 1.0, steps);
        let mu0 = s.initial_ensemble().map_err(|e| e.to_string())?.to_measure();
        let f = s.zero_control();
        let mt = solve_meanfield(&mu0, &s, &f).map_err(|e| e.to_string())?;
        residuals.push(
            weak_form_residual(&mt, &s, &f, &zeta, 1.0)
                .map_err(|e| e.to_string())?
                .abs(),
        );
    }
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    check(
        ratios.iter().all(|r| *r >= 3.0),
        format!("residuals {}, ratios {ratios:.2?}", sci(&residuals)),
    )
}

fn stability() -> Outcome {
    let s = cs_scenario(2, 12, 1.0, 40);
    let f = damping_control(&s);
    let mu0 = s.initial_ensemble().map_err(|e| e.to_string())?.to_measure();
    let same = stability_check(&mu0, &mu0, &s, &f).map_err(|e| e.to_string())?;
    if same.measured.iter().any(|m| *m != 0.0) {
        return Err("identical initial data gave a nonzero distance".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let eps = rng.random_range(0.01..0.2);
        let atoms: Vec<f64> = mu0
            .flat_atoms()
            .iter()
            .map(|c| c + eps * rng.random_range(-1.0..1.0))
            .collect();
        let nu0 = EmpiricalMeasure::uniform_flat(mu0.ambient_dim(), atoms).map_err(|e| e.to_string())?;
        let r = stability_check(&mu0, &nu0, &s, &f).map_err(|e| e.to_string())?;
        if !r.holds() {
            return Err(format!("bound violated: {:?} vs {:?}", r.measured, r.bound));
        }
        worst = worst.max(
            r.measured[1..]
                .iter()
                .zip(&r.bound[1..])
                .map(|(m, b)| m / b)
                .fold(0.0, f64::max),
        );
    }
    check(
        true,
        format!("20 pairs hold, largest measured/bound for t > 0 {worst:.3}; zero perturbation gives 0"),
    )
}

fn mean_field_limit() -> Outcome {
    let s = cs_scenario(2, 16, 1.0, 20);
    let f = damping_control(&s);
    let start = Instant::now();
    let r = limit_study(
        &s,
        &[16, 64, 256],
        &f,
        &LimitOptions {
            reference: 1024,
            seeds: (0..10).collect(),
            init: InitMode::Iid,
            node_stride: 4,
        },
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let med = r.median_sup_w1();
    check(
        med.windows(2).all(|w| w[1] < w[0]) && elapsed < 600.0,
        format!("median sup W1 {med:.4?} at N = 16, 64, 256; {elapsed:.1} s"),
    )
}

fn optimizer_oracle() -> Outcome {
    let ell = 2.0;
    let mut notes = Vec::new();
    for gamma in [0.5, 1.0] {
        let s = scalar_feedback_scenario(gamma, ell, 1000);
        let report = optimize(&s).map_err(|e| e.to_string())?;
        let beta = -report.best_control.cells[0].b[0];
        let grid_beta = (0..10_000)
            .map(|k| ell * k as f64 / 9_999.0)
            .min_by(|a, b| scalar_feedback_cost(*a, gamma, 1.0).total_cmp(&scalar_feedback_cost(*b, gamma, 1.0)))
            .unwrap();
        if (beta - grid_beta).abs() > 1e-3 {
            return Err(format!("gamma {gamma}: optimizer beta {beta} vs grid {grid_beta}"));
        }
        notes.push(format!("gamma {gamma}: beta {beta:.6} vs {grid_beta:.6}"));
    }

    // incumbent dominance on every optimized scenario
    let mut scenarios = vec![
        scalar_feedback_scenario(0.5, ell, 200),
        scalar_feedback_scenario(1.0, ell, 200),
        cs_scenario(2, 8, 1.0, 40),
        cs_scenario(1, 1, 1.0, 40),
    ];
    let mut heavy = cs_scenario(2, 8, 1.0, 40);
    heavy.cost = CostSpec::l1(1e3);
    scenarios.push(heavy);
    let mut smooth = cs_scenario(1, 10, 1.0, 40);
    smooth.cost.penalty = mfoc::model::Penalty::LqPower { gamma: 0.2, q: 2.0 };
    scenarios.push(smooth);
    let mut worst = f64::NEG_INFINITY;
    for s in &scenarios {
        let init = s.initial_ensemble().map_err(|e| e.to_string())?;
        let report = optimize(s).map_err(|e| e.to_string())?;
        let tr = integrate(s, &report.best_control).map_err(|e| e.to_string())?;
        record("optimizer", s, &init, &tr);
        let zero = cost_of(s, &init, &s.zero_control()).map_err(|e| e.to_string())?.total;
        worst = worst.max(report.cost.total - zero);
    }
    notes.push(format!(
        "max(J* - J(0)) = {worst:.2e} over {} scenarios",
        scenarios.len()
    ));
    check(worst <= 1e-9, notes.join("; "))
}

fn sparsity() -> Outcome {
    let mut masses = Vec::new();
    let mut last_zero = false;
    for gamma in [0.01, 0.1, 1.0, 10.0] {
        let mut s = cs_scenario(2, 8, 1.0, 40);
        s.cost = CostSpec::l1(gamma);
        let init = s.initial_ensemble().map_err(|e| e.to_string())?;
        let report = optimize(&s).map_err(|e| e.to_string())?;
        let tr = integrate(&s, &report.best_control).map_err(|e| e.to_string())?;
        record("sparsity", &s, &init, &tr);
        let cost = evaluate_cost(&tr, &s, &report.best_control).map_err(|e| e.to_string())?;
        if (cost.total - report.cost.total).abs() > 1e-12 * cost.total.max(1.0) {
            return Err("reported cost differs from re-evaluation".into());
        }
        masses.push(
            sparsity_report(&report.best_control, &tr)
                .map_err(|e| e.to_string())?
                .total_mass(),
        );
        last_zero = report.best_control.cells.iter().all(|c| c.is_zero()) && report.sparsity == 1.0;
    }
    check(
        masses.windows(2).all(|w| w[1] <= w[0] + 1e-4) && last_zero,
        format!(
            "L1 masses {} for gamma 0.01, 0.1, 1, 10; zero control at gamma 10: {last_zero}",
            sci(&masses)
        ),
    )
}

fn gamma_proxies() -> Outcome {
    let mut s = cs_scenario(1, 16, 1.0, 20);
    s.control.cells = 2;
    let fixed = damping_control(&s);
    let opts = GammaOptions {
        reference: 1024,
        seeds: (0..10).collect(),
        fixed,
        optimizer: Default::default(),
        tolerance: 1e-4,
        max_refinements: 3,
        node_stride: 20,
    };
    let r = gamma_study(&s, &[16, 64, 256], &opts).map_err(|e| e.to_string())?;
    let violations = r.cross_minimality_violations(1e-4);
    let diffs = r.fixed.adjacent_cost_differences();
    check(
        violations.is_empty() && diffs[1] < diffs[0] && r.optimal_costs.iter().all(|j| *j >= 0.0),
        format!(
            "J* {:.5?}, cross-minimality violations {violations:?}, median |J_N(g) adjacent differences| {}",
            r.optimal_costs,
            sci(&diffs)
        ),
    )
}

fn main() {
    mfoc::configure_threads();
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "closed-form consensus", consensus),
        (2, "mean-velocity conservation", conservation),
        (4, "W1 oracle equivalence", w1_oracles),
        (5, "weak-form residual order", weak_form_order),
        (6, "stability bound", stability),
        (7, "mean-field limit", mean_field_limit),
        (8, "optimizer vs 1D oracle", optimizer_oracle),
        (9, "sparsity in gamma", sparsity),
        (10, "Gamma proxies", gamma_proxies),
        // last: it audits every trajectory recorded above as well
        (3, "confinement", confinement_sweep),
    ];
    let mut lines = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(d) => format!("criterion {id:>2} PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => format!("criterion {id:>2} FAIL  {name}: {d} [{secs:.1} s]"),
        };
        eprintln!("{line}");
        lines.push((id, outcome.is_ok(), line));
    }
    lines.sort_by_key(|l| l.0);
    println!("\nacceptance summary");
    for (_, _, line) in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|l| !l.1).count();
    println!("{} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
