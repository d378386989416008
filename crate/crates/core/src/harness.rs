//! Mean-field limit and Gamma-convergence studies.
//!
//! The exact mean-field solution is not available, so every study compares
//! particle discretizations at increasing levels `N` against one reference
//! level `N_ref` sampled from the same initial distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{cost_of, optimize_with, OptimizerOptions};
use crate::dynamics::simulate;
use crate::error::{Error, Result};
use crate::model::{ControlField, PhaseEnsemble, Scenario};
use crate::transport::w1_distance;

/// How the initial atoms of each level relate to the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Independent samples per level and per reference.
    Iid,
    /// The smallest level's atoms, replicated at every level and at the
    /// reference, so all initial measures coincide.
    Nested,
}

/// Independent seed for `(seed, level)` pairs.
pub fn derive_seed(seed: u64, level: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((level as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone)]
pub struct LimitOptions {
    pub reference: usize,
    pub seeds: Vec<u64>,
    pub init: InitMode,
    /// Compare every `node_stride`-th time node (the last node always).
    pub node_stride: usize,
}

/// Initial ensembles of one seed: one per level, then the reference.
fn initial_family(
    s: &Scenario,
    levels: &[usize],
    reference: usize,
    seed: u64,
    init: InitMode,
) -> Result<(Vec<PhaseEnsemble>, PhaseEnsemble)> {
    match init {
        InitMode::Iid => {
            let per_level = levels
                .iter()
                .map(|&n| s.sample_agents(n, derive_seed(seed, n)))
                .collect::<Result<Vec<_>>>()?;
            Ok((per_level, s.sample_agents(reference, derive_seed(seed, reference))?))
        }
        InitMode::Nested => {
            let base_n = levels[0];
            if levels.iter().chain([&reference]).any(|n| n % base_n != 0) {
                return Err(Error::Invalid(format!(
                    "nested initialization needs every level divisible by {base_n}"
                )));
            }
            let base = s.sample_agents(base_n, derive_seed(seed, base_n))?;
            let replicate = |n: usize| {
                let mut flat = Vec::with_capacity(base.as_flat().len() * n / base_n);
                for _ in 0..n / base_n {
                    flat.extend_from_slice(base.as_flat());
                }
                PhaseEnsemble::from_flat(s.dim, flat)
            };
            let per_level = levels.iter().map(|&n| replicate(n)).collect::<Result<Vec<_>>>()?;
            Ok((per_level, replicate(reference)?))
        }
    }
}

/// Per-seed values at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCurves {
    pub level: usize,
    pub sup_w1: Vec<f64>,
    pub init_w1: Vec<f64>,
    pub cost: Vec<f64>,
}

impl LevelCurves {
    pub fn median_sup_w1(&self) -> f64 {
        median(&self.sup_w1)
    }
    pub fn median_init_w1(&self) -> f64 {
        median(&self.init_w1)
    }
    pub fn median_cost(&self) -> f64 {
        median(&self.cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitStudyResult {
    pub levels: Vec<usize>,
    pub reference: usize,
    pub seeds: Vec<u64>,
    pub per_level: Vec<LevelCurves>,
    /// Cost of the reference discretization, per seed.
    pub reference_cost: Vec<f64>,
    /// Times at which the distances were compared.
    pub times: Vec<f64>,
}

impl LimitStudyResult {
    pub fn median_sup_w1(&self) -> Vec<f64> {
        self.per_level.iter().map(LevelCurves::median_sup_w1).collect()
    }

    /// Median over seeds of `|J_{N_{k+1}} - J_{N_k}|` for adjacent levels.
    pub fn adjacent_cost_differences(&self) -> Vec<f64> {
        self.per_level
            .windows(2)
            .map(|w| {
                let d: Vec<f64> = w[0].cost.iter().zip(&w[1].cost).map(|(a, b)| (a - b).abs()).collect();
                median(&d)
            })
            .collect()
    }

    /// Median over seeds of `|J_N - J_ref|` per level.
    pub fn reference_gaps(&self) -> Vec<f64> {
        self.per_level
            .iter()
            .map(|l| {
                let d: Vec<f64> = l
                    .cost
                    .iter()
                    .zip(&self.reference_cost)
                    .map(|(a, b)| (a - b).abs())
                    .collect();
                median(&d)
            })
            .collect()
    }
}

fn check_levels(levels: &[usize], reference: usize) -> Result<()> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) || levels[0] == 0 {
        return Err(Error::Invalid("levels must be positive and strictly increasing".into()));
    }
    if reference <= *levels.last().unwrap() {
        return Err(Error::Invalid(format!(
            "reference level {reference} must exceed every study level"
        )));
    }
    Ok(())
}

/// `sup_t W1(mu_N(t), mu_ref(t))` per level and seed under the fixed control `f`.
pub fn limit_study(s: &Scenario, levels: &[usize], f: &ControlField, opts: &LimitOptions) -> Result<LimitStudyResult> {
    check_levels(levels, opts.reference)?;
    if !f.is_admissible(&s.ell) {
        return Err(Error::Invalid("study control is not admissible".into()));
    }
    let per_seed: Vec<(Vec<(f64, f64, f64)>, f64, Vec<f64>)> = opts
        .seeds
        .par_iter()
        .map(|&seed| -> Result<_> {
            let (inits, ref_init) = initial_family(s, levels, opts.reference, seed, opts.init)?;
            let ref_traj = simulate(&s.kernel, f, &ref_init, s.steps)?;
            let nodes = ref_traj.node_indices(opts.node_stride);
            let ref_measures: Vec<_> = nodes.iter().map(|&m| ref_traj.measure(m)).collect();
            let ref_cost = crate::control::evaluate_cost(&ref_traj, s, f)?.total;
            let rows = inits
                .iter()
                .map(|init| -> Result<(f64, f64, f64)> {
                    let tr = simulate(&s.kernel, f, init, s.steps)?;
                    let mut sup: f64 = 0.0;
                    let mut first = 0.0;
                    for (k, &m) in nodes.iter().enumerate() {
                        let d = w1_distance(&tr.measure(m), &ref_measures[k])?;
                        if k == 0 {
                            first = d;
                        }
                        sup = sup.max(d);
                    }
                    let cost = crate::control::evaluate_cost(&tr, s, f)?.total;
                    Ok((sup, first, cost))
                })
                .collect::<Result<Vec<_>>>()?;
            let times = nodes.iter().map(|&m| ref_traj.times()[m]).collect();
            Ok((rows, ref_cost, times))
        })
        .collect::<Result<Vec<_>>>()?;

    let per_level = levels
        .iter()
        .enumerate()
        .map(|(l, &level)| LevelCurves {
            level,
            sup_w1: per_seed.iter().map(|r| r.0[l].0).collect(),
            init_w1: per_seed.iter().map(|r| r.0[l].1).collect(),
            cost: per_seed.iter().map(|r| r.0[l].2).collect(),
        })
        .collect();
    Ok(LimitStudyResult {
        levels: levels.to_vec(),
        reference: opts.reference,
        seeds: opts.seeds.clone(),
        per_level,
        reference_cost: per_seed.iter().map(|r| r.1).collect(),
        times: per_seed.first().map(|r| r.2.clone()).unwrap_or_default(),
    })
}

#[derive(Debug, Clone)]
pub struct GammaOptions {
    pub reference: usize,
    /// The first seed drives the optimizations; all seeds enter the
    /// fixed-control curves.
    pub seeds: Vec<u64>,
    /// Fixed admissible control for the recovery-sequence side.
    pub fixed: ControlField,
    pub optimizer: OptimizerOptions,
    /// Cross-minimality slack below which a level is re-optimized.
    pub tolerance: f64,
    pub max_refinements: usize,
    pub node_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaStudyResult {
    pub levels: Vec<usize>,
    pub reference: usize,
    pub seeds: Vec<u64>,
    /// `f*_N` per level.
    pub optimal_controls: Vec<ControlField>,
    /// `J*_N` per level.
    pub optimal_costs: Vec<f64>,
    /// `J_ref(f*_N)` per level.
    pub reference_costs: Vec<f64>,
    /// `cross[n][m] = J_{levels[m]}(f*_{levels[n]})`.
    pub cross: Vec<Vec<f64>>,
    /// Recovery side: fixed control at every level, every seed.
    pub fixed: LimitStudyResult,
}

impl GammaStudyResult {
    /// Pairs `(N, M)` with `J_M(f*_N) < J*_M - tol`.
    pub fn cross_minimality_violations(&self, tol: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (n, row) in self.cross.iter().enumerate() {
            for (m, v) in row.iter().enumerate() {
                if *v < self.optimal_costs[m] - tol {
                    out.push((self.levels[n], self.levels[m]));
                }
            }
        }
        out
    }
}

/// Optimizes every level on the first seed, cross-evaluates the optima at
/// every other level and at the reference, and runs the fixed-control
/// limit study over all seeds.
///
/// A level whose optimum is beaten by another level's optimum is
/// re-optimized from that control, up to `max_refinements` rounds.
pub fn gamma_study(s: &Scenario, levels: &[usize], opts: &GammaOptions) -> Result<GammaStudyResult> {
    check_levels(levels, opts.reference)?;
    let seed = *opts
        .seeds
        .first()
        .ok_or_else(|| Error::Invalid("gamma study needs at least one seed".into()))?;
    let (inits, ref_init) = initial_family(s, levels, opts.reference, seed, InitMode::Iid)?;

    let run = |l: usize, warm: Vec<ControlField>| {
        let o = OptimizerOptions {
            warm_starts: warm,
            ..opts.optimizer.clone()
        };
        optimize_with(s, &inits[l], &o)
    };
    let reports = (0..levels.len())
        .into_par_iter()
        .map(|l| run(l, Vec::new()))
        .collect::<Result<Vec<_>>>()?;
    let mut controls: Vec<ControlField> = reports.iter().map(|r| r.best_control.clone()).collect();
    let mut costs: Vec<f64> = reports.iter().map(|r| r.cost.total).collect();

    let cross_table = |controls: &[ControlField]| -> Result<Vec<Vec<f64>>> {
        controls
            .par_iter()
            .map(|f| {
                inits
                    .iter()
                    .map(|init| Ok(cost_of(s, init, f)?.total))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect()
    };
    let mut cross = cross_table(&controls)?;
    for _ in 0..opts.max_refinements {
        let mut changed = false;
        for m in 0..levels.len() {
            let beaten: Vec<ControlField> = (0..levels.len())
                .filter(|&n| cross[n][m] < costs[m] - opts.tolerance)
                .map(|n| controls[n].clone())
                .collect();
            if beaten.is_empty() {
                continue;
            }
            let r = run(m, beaten)?;
            if r.cost.total < costs[m] {
                controls[m] = r.best_control;
                costs[m] = r.cost.total;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        cross = cross_table(&controls)?;
    }

    let reference_costs = controls
        .par_iter()
        .map(|f| Ok(cost_of(s, &ref_init, f)?.total))
        .collect::<Result<Vec<f64>>>()?;
    let fixed = limit_study(
        s,
        levels,
        &opts.fixed,
        &LimitOptions {
            reference: opts.reference,
            seeds: opts.seeds.clone(),
            init: InitMode::Iid,
            node_stride: opts.node_stride,
        },
    )?;
    Ok(GammaStudyResult {
        levels: levels.to_vec(),
        reference: opts.reference,
        seeds: opts.seeds.clone(),
        optimal_controls: controls,
        optimal_costs: costs,
        reference_costs,
        cross,
        fixed,
    })
}
