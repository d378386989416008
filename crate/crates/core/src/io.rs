//! File formats: trajectory CSV, measure JSON, study curves.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::harness::LimitStudyResult;
use crate::meanfield::MeasureTrajectory;
use crate::model::EmpiricalMeasure;

/// `t,agent,x_1..x_d,v_1..v_d,f_1..f_d`, one row per node and agent, with
/// 17 significant digits so values round-trip exactly.
pub fn trajectory_csv(tr: &Trajectory) -> String {
    let d = tr.dim();
    let mut out = String::from("t,agent");
    for prefix in ["x", "v", "f"] {
        for c in 1..=d {
            write!(out, ",{prefix}_{c}").unwrap();
        }
    }
    out.push('\n');
    for m in 0..tr.num_nodes() {
        let t = tr.times()[m];
        let controls = tr.node_controls(m);
        for (i, z) in tr.state(m).chunks_exact(2 * d).enumerate() {
            write!(out, "{t:.16e},{i}").unwrap();
            for v in z.iter().chain(&controls[i * d..(i + 1) * d]) {
                write!(out, ",{v:.16e}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_trajectory_csv(tr: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, trajectory_csv(tr))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MeasureFile {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

/// `{dim, atoms, weights}` with `dim` the atom length; weights default to uniform.
pub fn measure_to_json(mu: &EmpiricalMeasure) -> String {
    let file = MeasureFile {
        dim: mu.ambient_dim(),
        atoms: mu.atoms().map(<[f64]>::to_vec).collect(),
        weights: if mu.is_uniform() {
            None
        } else {
            Some(mu.weights().to_vec())
        },
    };
    serde_json::to_string_pretty(&file).expect("serializable")
}

pub fn measure_from_json(text: &str) -> Result<EmpiricalMeasure> {
    let file: MeasureFile = serde_json::from_str(text)?;
    if let Some(bad) = file.atoms.iter().find(|a| a.len() != file.dim) {
        return Err(Error::DimensionMismatch {
            expected: file.dim,
            found: bad.len(),
        });
    }
    match file.weights {
        None => EmpiricalMeasure::uniform(&file.atoms),
        Some(w) => EmpiricalMeasure::weighted(&file.atoms, &w),
    }
}

pub fn read_measure(path: impl AsRef<Path>) -> Result<EmpiricalMeasure> {
    measure_from_json(&fs::read_to_string(path)?)
}

pub fn write_measure(mu: &EmpiricalMeasure, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, measure_to_json(mu))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrajectoryIndex {
    times: Vec<f64>,
    files: Vec<String>,
    level: usize,
    scenario_hash: String,
    control_hash: String,
}

/// Writes `PREFIX.node{m}.json` per node and the index `PREFIX.index.json`.
pub fn export_measure_trajectory(mt: &MeasureTrajectory, prefix: &str) -> Result<PathBuf> {
    let mut files = Vec::with_capacity(mt.measures.len());
    for (m, mu) in mt.measures.iter().enumerate() {
        let path = format!("{prefix}.node{m}.json");
        write_measure(mu, &path)?;
        files.push(
            Path::new(&path)
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or(path),
        );
    }
    let index = TrajectoryIndex {
        times: mt.times.clone(),
        files,
        level: mt.level,
        scenario_hash: mt.scenario_hash.clone(),
        control_hash: mt.control_hash.clone(),
    };
    let path = PathBuf::from(format!("{prefix}.index.json"));
    fs::write(&path, serde_json::to_string_pretty(&index).expect("serializable"))?;
    Ok(path)
}

/// Reads an index written by [`export_measure_trajectory`].
pub fn import_measure_trajectory(index: impl AsRef<Path>) -> Result<MeasureTrajectory> {
    let index = index.as_ref();
    let idx: TrajectoryIndex = serde_json::from_str(&fs::read_to_string(index)?)?;
    let dir = index.parent().unwrap_or(Path::new("."));
    let measures = idx
        .files
        .iter()
        .map(|f| read_measure(dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasureTrajectory {
        times: idx.times,
        measures,
        level: idx.level,
        scenario_hash: idx.scenario_hash,
        control_hash: idx.control_hash,
    })
}

pub const CURVES_HEADER: &str = "N,seed,sup_w1,init_w1,cost";

/// One row per level and seed.
pub fn curves_csv(r: &LimitStudyResult) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    for l in &r.per_level {
        for (k, seed) in r.seeds.iter().enumerate() {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e}",
                l.level, seed, l.sup_w1[k], l.init_w1[k], l.cost[k]
            )
            .unwrap();
        }
    }
    out
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
