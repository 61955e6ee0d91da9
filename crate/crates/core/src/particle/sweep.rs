use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::oracle::{ct_exact_flow, flow_discrete, mesh_trajectory, FkModel, MeshSchedule};
use crate::parallel::{map_indexed, Execution};
use crate::rng::derive_seed;
use crate::selection::SelectionCase;
use crate::stats::{mean, sample_variance, variance_standard_error};

use super::engine::{finite_observer, run, RunConfig};
use super::model::{FiniteParticleModel, MutationMethod};

/// Which exact flow the bias is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// `μ^{(m)}_{t}`, the flow the particle system approximates at fixed `m`.
    #[default]
    Mesh,
    /// `η_n` (discrete time) or `μ_t` (continuous time).
    Limit,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub case: SelectionCase,
    /// `(N, m)` cells.
    pub grid: Vec<(usize, u32)>,
    pub replications: usize,
    pub seed: u64,
    pub reference: ReferenceKind,
    /// Model time at which `μ^N(f)` is recorded; must lie on every mesh.
    pub time: f64,
    pub functions: Vec<Vec<f64>>,
    pub method: MutationMethod,
    pub execution: Execution,
}

/// One `(cell, f)` row of the sweep CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: u32,
    pub step: u64,
    pub f_id: usize,
    pub mean: f64,
    pub var: f64,
    pub exact: f64,
    pub bias: f64,
    pub se: f64,
    pub seed: u64,
    pub wall_ms: u64,
    #[serde(skip)]
    pub var_se: f64,
    #[serde(skip)]
    pub replications: usize,
}

/// Exact `f`-values of the requested reference at `time` on mesh `m`.
pub fn reference_values(
    model: &FkModel,
    mesh: MeshSchedule,
    time: f64,
    reference: ReferenceKind,
    functions: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let law = match (reference, model) {
        (ReferenceKind::Mesh, _) => {
            let meshed = crate::oracle::MeshedModel::new(model, mesh)?;
            let k = mesh.index_of_time(time)?;
            mesh_trajectory(&meshed, k)?.measures.pop().expect("nonempty")
        }
        (ReferenceKind::Limit, FkModel::Discrete(d)) => {
            let n = time.round();
            if (n - time).abs() > 1e-12 {
                return Err(FkError::TimeOutOfRange {
                    time,
                    horizon: d.horizon() as f64,
                });
            }
            flow_discrete(d, n as u64)?.1
        }
        (ReferenceKind::Limit, FkModel::Ctmc(c)) => ct_exact_flow(c, time)?.1,
    };
    Ok(functions.iter().map(|f| law.expectation(f)).collect())
}

/// `R` seeded runs per `(N, m)` cell; replications run through `execution`,
/// each run itself sequential.
pub fn bias_variance_sweep(model: &FkModel, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.grid.is_empty() {
        return Err(FkError::Config("sweep grid is empty".into()));
    }
    if spec.replications == 0 {
        return Err(FkError::Config("replications must be at least 1".into()));
    }
    let d = model.state_count();
    if let Some(f) = spec.functions.iter().find(|f| f.len() != d) {
        return Err(FkError::DimensionMismatch {
            expected: d,
            found: f.len(),
        });
    }
    let mut rows = Vec::new();
    for &(n, m) in &spec.grid {
        let started = Instant::now();
        let mesh = MeshSchedule::new(m)?;
        let particle_model = FiniteParticleModel::new(model, mesh, spec.method)?;
        for p in particle_model.meshed().distinct_potentials() {
            spec.case.check_potential(p)?;
        }
        let step = mesh.index_of_time(spec.time)?;
        let exact = reference_values(model, mesh, spec.time, spec.reference, &spec.functions)?;
        let runs: Vec<Result<Vec<f64>>> = map_indexed(spec.execution, spec.replications, |r| {
            let cfg = RunConfig::new(spec.case, n, derive_seed(spec.seed, &[n as u64, m as u64, r as u64]))
                .record_at(vec![step])
                .horizon(step);
            let est = run(&particle_model, &cfg, finite_observer(d, spec.functions.clone()))?;
            Ok(est.f_values.into_iter().next().expect("one record"))
        });
        let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;
        let wall_ms = started.elapsed().as_millis() as u64;
        for (f_id, &ex) in exact.iter().enumerate() {
            let xs: Vec<f64> = runs.iter().map(|r| r[f_id]).collect();
            let mu = mean(&xs);
            let var = sample_variance(&xs);
            rows.push(SweepRow {
                n,
                m,
                step,
                f_id,
                mean: mu,
                var,
                exact: ex,
                bias: mu - ex,
                se: (var / xs.len() as f64).sqrt(),
                seed: spec.seed,
                wall_ms,
                var_se: variance_standard_error(&xs),
                replications: xs.len(),
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "N,m,step,f_id,mean,var,exact,bias,se,seed,wall_ms";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(SWEEP_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_matches_contract() {
        let row = SweepRow {
            n: 10,
            m: 2,
            step: 4,
            f_id: 0,
            mean: 0.5,
            var: 0.1,
            exact: 0.5,
            bias: 0.0,
            se: 0.01,
            seed: 7,
            wall_ms: 3,
            var_se: 0.0,
            replications: 2,
        };
        let mut buf = Vec::new();
        write_sweep_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER);
    }
}
