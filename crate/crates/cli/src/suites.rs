//! `sweep` and the convergence-rate suites it can assert.

use std::collections::BTreeMap;

use fkjump::ctsim::geometric_vs_exponential_gap;
use fkjump::measures::tv_distance;
use fkjump::oracle::{ct_exact_flow, mesh_trajectory, uniform_recycling_trajectory, FkModel, MeshSchedule, MeshedModel};
use fkjump::parallel::Execution;
use fkjump::particle::{bias_variance_sweep, write_sweep_csv, SweepRow, SweepSpec};
use fkjump::rng::derive_seed;
use fkjump::stats::{fit_slope, SlopeFit};

use crate::commands::{functions, particle_model, write_table};
use crate::config::{ExperimentConfig, Pairing};
use crate::{CliError, Context};

pub const DETERMINISTIC_TOL: f64 = 0.15;
pub const STOCHASTIC_TOL: f64 = 0.2;
pub const GAP_TOL: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Suite {
    VarianceVsN,
    BiasVsM,
    BiasVsMDeterministic,
    RecyclingGap,
    GeoVsExp,
}

impl Suite {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "variance-vs-n" => Ok(Suite::VarianceVsN),
            "bias-vs-m" => Ok(Suite::BiasVsM),
            "bias-vs-m-deterministic" => Ok(Suite::BiasVsMDeterministic),
            "recycling-gap" => Ok(Suite::RecyclingGap),
            "geo-vs-exp" => Ok(Suite::GeoVsExp),
            other => Err(CliError::Config(format!(
                "unknown suite \"{other}\" (expected variance-vs-n, bias-vs-m, bias-vs-m-deterministic, recycling-gap or geo-vs-exp)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Suite::VarianceVsN => "variance-vs-n",
            Suite::BiasVsM => "bias-vs-m",
            Suite::BiasVsMDeterministic => "bias-vs-m-deterministic",
            Suite::RecyclingGap => "recycling-gap",
            Suite::GeoVsExp => "geo-vs-exp",
        }
    }

    fn default_tol(self) -> f64 {
        match self {
            Suite::BiasVsMDeterministic | Suite::RecyclingGap => DETERMINISTIC_TOL,
            Suite::VarianceVsN | Suite::BiasVsM => STOCHASTIC_TOL,
            Suite::GeoVsExp => GAP_TOL,
        }
    }
}

/// One slope assertion over a labelled series.
struct Assertion {
    label: String,
    fit: Result<SlopeFit, fkjump::FkError>,
    target: f64,
    tol: f64,
}

impl Assertion {
    fn passed(&self) -> bool {
        matches!(&self.fit, Ok(f) if f.within(self.target, self.tol))
    }

    fn row(&self, suite: Suite) -> Vec<String> {
        let (points, slope, intercept, r2) = match &self.fit {
            Ok(f) => (f.points.len().to_string(), f.slope.to_string(), f.intercept.to_string(), f.r_squared.to_string()),
            Err(_) => (String::new(), String::new(), String::new(), String::new()),
        };
        vec![
            suite.name().to_string(),
            self.label.clone(),
            points,
            slope,
            intercept,
            r2,
            self.target.to_string(),
            self.tol.to_string(),
            self.passed().to_string(),
        ]
    }

    fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        match &self.fit {
            Ok(f) => format!(
                "[{status}] {}: slope {:.4} (target {} ± {}), r² {:.4}, {} points",
                self.label,
                f.slope,
                self.target,
                self.tol,
                f.r_squared,
                f.points.len()
            ),
            Err(e) => format!("[{status}] {}: {e}", self.label),
        }
    }
}

fn sweep_spec(cfg: &ExperimentConfig, seed: u64, d: usize, time: f64) -> Result<SweepSpec, CliError> {
    Ok(SweepSpec {
        case: cfg.case()?,
        grid: cfg.grid()?,
        replications: cfg.particle.replications,
        seed,
        reference: cfg.particle.reference,
        time,
        functions: functions(cfg, d)?,
        method: cfg.particle.method,
        execution: Execution::Parallel,
    })
}

fn resolved(rows: &[&SweepRow]) -> Vec<(f64, f64)> {
    rows.iter()
        .filter(|r| r.bias.abs() > 3.0 * r.se)
        .map(|r| (r.m as f64, r.bias.abs()))
        .collect()
}

/// Series with fewer than three points above 3·SE carry no slope information
/// and are skipped.
fn push_resolved(assertions: &mut Vec<Assertion>, label: String, points: Vec<(f64, f64)>, target: f64, tol: f64) {
    if points.len() >= 3 {
        assertions.push(Assertion { label, fit: fit_slope(&points), target, tol });
    } else {
        println!("[SKIP] {label}: {} points above 3·SE", points.len());
    }
}

fn require_one(assertions: &mut Vec<Assertion>, label: &str, target: f64, tol: f64) {
    if assertions.is_empty() {
        assertions.push(Assertion {
            label: format!("{label} (no series with 3 resolved points)"),
            fit: Err(fkjump::FkError::InsufficientPoints(0)),
            target,
            tol,
        });
    }
}

pub fn sweep(cfg: &ExperimentConfig, ctx: &Context) -> Result<bool, CliError> {
    let suite = ctx.suite.as_deref().map(Suite::parse).transpose()?;
    let model = particle_model(cfg)?;
    let time = cfg.particle.time.unwrap_or(model.horizon_time());
    let target = cfg.slope.target.unwrap_or(-1.0);
    let tol = suite.map(|s| cfg.slope.tol.unwrap_or(s.default_tol()));
    let out = ctx.create_out()?;
    let mut assertions = Vec::new();
    match suite {
        None | Some(Suite::VarianceVsN) | Some(Suite::BiasVsM) => {
            let seed = ctx.seed()?;
            let spec = sweep_spec(cfg, seed, model.state_count(), time)?;
            let rows = bias_variance_sweep(&model, &spec)?;
            write_sweep_csv(&rows, std::fs::File::create(out.join("sweep.csv"))?)?;
            println!("wrote {} rows to {}", rows.len(), out.join("sweep.csv").display());
            match suite {
                Some(Suite::VarianceVsN) => {
                    let mut groups: BTreeMap<(usize, u32), Vec<&SweepRow>> = BTreeMap::new();
                    rows.iter().for_each(|r| groups.entry((r.f_id, r.m)).or_default().push(r));
                    for ((f, m), g) in groups {
                        let points: Vec<(f64, f64)> = g.iter().map(|r| (r.n as f64, r.var)).collect();
                        assertions.push(Assertion {
                            label: format!("f{f} m={m} variance vs N"),
                            fit: fit_slope(&points),
                            target,
                            tol: tol.expect("suite"),
                        });
                    }
                }
                Some(Suite::BiasVsM) => {
                    let mut groups: BTreeMap<(usize, usize), Vec<&SweepRow>> = BTreeMap::new();
                    let square = cfg.particle.pairing == Pairing::Square;
                    rows.iter()
                        .for_each(|r| groups.entry((r.f_id, if square { 0 } else { r.n })).or_default().push(r));
                    for ((f, n), g) in groups {
                        let label = if square { format!("f{f} N=m² |bias| vs m") } else { format!("f{f} N={n} |bias| vs m") };
                        push_resolved(&mut assertions, label, resolved(&g), target, tol.expect("suite"));
                    }
                    require_one(&mut assertions, "|bias| vs m", target, tol.expect("suite"));
                }
                _ => {}
            }
        }
        Some(s @ (Suite::BiasVsMDeterministic | Suite::RecyclingGap)) => {
            let ms = &cfg.particle.m;
            if ms.is_empty() {
                return Err(CliError::Config("particle.m must be a nonempty list".into()));
            }
            let mut points = Vec::new();
            let mut rows = Vec::new();
            for &m in ms {
                let mesh = MeshSchedule::new(m)?;
                let k = mesh.index_of_time(time)?;
                let tv = if s == Suite::BiasVsMDeterministic {
                    let ct = model.as_ctmc()?;
                    let meshed = MeshedModel::new(&model, mesh)?;
                    let mu = mesh_trajectory(&meshed, k)?.measures.pop().expect("nonempty");
                    tv_distance(&mu, &ct_exact_flow(ct, time)?.1)?
                } else {
                    let meshed = MeshedModel::new(&model.shifted_to_nonpositive(), mesh)?;
                    let mu = mesh_trajectory(&meshed, k)?.measures.pop().expect("nonempty");
                    let nu = uniform_recycling_trajectory(&meshed, k)?.pop().expect("nonempty");
                    tv_distance(&nu, &mu)?
                };
                rows.push(vec![m.to_string(), tv.to_string()]);
                points.push((m as f64, tv));
            }
            let name = if s == Suite::BiasVsMDeterministic { "bias_m.csv" } else { "recycling_gap.csv" };
            write_table(&out.join(name), &["m".into(), "tv".into()], &rows)?;
            assertions.push(Assertion {
                label: format!("TV at t={time} vs m"),
                fit: fit_slope(&points),
                target,
                tol: tol.expect("suite"),
            });
        }
        Some(Suite::GeoVsExp) => {
            let seed = ctx.seed()?;
            let ct = match &model {
                FkModel::Ctmc(c) => c.with_horizon(time)?,
                FkModel::Discrete(_) => {
                    return Err(CliError::Config("geo-vs-exp needs a continuous-time model".into()));
                }
            };
            let n = *cfg
                .particle
                .n
                .first()
                .ok_or_else(|| CliError::Config("particle.n must be a nonempty list".into()))?;
            if cfg.particle.m.is_empty() || cfg.particle.replications == 0 {
                return Err(CliError::Config("particle.m must be nonempty and replications ≥ 1".into()));
            }
            let seeds: Vec<u64> = (0..cfg.particle.replications as u64).map(|r| derive_seed(seed, &[r])).collect();
            let gaps = geometric_vs_exponential_gap(&ct, n, &cfg.particle.m, &seeds, Execution::Parallel)?;
            let rows: Vec<Vec<String>> = gaps
                .iter()
                .map(|g| {
                    vec![
                        g.m.to_string(),
                        g.f_id.to_string(),
                        g.geometric.to_string(),
                        g.exponential.to_string(),
                        g.gap.to_string(),
                        g.se.to_string(),
                    ]
                })
                .collect();
            let cols = ["m", "f_id", "geometric", "exponential", "gap", "se"].map(String::from);
            write_table(&out.join("gap.csv"), &cols, &rows)?;
            for f in 0..ct.state_count() {
                let points: Vec<(f64, f64)> = gaps
                    .iter()
                    .filter(|g| g.f_id == f && g.gap.abs() > 3.0 * g.se)
                    .map(|g| (g.m as f64, g.gap.abs()))
                    .collect();
                push_resolved(&mut assertions, format!("f{f} |gap| vs m"), points, target, tol.expect("suite"));
            }
            require_one(&mut assertions, "|gap| vs m", target, tol.expect("suite"));
        }
    }
    let Some(suite) = suite else {
        return Ok(true);
    };
    let cols = ["suite", "series", "points", "slope", "intercept", "r_squared", "target", "tol", "passed"].map(String::from);
    let rows: Vec<Vec<String>> = assertions.iter().map(|a| a.row(suite)).collect();
    write_table(&out.join("slopes.csv"), &cols, &rows)?;
    for a in &assertions {
        println!("{}", a.line());
    }
    Ok(assertions.iter().all(Assertion::passed))
}
