//! TOML experiment configuration and model construction.

use std::path::{Path, PathBuf};

use fkjump::ctsim::{CtInteraction, JumpSchedulingMode};
use fkjump::measures::{matrix_from_rows, PotentialVector, ProbabilityVector, TransitionKernel};
use fkjump::oracle::{CtmcPiece, FkModel, FkModelCtmc, FkModelDiscrete};
use fkjump::particle::{MutationMethod, ReferenceKind};
use fkjump::selection::SelectionCase;
use fkjump::zoo;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub suite: Option<String>,
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub exact: ExactSpec,
    #[serde(default)]
    pub particle: ParticleSpec,
    #[serde(default)]
    pub ctsim: CtSpec,
    #[serde(default)]
    pub slope: SlopeSpec,
}

/// Either a zoo reference (`zoo = "ct1"`) with optional overrides, or an
/// inline model.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub zoo: Option<String>,
    #[serde(rename = "type")]
    pub kind: Option<String>,
    pub state_count: Option<usize>,
    pub initial_law: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    /// Discrete models: one row-major kernel per step, or one for all steps.
    pub kernels: Option<Vec<Vec<Vec<f64>>>>,
    /// Discrete models: positive weights `G_n`, one per step or one for all.
    pub potentials: Option<Vec<Vec<f64>>>,
    /// Continuous-time models: piecewise-constant schedule.
    pub pieces: Option<Vec<PieceSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub start: f64,
    pub generator: Vec<Vec<f64>>,
    pub potential: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSpec {
    #[serde(default = "default_exact_m")]
    pub m: Vec<u32>,
    #[serde(default = "default_time_step")]
    pub time_step: f64,
}

impl Default for ExactSpec {
    fn default() -> Self {
        Self {
            m: default_exact_m(),
            time_step: default_time_step(),
        }
    }
}

fn default_exact_m() -> Vec<u32> {
    vec![1, 4, 16]
}

fn default_time_step() -> f64 {
    0.25
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Every `N` with every `m`.
    #[default]
    Product,
    /// `N = m²` for each `m`.
    Square,
    /// `n[i]` with `m[i]`.
    Zip,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    #[serde(default = "default_case")]
    pub case: String,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub m: Vec<u32>,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default = "one")]
    pub replications: usize,
    /// Time at which sweeps compare against the reference; the model horizon
    /// when absent.
    pub time: Option<f64>,
    #[serde(default)]
    pub reference: ReferenceKind,
    /// Per-state test functions; state indicators when absent.
    pub functions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub method: MutationMethod,
    /// Replace `𝒱` by `𝒱 − max 𝒱` (Case 1 on a model with positive values).
    #[serde(default)]
    pub shift: bool,
}

impl Default for ParticleSpec {
    fn default() -> Self {
        Self {
            case: default_case(),
            n: Vec::new(),
            m: Vec::new(),
            pairing: Pairing::default(),
            replications: 1,
            time: None,
            reference: ReferenceKind::default(),
            functions: None,
            method: MutationMethod::default(),
            shift: false,
        }
    }
}

fn default_case() -> String {
    "case1".into()
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtSpec {
    #[serde(default = "default_case")]
    pub interaction: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_ct_n")]
    pub n: usize,
    #[serde(default = "one")]
    pub replications: usize,
    pub bound: Option<f64>,
    /// Defaults to the horizon.
    pub record_at: Option<Vec<f64>>,
    #[serde(default)]
    pub log_events: bool,
    #[serde(default)]
    pub shift: bool,
}

impl Default for CtSpec {
    fn default() -> Self {
        Self {
            interaction: default_case(),
            mode: default_mode(),
            n: default_ct_n(),
            replications: 1,
            bound: None,
            record_at: None,
            log_events: false,
            shift: false,
        }
    }
}

fn default_mode() -> String {
    "population".into()
}

fn default_ct_n() -> usize {
    1000
}

/// Overrides for the slope assertion of the selected suite.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeSpec {
    pub target: Option<f64>,
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<FkModel, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [model] section".into()))?
            .build()
    }

    pub fn case(&self) -> Result<SelectionCase, CliError> {
        Ok(self.particle.case.parse::<SelectionCase>()?)
    }

    /// `(N, m)` cells in file order.
    pub fn grid(&self) -> Result<Vec<(usize, u32)>, CliError> {
        let p = &self.particle;
        if p.m.is_empty() {
            return Err(CliError::Config("particle.m must be a nonempty list".into()));
        }
        if p.pairing != Pairing::Square && p.n.is_empty() {
            return Err(CliError::Config("particle.n must be a nonempty list".into()));
        }
        if p.n.contains(&0) || p.m.contains(&0) {
            return Err(CliError::Config("particle.n and particle.m entries must be positive".into()));
        }
        if p.replications == 0 {
            return Err(CliError::Config("particle.replications must be at least 1".into()));
        }
        Ok(match p.pairing {
            Pairing::Product => p.n.iter().flat_map(|&n| p.m.iter().map(move |&m| (n, m))).collect(),
            Pairing::Square => p.m.iter().map(|&m| ((m as usize).pow(2), m)).collect(),
            Pairing::Zip => {
                if p.n.len() != p.m.len() {
                    return Err(CliError::Config(format!(
                        "pairing = \"zip\" needs equally long lists (n has {}, m has {})",
                        p.n.len(),
                        p.m.len()
                    )));
                }
                p.n.iter().copied().zip(p.m.iter().copied()).collect()
            }
        })
    }

    pub fn interaction(&self) -> Result<CtInteraction, CliError> {
        Ok(self.ctsim.interaction.parse::<CtInteraction>()?)
    }

    pub fn mode(&self) -> Result<JumpSchedulingMode, CliError> {
        Ok(self.ctsim.mode.parse::<JumpSchedulingMode>()?)
    }
}

fn law(values: &[f64]) -> Result<ProbabilityVector, CliError> {
    ProbabilityVector::new(values.to_vec()).map_err(|e| CliError::Config(format!("model.initial_law: {e}")))
}

impl ModelSpec {
    pub fn build(&self) -> Result<FkModel, CliError> {
        match (&self.zoo, self.kind.as_deref()) {
            (Some(name), None) => self.zoo_model(name),
            (None, Some("discrete")) => self.discrete(),
            (None, Some("ctmc")) => self.ctmc(),
            (None, Some(other)) => Err(CliError::Config(format!(
                "model.type must be \"discrete\" or \"ctmc\", got \"{other}\""
            ))),
            (None, None) => Err(CliError::Config("model needs either `zoo` or `type`".into())),
            (Some(_), Some(_)) => Err(CliError::Config("model.zoo and model.type are exclusive".into())),
        }
    }

    fn integer_horizon(h: f64) -> Result<u64, CliError> {
        if h >= 0.0 && h.fract() == 0.0 {
            Ok(h as u64)
        } else {
            Err(CliError::Config(format!("discrete model.horizon must be a nonnegative integer, got {h}")))
        }
    }

    fn zoo_model(&self, name: &str) -> Result<FkModel, CliError> {
        let base: FkModel = match name.to_ascii_lowercase().as_str() {
            "ts1" => zoo::ts1().into(),
            "ct1" => zoo::ct1().into(),
            "mix1" => zoo::mix1().into(),
            other => {
                return Err(CliError::Config(format!(
                    "unknown zoo model \"{other}\" (expected ts1, ct1 or mix1)"
                )))
            }
        };
        let mu0 = match &self.initial_law {
            Some(w) => law(w)?,
            None => base.initial_law().clone(),
        };
        Ok(match base {
            FkModel::Discrete(d) => {
                let horizon = match self.horizon {
                    Some(h) => Self::integer_horizon(h)?,
                    None => d.horizon(),
                };
                FkModelDiscrete::homogeneous(mu0, d.kernel(0).clone(), d.weights(0).clone(), horizon)?.into()
            }
            FkModel::Ctmc(c) => {
                let c = c.with_initial_law(mu0)?;
                match self.horizon {
                    Some(h) => c.with_horizon(h)?.into(),
                    None => c.into(),
                }
            }
        })
    }

    fn check_states(&self, d: usize) -> Result<(), CliError> {
        match self.state_count {
            Some(s) if s != d => Err(CliError::Config(format!(
                "model.state_count = {s} but the initial law has {d} entries"
            ))),
            _ => Ok(()),
        }
    }

    fn discrete(&self) -> Result<FkModel, CliError> {
        let mu0 = law(self.initial_law.as_deref().ok_or_else(|| CliError::Config("model.initial_law is required".into()))?)?;
        self.check_states(mu0.len())?;
        let kernels = self.kernels.as_ref().ok_or_else(|| CliError::Config("model.kernels is required".into()))?;
        let potentials = self
            .potentials
            .as_ref()
            .ok_or_else(|| CliError::Config("model.potentials is required".into()))?;
        let kernels = kernels
            .iter()
            .enumerate()
            .map(|(i, rows)| {
                TransitionKernel::from_rows(rows).map_err(|e| CliError::Config(format!("model.kernels[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let potentials = potentials
            .iter()
            .enumerate()
            .map(|(i, g)| {
                PotentialVector::new(g.clone()).map_err(|e| CliError::Config(format!("model.potentials[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let model = match (kernels.len(), potentials.len(), self.horizon) {
            (1, 1, Some(h)) => FkModelDiscrete::homogeneous(
                mu0,
                kernels.into_iter().next().expect("one"),
                potentials.into_iter().next().expect("one"),
                Self::integer_horizon(h)?,
            )?,
            (k, p, h) => {
                if let Some(h) = h {
                    if Self::integer_horizon(h)? != k as u64 {
                        return Err(CliError::Config(format!(
                            "model.horizon = {h} but {k} kernels were given"
                        )));
                    }
                }
                if k != p {
                    return Err(CliError::Config(format!(
                        "model.kernels has {k} entries but model.potentials has {p}"
                    )));
                }
                FkModelDiscrete::new(mu0, kernels, potentials)?
            }
        };
        Ok(model.into())
    }

    fn ctmc(&self) -> Result<FkModel, CliError> {
        let mu0 = law(self.initial_law.as_deref().ok_or_else(|| CliError::Config("model.initial_law is required".into()))?)?;
        self.check_states(mu0.len())?;
        let horizon = self.horizon.ok_or_else(|| CliError::Config("model.horizon is required".into()))?;
        let specs = self
            .pieces
            .as_ref()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| CliError::Config("model.pieces must list at least one piece".into()))?;
        let pieces = specs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let ctx = |e: fkjump::FkError| CliError::Config(format!("model.pieces[{i}]: {e}"));
                Ok(CtmcPiece {
                    start: p.start,
                    generator: matrix_from_rows(&p.generator).map_err(ctx)?,
                    potential: PotentialVector::new(p.potential.clone()).map_err(ctx)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(FkModelCtmc::new(mu0, pieces, horizon)?.into())
    }
}

pub fn resolve_out(cli: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
