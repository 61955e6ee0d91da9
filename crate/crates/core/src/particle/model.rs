use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::measures::ProbabilityVector;
use crate::oracle::{FkModel, MeshSchedule, MeshedModel};

/// Everything the mean-field engine needs from a model on the mesh.
pub trait ParticleModel: Sync {
    type State: Clone + Send + Sync + std::fmt::Debug;

    fn mesh(&self) -> MeshSchedule;

    /// Number of mesh cells available.
    fn steps(&self) -> u64;

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Self::State;

    /// `𝒱_{t_k}(x)`.
    fn potential(&self, k: u64, x: &Self::State) -> f64;

    /// One draw from `ℳ_{t_k,t_{k+1}}(x, ·)`.
    fn mutate(&self, k: u64, x: &Self::State, rng: &mut ChaCha8Rng) -> Self::State;

    fn mutation_is_identity(&self, k: u64) -> bool;
}

/// Inverse-CDF sampler for a finite law.
#[derive(Clone, Debug)]
pub struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    pub fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { cdf }
    }

    pub fn total(&self) -> f64 {
        *self.cdf.last().unwrap_or(&0.0)
    }

    /// Index `i` with probability `w_i / Σ w`, from a uniform `u ∈ [0,1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let target = u * self.total();
        self.cdf.partition_point(|&c| c <= target).min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        self.sample_with(rng.random::<f64>())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationMethod {
    /// Row sampling from the precomputed `ℳ_{t_k,t_{k+1}}`.
    #[default]
    ExactKernel,
    /// Poisson number of jumps of the uniformized chain over `1/m`.
    Uniformized,
}

#[derive(Clone, Debug)]
struct Uniformization {
    rate: f64,
    jumps: Vec<Categorical>,
}

/// A finite-state Feynman-Kac model driven by the particle engine.
#[derive(Clone, Debug)]
pub struct FiniteParticleModel {
    meshed: MeshedModel,
    method: MutationMethod,
    initial: Categorical,
    kernel_rows: Vec<Vec<Categorical>>,
    uniformized: Vec<Uniformization>,
}

impl FiniteParticleModel {
    pub fn new(model: &FkModel, mesh: MeshSchedule, method: MutationMethod) -> Result<Self> {
        let meshed = MeshedModel::new(model, mesh)?;
        let uniformized = match (method, model) {
            (MutationMethod::ExactKernel, _) => Vec::new(),
            (MutationMethod::Uniformized, FkModel::Ctmc(c)) => c
                .pieces()
                .iter()
                .map(|p| {
                    let l = &p.generator;
                    let d = l.nrows();
                    let rate = (0..d).map(|x| -l[(x, x)]).fold(0.0, f64::max);
                    let jumps = (0..d)
                        .map(|x| {
                            let row: Vec<f64> = (0..d)
                                .map(|y| {
                                    let id = if x == y { 1.0 } else { 0.0 };
                                    if rate > 0.0 { (id + l[(x, y)] / rate).max(0.0) } else { id }
                                })
                                .collect();
                            Categorical::new(&row)
                        })
                        .collect();
                    Uniformization { rate, jumps }
                })
                .collect(),
            (MutationMethod::Uniformized, FkModel::Discrete(_)) => {
                return Err(FkError::ModelMismatch(
                    "uniformized mutation needs a continuous-time model".into(),
                ))
            }
        };
        Ok(Self::from_meshed(meshed, method, uniformized))
    }

    pub fn from_meshed_model(meshed: MeshedModel) -> Self {
        Self::from_meshed(meshed, MutationMethod::ExactKernel, Vec::new())
    }

    fn from_meshed(meshed: MeshedModel, method: MutationMethod, uniformized: Vec<Uniformization>) -> Self {
        let initial = Categorical::new(meshed.initial_law().as_slice());
        let kernel_rows = meshed
            .distinct_kernels()
            .iter()
            .map(|k| (0..k.size()).map(|x| Categorical::new(&k.row(x))).collect())
            .collect();
        Self {
            meshed,
            method,
            initial,
            kernel_rows,
            uniformized,
        }
    }

    pub fn meshed(&self) -> &MeshedModel {
        &self.meshed
    }

    pub fn state_count(&self) -> usize {
        self.meshed.state_count()
    }

    pub fn initial_law(&self) -> &ProbabilityVector {
        self.meshed.initial_law()
    }
}

impl ParticleModel for FiniteParticleModel {
    type State = usize;

    fn mesh(&self) -> MeshSchedule {
        self.meshed.mesh()
    }

    fn steps(&self) -> u64 {
        self.meshed.steps()
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> usize {
        self.initial.sample(rng)
    }

    fn potential(&self, k: u64, x: &usize) -> f64 {
        self.meshed.potential(k).values()[*x]
    }

    fn mutate(&self, k: u64, x: &usize, rng: &mut ChaCha8Rng) -> usize {
        let cell = self.meshed.cell(k);
        match (self.method, cell.kernel) {
            (_, None) => *x,
            (MutationMethod::ExactKernel, Some(i)) => self.kernel_rows[i][*x].sample(rng),
            (MutationMethod::Uniformized, Some(_)) => {
                let u = &self.uniformized[cell.potential];
                let mean = u.rate / self.meshed.m() as f64;
                if mean <= 0.0 {
                    return *x;
                }
                let jumps = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
                (0..jumps).fold(*x, |state, _| u.jumps[state].sample(rng))
            }
        }
    }

    fn mutation_is_identity(&self, k: u64) -> bool {
        self.meshed.cell(k).kernel.is_none()
    }
}

/// Euler scheme of `dX = −θ X dt + σ dW` with the bounded nonpositive
/// potential `𝒱(x) = −κ min(x², cap)`.
#[derive(Clone, Debug)]
pub struct EulerDiffusion {
    pub theta: f64,
    pub sigma: f64,
    pub x0_mean: f64,
    pub x0_sd: f64,
    pub kappa: f64,
    pub cap: f64,
    pub horizon: f64,
    mesh: MeshSchedule,
}

impl EulerDiffusion {
    pub fn new(theta: f64, sigma: f64, kappa: f64, cap: f64, horizon: f64, mesh: MeshSchedule) -> Result<Self> {
        if !(sigma >= 0.0 && kappa >= 0.0 && cap > 0.0 && horizon > 0.0) {
            return Err(FkError::ModelMismatch("invalid diffusion parameters".into()));
        }
        mesh.index_of_time(horizon)?;
        Ok(Self {
            theta,
            sigma,
            x0_mean: 0.0,
            x0_sd: 1.0,
            kappa,
            cap,
            horizon,
            mesh,
        })
    }

    pub fn with_initial(mut self, mean: f64, sd: f64) -> Self {
        self.x0_mean = mean;
        self.x0_sd = sd;
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.mesh.m() as f64
    }

    /// Drift at `x`.
    pub fn drift(&self, x: f64) -> f64 {
        -self.theta * x
    }
}

impl ParticleModel for EulerDiffusion {
    type State = f64;

    fn mesh(&self) -> MeshSchedule {
        self.mesh
    }

    fn steps(&self) -> u64 {
        self.mesh.index_of_time(self.horizon).expect("validated")
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.x0_mean + self.x0_sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
    }

    fn potential(&self, _k: u64, x: &f64) -> f64 {
        -self.kappa * (x * x).min(self.cap)
    }

    fn mutate(&self, _k: u64, x: &f64, rng: &mut ChaCha8Rng) -> f64 {
        let dt = self.dt();
        let noise = Normal::new(0.0, self.sigma * dt.sqrt()).expect("finite sd").sample(rng);
        x + self.drift(*x) * dt + noise
    }

    fn mutation_is_identity(&self, _k: u64) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_skips_zero_weights() {
        let c = Categorical::new(&[0.0, 0.5, 0.0, 0.5]);
        assert_eq!(c.sample_with(0.0), 1);
        assert_eq!(c.sample_with(0.4999), 1);
        assert_eq!(c.sample_with(0.5), 3);
        assert_eq!(c.sample_with(0.999_999_999), 3);
    }
}
