//! Reference models used by the tests, the verification suite and the CLI.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::measures::{PotentialVector, ProbabilityVector, TransitionKernel};
use crate::oracle::{FkModelCtmc, FkModelDiscrete, MeshSchedule};
use crate::particle::EulerDiffusion;

/// Two states, `M = [[0.7, 0.3], [0.4, 0.6]]`, `G = (1, 2)`.
pub fn ts1_with_initial(mu0: ProbabilityVector, horizon: u64) -> FkModelDiscrete {
    FkModelDiscrete::homogeneous(
        mu0,
        TransitionKernel::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6]]).expect("stochastic"),
        PotentialVector::new(vec![1.0, 2.0]).expect("finite"),
        horizon,
    )
    .expect("valid model")
}

/// TS1 started at `δ_0` with horizon 10.
pub fn ts1() -> FkModelDiscrete {
    ts1_with_initial(ProbabilityVector::dirac(2, 0), 10)
}

pub fn ct1_generator() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.5, 1.0, -2.0, 1.0, 1.0, 1.0, -2.0])
}

/// Three-state chain with `𝒱 = (0, 0.3, 0.6)`, started at `δ_0`, horizon 2.
pub fn ct1() -> FkModelCtmc {
    FkModelCtmc::homogeneous(
        ProbabilityVector::dirac(3, 0),
        ct1_generator(),
        PotentialVector::new(vec![0.0, 0.3, 0.6]).expect("finite"),
        2.0,
    )
    .expect("valid model")
}

pub fn mix1_kernel() -> TransitionKernel {
    TransitionKernel::from_rows(&[
        vec![0.40, 0.25, 0.15, 0.10, 0.10],
        vec![0.20, 0.35, 0.20, 0.15, 0.10],
        vec![0.10, 0.20, 0.40, 0.20, 0.10],
        vec![0.10, 0.15, 0.20, 0.35, 0.20],
        vec![0.10, 0.10, 0.15, 0.25, 0.40],
    ])
    .expect("stochastic")
}

/// Five states, strictly positive kernel, mild potential, horizon 20.
pub fn mix1() -> FkModelDiscrete {
    FkModelDiscrete::homogeneous(
        ProbabilityVector::uniform(5),
        mix1_kernel(),
        PotentialVector::new(vec![1.0, 1.2, 1.5, 1.2, 1.0]).expect("finite"),
        20,
    )
    .expect("valid model")
}

/// Euler-discretized Ornstein-Uhlenbeck walkers with `𝒱(x) = −½ min(x², 4)`.
pub fn ou_euler(m: u32) -> EulerDiffusion {
    EulerDiffusion::new(1.0, 1.0, 0.5, 4.0, 1.0, MeshSchedule::new(m).expect("m > 0")).expect("valid parameters")
}

/// A law with every weight at least `floor / d`.
pub fn random_law(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> ProbabilityVector {
    let w: Vec<f64> = (0..d).map(|_| floor + rng.random::<f64>()).collect();
    ProbabilityVector::from_unnormalized(w).expect("positive weights")
}

pub fn random_kernel(rng: &mut ChaCha8Rng, d: usize) -> TransitionKernel {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>().powi(2)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect();
    TransitionKernel::from_rows(&rows).expect("normalized rows")
}

/// A time-inhomogeneous discrete model with `G_n ∈ [0.2, 5]`.
pub fn random_discrete_model(rng: &mut ChaCha8Rng, d: usize, horizon: u64) -> FkModelDiscrete {
    let mu0 = random_law(rng, d, 0.0);
    let kernels = (0..horizon).map(|_| random_kernel(rng, d)).collect();
    let potentials = (0..horizon)
        .map(|_| PotentialVector::new((0..d).map(|_| (rng.random_range(-1.6..1.6f64)).exp()).collect()).expect("finite"))
        .collect();
    FkModelDiscrete::new(mu0, kernels, potentials).expect("valid model")
}
