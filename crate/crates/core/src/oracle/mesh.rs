use std::collections::HashMap;

use crate::error::{FkError, Result};
use crate::measures::{PotentialVector, ProbabilityVector, TransitionKernel};

use super::model::{FkModel, FkModelCtmc, FkModelDiscrete};

/// The mesh `t_k = k/m`. Times are carried as integer indices; floats are
/// only produced for display and schedule lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MeshSchedule {
    m: u32,
}

impl MeshSchedule {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(FkError::Config("mesh parameter m must be positive".into()));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn time(&self, k: u64) -> f64 {
        k as f64 / self.m as f64
    }

    pub fn is_integer_time(&self, k: u64) -> bool {
        k % self.m as u64 == 0
    }

    /// Mesh index of integer time `n`.
    pub fn index_of_integer(&self, n: u64) -> u64 {
        n * self.m as u64
    }

    /// Mesh index of a real time, which must lie on the mesh.
    pub fn index_of_time(&self, t: f64) -> Result<u64> {
        let x = t * self.m as f64;
        let k = x.round();
        if t < 0.0 || (x - k).abs() > 1e-9 {
            return Err(FkError::TimeOutOfRange {
                time: t,
                horizon: f64::NAN,
            });
        }
        Ok(k as u64)
    }
}

/// Per-cell data of the mesh recursion: `𝒱_{t_k}` and the mutation
/// `ℳ_{t_k,t_{k+1}}` (absent when it is the identity).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshCell {
    pub potential: usize,
    pub kernel: Option<usize>,
}

/// A model unrolled on a mesh: everything the deterministic recursion and the
/// particle engine need, precomputed once.
#[derive(Clone, Debug)]
pub struct MeshedModel {
    mesh: MeshSchedule,
    initial_law: ProbabilityVector,
    potentials: Vec<PotentialVector>,
    kernels: Vec<TransitionKernel>,
    cells: Vec<MeshCell>,
    discrete: bool,
}

impl MeshedModel {
    pub fn new(model: &FkModel, mesh: MeshSchedule) -> Result<Self> {
        match model {
            FkModel::Discrete(d) => Ok(Self::from_discrete(d, mesh)),
            FkModel::Ctmc(c) => Self::from_ctmc(c, mesh),
        }
    }

    /// Case D on the mesh: `𝒢 = G_{⌊k/m⌋}^{1/m}`, mutation only when the cell
    /// ends on an integer time.
    pub fn from_discrete(model: &FkModelDiscrete, mesh: MeshSchedule) -> Self {
        let m = mesh.m() as u64;
        let horizon = model.horizon();
        let potentials: Vec<PotentialVector> = (0..horizon).map(|n| model.log_potential(n)).collect();
        let kernels: Vec<TransitionKernel> = (0..horizon).map(|n| model.kernel(n).clone()).collect();
        let cells = (0..horizon * m)
            .map(|k| {
                let n = (k / m) as usize;
                MeshCell {
                    potential: n,
                    kernel: ((k + 1) % m == 0).then_some(n),
                }
            })
            .collect();
        Self {
            mesh,
            initial_law: model.initial_law().clone(),
            potentials,
            kernels,
            cells,
            discrete: true,
        }
    }

    /// Case C on the mesh: left-endpoint schedule, `ℳ = exp(L/m)`.
    pub fn from_ctmc(model: &FkModelCtmc, mesh: MeshSchedule) -> Result<Self> {
        let steps = mesh.index_of_time(model.horizon()).map_err(|_| FkError::TimeOutOfRange {
            time: model.horizon(),
            horizon: model.horizon(),
        })?;
        let dt = 1.0 / mesh.m() as f64;
        let mut kernel_of_piece = HashMap::new();
        let mut kernels = Vec::new();
        let potentials: Vec<PotentialVector> =
            model.pieces().iter().map(|p| p.potential.clone()).collect();
        let mut cells = Vec::with_capacity(steps as usize);
        for k in 0..steps {
            let piece = model.piece_index(mesh.time(k));
            let kernel = match kernel_of_piece.get(&piece) {
                Some(&i) => i,
                None => {
                    kernels.push(markov_exponential(&model.pieces()[piece].generator, dt)?);
                    kernel_of_piece.insert(piece, kernels.len() - 1);
                    kernels.len() - 1
                }
            };
            cells.push(MeshCell {
                potential: piece,
                kernel: Some(kernel),
            });
        }
        Ok(Self {
            mesh,
            initial_law: model.initial_law().clone(),
            potentials,
            kernels,
            cells,
            discrete: false,
        })
    }

    pub fn mesh(&self) -> MeshSchedule {
        self.mesh
    }

    pub fn m(&self) -> u32 {
        self.mesh.m()
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    pub fn initial_law(&self) -> &ProbabilityVector {
        &self.initial_law
    }

    pub fn state_count(&self) -> usize {
        self.initial_law.len()
    }

    /// Number of mesh cells up to the horizon.
    pub fn steps(&self) -> u64 {
        self.cells.len() as u64
    }

    pub fn check_index(&self, k: u64) -> Result<()> {
        if k > self.steps() {
            Err(FkError::HorizonExceeded {
                requested: k,
                horizon: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    pub fn cell(&self, k: u64) -> MeshCell {
        self.cells[k as usize]
    }

    /// `𝒱_{t_k}` (log scale).
    pub fn potential(&self, k: u64) -> &PotentialVector {
        &self.potentials[self.cells[k as usize].potential]
    }

    /// `𝒢_{t_k} = exp(𝒱_{t_k}/m)`.
    pub fn weights(&self, k: u64) -> Vec<f64> {
        self.potential(k).exp_scaled(1.0 / self.m() as f64)
    }

    /// `ℳ_{t_k,t_{k+1}}`, or `None` for the identity.
    pub fn mutation(&self, k: u64) -> Option<&TransitionKernel> {
        self.cells[k as usize].kernel.map(|i| &self.kernels[i])
    }

    pub fn distinct_potentials(&self) -> &[PotentialVector] {
        &self.potentials
    }

    pub fn distinct_kernels(&self) -> &[TransitionKernel] {
        &self.kernels
    }

    /// Largest `‖𝒱_{t_k}‖` over the schedule.
    pub fn potential_sup_norm(&self) -> f64 {
        self.potentials.iter().map(|p| p.sup_norm()).fold(0.0, f64::max)
    }

    /// Whether `𝒱 ≤ 0` on every cell, i.e. `𝒱 = −𝒰` with `𝒰 ≥ 0`.
    pub fn is_nonpositive(&self) -> bool {
        self.potentials.iter().all(|p| p.max() <= 0.0)
    }
}

/// `exp(L·t)` for a validated generator, returned as a stochastic kernel with
/// rounding noise clipped and rows renormalized.
pub fn markov_exponential(generator: &nalgebra::DMatrix<f64>, t: f64) -> Result<TransitionKernel> {
    let mut e = (generator * t).exp();
    e.iter_mut().for_each(|v| {
        if *v < 0.0 && *v > -1e-14 {
            *v = 0.0
        }
    });
    for mut row in e.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    TransitionKernel::stochastic(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn integer_times_are_exact() {
        let mesh = MeshSchedule::new(5).unwrap();
        assert!(mesh.is_integer_time(10));
        assert!(!mesh.is_integer_time(11));
        assert_eq!(mesh.index_of_integer(3), 15);
        assert_eq!(mesh.index_of_time(0.4).unwrap(), 2);
        assert!(mesh.index_of_time(0.3).is_err());
        assert!(MeshSchedule::new(0).is_err());
    }

    #[test]
    fn two_state_exponential_closed_form() {
        // L = [[-a, a], [b, -b]]: P_00(t) = b/(a+b) + a/(a+b) e^{-(a+b)t}.
        let (a, b, t) = (1.3, 0.7, 0.9);
        let l = DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]);
        let k = markov_exponential(&l, t).unwrap();
        let p00 = b / (a + b) + a / (a + b) * (-(a + b) * t).exp();
        assert!((k.entry(0, 0) - p00).abs() < 1e-13);
    }
}
