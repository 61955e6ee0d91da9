use nalgebra::DMatrix;

use crate::error::{FkError, Result};
use crate::measures::{PotentialVector, ProbabilityVector, TransitionKernel, NORMALIZATION_TOL};

/// Discrete-time model: `η_{n+1} = Ψ_{G_n}(η_n) M_{n+1}`.
///
/// `kernels[n]` moves the chain from step `n` to step `n+1`; `potentials[n]`
/// holds the positive weights `G_n`. Both vectors have length `horizon`.
#[derive(Clone, Debug)]
pub struct FkModelDiscrete {
    initial_law: ProbabilityVector,
    kernels: Vec<TransitionKernel>,
    potentials: Vec<PotentialVector>,
    horizon: u64,
}

impl FkModelDiscrete {
    pub fn new(
        initial_law: ProbabilityVector,
        kernels: Vec<TransitionKernel>,
        potentials: Vec<PotentialVector>,
    ) -> Result<Self> {
        if kernels.len() != potentials.len() {
            return Err(FkError::ModelMismatch(format!(
                "{} kernels but {} potentials",
                kernels.len(),
                potentials.len()
            )));
        }
        let d = initial_law.len();
        for k in &kernels {
            if k.size() != d {
                return Err(FkError::DimensionMismatch {
                    expected: d,
                    found: k.size(),
                });
            }
            if !k.is_stochastic() {
                return Err(FkError::ModelMismatch("chain kernels must be stochastic".into()));
            }
        }
        for g in &potentials {
            if g.len() != d {
                return Err(FkError::DimensionMismatch {
                    expected: d,
                    found: g.len(),
                });
            }
            if let Some((i, &v)) = g.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(FkError::SignViolation {
                    case: "discrete potential",
                    requirement: "G_n > 0",
                    state: i,
                    value: v,
                });
            }
        }
        let horizon = kernels.len() as u64;
        Ok(Self {
            initial_law,
            kernels,
            potentials,
            horizon,
        })
    }

    /// Time-homogeneous model repeated up to `horizon`.
    pub fn homogeneous(
        initial_law: ProbabilityVector,
        kernel: TransitionKernel,
        potential: PotentialVector,
        horizon: u64,
    ) -> Result<Self> {
        let h = horizon as usize;
        Self::new(initial_law, vec![kernel; h], vec![potential; h])
    }

    pub fn initial_law(&self) -> &ProbabilityVector {
        &self.initial_law
    }

    pub fn state_count(&self) -> usize {
        self.initial_law.len()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// `M_{n+1}`: the kernel applied after step `n`.
    pub fn kernel(&self, n: u64) -> &TransitionKernel {
        &self.kernels[n as usize]
    }

    /// `G_n`.
    pub fn weights(&self, n: u64) -> &PotentialVector {
        &self.potentials[n as usize]
    }

    /// `log G_n`.
    pub fn log_potential(&self, n: u64) -> PotentialVector {
        PotentialVector::log_of(self.potentials[n as usize].values())
            .expect("weights validated positive at construction")
    }

    pub fn check_step(&self, n: u64) -> Result<()> {
        if n > self.horizon {
            Err(FkError::HorizonExceeded {
                requested: n,
                horizon: self.horizon,
            })
        } else {
            Ok(())
        }
    }

    /// Rescale every `G_n` by `1/max G_n` so that `log G_n ≤ 0`. Normalized
    /// flows are unchanged; `γ_n(1)` is divided by `Π max G_p`.
    pub fn shifted_to_nonpositive(&self) -> Self {
        let potentials = self
            .potentials
            .iter()
            .map(|g| {
                let top = g.max();
                PotentialVector::new(g.values().iter().map(|v| v / top).collect())
                    .expect("positive finite weights")
            })
            .collect();
        Self {
            potentials,
            ..self.clone()
        }
    }
}

/// Validates a CTMC generator: square, finite, off-diagonals `≥ 0`, rows
/// summing to zero (tolerance scaled by the row magnitude).
pub fn validate_generator(l: &DMatrix<f64>) -> Result<()> {
    if !l.is_square() {
        return Err(FkError::InvalidGenerator(format!(
            "{}x{} matrix is not square",
            l.nrows(),
            l.ncols()
        )));
    }
    for i in 0..l.nrows() {
        let mut sum = 0.0;
        let mut scale: f64 = 1.0;
        for j in 0..l.ncols() {
            let v = l[(i, j)];
            if !v.is_finite() {
                return Err(FkError::InvalidGenerator(format!("non-finite entry at ({i}, {j})")));
            }
            if i != j && v < 0.0 {
                return Err(FkError::InvalidGenerator(format!(
                    "negative off-diagonal rate {v} at ({i}, {j})"
                )));
            }
            sum += v;
            scale = scale.max(v.abs());
        }
        if sum.abs() > NORMALIZATION_TOL * scale {
            return Err(FkError::InvalidGenerator(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

/// One constant piece of a continuous-time schedule, active from `start`
/// until the next piece starts.
#[derive(Clone, Debug)]
pub struct CtmcPiece {
    pub start: f64,
    pub generator: DMatrix<f64>,
    pub potential: PotentialVector,
}

/// Continuous-time model with piecewise-constant `(L_t, 𝒱_t)`.
#[derive(Clone, Debug)]
pub struct FkModelCtmc {
    initial_law: ProbabilityVector,
    pieces: Vec<CtmcPiece>,
    horizon: f64,
}

impl FkModelCtmc {
    pub fn new(initial_law: ProbabilityVector, pieces: Vec<CtmcPiece>, horizon: f64) -> Result<Self> {
        if pieces.is_empty() {
            return Err(FkError::ModelMismatch("schedule has no pieces".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(FkError::ModelMismatch(format!("horizon {horizon} must be positive")));
        }
        if pieces[0].start != 0.0 {
            return Err(FkError::ModelMismatch("first schedule piece must start at 0".into()));
        }
        let d = initial_law.len();
        for (i, p) in pieces.iter().enumerate() {
            validate_generator(&p.generator)?;
            if p.generator.nrows() != d {
                return Err(FkError::DimensionMismatch {
                    expected: d,
                    found: p.generator.nrows(),
                });
            }
            if p.potential.len() != d {
                return Err(FkError::DimensionMismatch {
                    expected: d,
                    found: p.potential.len(),
                });
            }
            if i > 0 && !(p.start > pieces[i - 1].start) {
                return Err(FkError::ModelMismatch(
                    "schedule breakpoints must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            initial_law,
            pieces,
            horizon,
        })
    }

    pub fn homogeneous(
        initial_law: ProbabilityVector,
        generator: DMatrix<f64>,
        potential: PotentialVector,
        horizon: f64,
    ) -> Result<Self> {
        Self::new(
            initial_law,
            vec![CtmcPiece {
                start: 0.0,
                generator,
                potential,
            }],
            horizon,
        )
    }

    pub fn initial_law(&self) -> &ProbabilityVector {
        &self.initial_law
    }

    pub fn state_count(&self) -> usize {
        self.initial_law.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn pieces(&self) -> &[CtmcPiece] {
        &self.pieces
    }

    /// Index of the piece active at time `t` (left-continuous lookup).
    pub fn piece_index(&self, t: f64) -> usize {
        self.pieces
            .iter()
            .rposition(|p| p.start <= t)
            .unwrap_or(0)
    }

    pub fn piece_at(&self, t: f64) -> &CtmcPiece {
        &self.pieces[self.piece_index(t)]
    }

    /// End of piece `i`, clipped to the horizon.
    pub fn piece_end(&self, i: usize) -> f64 {
        self.pieces
            .get(i + 1)
            .map_or(self.horizon, |p| p.start.min(self.horizon))
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.initial_law.clone(), self.pieces.clone(), horizon)
    }

    pub fn with_initial_law(&self, initial_law: ProbabilityVector) -> Result<Self> {
        Self::new(initial_law, self.pieces.clone(), self.horizon)
    }

    /// `𝒱_t − max 𝒱_t` on every piece, so the potential is `−𝒰` with `𝒰 ≥ 0`.
    pub fn shifted_to_nonpositive(&self) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| CtmcPiece {
                potential: p.potential.shifted(-p.potential.max()),
                ..p.clone()
            })
            .collect();
        Self {
            pieces,
            ..self.clone()
        }
    }

    /// Replaces every potential by zero.
    pub fn without_potential(&self) -> Self {
        let d = self.state_count();
        let pieces = self
            .pieces
            .iter()
            .map(|p| CtmcPiece {
                potential: PotentialVector::constant(d, 0.0).expect("nonempty"),
                ..p.clone()
            })
            .collect();
        Self {
            pieces,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub enum FkModel {
    Discrete(FkModelDiscrete),
    Ctmc(FkModelCtmc),
}

impl FkModel {
    pub fn state_count(&self) -> usize {
        match self {
            FkModel::Discrete(m) => m.state_count(),
            FkModel::Ctmc(m) => m.state_count(),
        }
    }

    pub fn initial_law(&self) -> &ProbabilityVector {
        match self {
            FkModel::Discrete(m) => m.initial_law(),
            FkModel::Ctmc(m) => m.initial_law(),
        }
    }

    /// Horizon in model time units.
    pub fn horizon_time(&self) -> f64 {
        match self {
            FkModel::Discrete(m) => m.horizon() as f64,
            FkModel::Ctmc(m) => m.horizon(),
        }
    }

    pub fn shifted_to_nonpositive(&self) -> Self {
        match self {
            FkModel::Discrete(m) => FkModel::Discrete(m.shifted_to_nonpositive()),
            FkModel::Ctmc(m) => FkModel::Ctmc(m.shifted_to_nonpositive()),
        }
    }

    pub fn as_discrete(&self) -> Result<&FkModelDiscrete> {
        match self {
            FkModel::Discrete(m) => Ok(m),
            FkModel::Ctmc(_) => Err(FkError::ModelMismatch("expected a discrete-time model".into())),
        }
    }

    pub fn as_ctmc(&self) -> Result<&FkModelCtmc> {
        match self {
            FkModel::Ctmc(m) => Ok(m),
            FkModel::Discrete(_) => Err(FkError::ModelMismatch("expected a continuous-time model".into())),
        }
    }
}

impl From<FkModelDiscrete> for FkModel {
    fn from(m: FkModelDiscrete) -> Self {
        FkModel::Discrete(m)
    }
}

impl From<FkModelCtmc> for FkModel {
    fn from(m: FkModelCtmc) -> Self {
        FkModel::Ctmc(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_validation() {
        let ok = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.5, -0.5]);
        assert!(validate_generator(&ok).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.5, -0.4]);
        assert!(validate_generator(&bad).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.5, -0.5]);
        assert!(validate_generator(&neg).is_err());
    }

    #[test]
    fn piece_lookup_is_left_continuous() {
        let l = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let v = PotentialVector::new(vec![0.0, 1.0]).unwrap();
        let model = FkModelCtmc::new(
            ProbabilityVector::dirac(2, 0),
            vec![
                CtmcPiece { start: 0.0, generator: l.clone(), potential: v.clone() },
                CtmcPiece { start: 0.5, generator: l, potential: v },
            ],
            1.0,
        )
        .unwrap();
        assert_eq!(model.piece_index(0.0), 0);
        assert_eq!(model.piece_index(0.49), 0);
        assert_eq!(model.piece_index(0.5), 1);
        assert_eq!(model.piece_end(0), 0.5);
        assert_eq!(model.piece_end(1), 1.0);
    }

    #[test]
    fn nonpositive_potential_rejected_for_discrete_weights() {
        let k = TransitionKernel::identity(2);
        let g = PotentialVector::new(vec![1.0, 0.0]).unwrap();
        let err = FkModelDiscrete::homogeneous(ProbabilityVector::uniform(2), k, g, 2).unwrap_err();
        assert!(matches!(err, FkError::SignViolation { state: 1, .. }));
    }
}
