//! Finite-state measures, kernels and the elementary transforms used by every
//! other module: Boltzmann-Gibbs reweighting, kernel action, total variation,
//! the Dobrushin coefficient and the oscillation of a function.
//!
//! All types are immutable after construction. Probability vectors are
//! renormalized whenever they are produced by a flow step, so long recursions
//! never accumulate mass drift beyond [`NORMALIZATION_TOL`].

use nalgebra::DMatrix;

use crate::error::{FkError, Result};

/// Absolute tolerance on the total mass of a probability vector and on the
/// row sums of a stochastic kernel.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Total weight below which a Boltzmann-Gibbs transform is rejected.
pub const WEIGHT_FLOOR: f64 = 1e-300;

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(FkError::NonFinite(i)),
        None => Ok(()),
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(FkError::DimensionMismatch { expected, found })
    }
}

/// A probability measure on `{0, .., len-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates nonnegativity and unit mass (within [`NORMALIZATION_TOL`]),
    /// then divides by the sum.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(FkError::InvalidProbability("empty state space".into()));
        }
        check_finite(&weights)?;
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| **w < 0.0) {
            return Err(FkError::InvalidProbability(format!(
                "negative weight {w} at state {i}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(FkError::InvalidProbability(format!(
                "weights sum to {total}"
            )));
        }
        Ok(Self::renormalized(weights, total))
    }

    /// Normalizes an arbitrary nonnegative weight vector.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(FkError::InvalidProbability("empty state space".into()));
        }
        check_finite(&weights)?;
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| **w < 0.0) {
            return Err(FkError::InvalidProbability(format!(
                "negative weight {w} at state {i}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= WEIGHT_FLOOR {
            return Err(FkError::DegenerateWeight(total));
        }
        Ok(Self::renormalized(weights, total))
    }

    /// Empirical measure of integer counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        Self::from_unnormalized(counts.iter().map(|&c| c as f64).collect())
    }

    fn renormalized(mut weights: Vec<f64>, total: f64) -> Self {
        weights.iter_mut().for_each(|w| *w /= total);
        Self { weights }
    }

    pub fn dirac(size: usize, state: usize) -> Self {
        assert!(state < size, "dirac state {state} outside space of size {size}");
        let mut weights = vec![0.0; size];
        weights[state] = 1.0;
        Self { weights }
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0);
        Self {
            weights: vec![1.0 / size as f64; size],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    /// `μ(f)`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.weights.len());
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// `μK`, renormalized when `K` is stochastic.
    pub fn push_forward(&self, kernel: &TransitionKernel) -> Result<Self> {
        let out = apply_kernel(&SignedVector::from(self.clone()), kernel)?;
        if kernel.is_stochastic() {
            Self::from_unnormalized(out.into_vec())
        } else {
            Err(FkError::ModelMismatch(
                "push_forward needs a stochastic kernel".into(),
            ))
        }
    }
}

impl AsRef<[f64]> for ProbabilityVector {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

/// A finite signed measure (or, read the other way, a bounded function).
#[derive(Clone, Debug, PartialEq)]
pub struct SignedVector {
    values: Vec<f64>,
}

impl SignedVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl From<ProbabilityVector> for SignedVector {
    fn from(p: ProbabilityVector) -> Self {
        Self { values: p.weights }
    }
}

impl AsRef<[f64]> for SignedVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// A square nonnegative matrix acting on measures from the right. When
/// `stochastic` is set, every row is a probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionKernel {
    matrix: DMatrix<f64>,
    stochastic: bool,
}

impl TransitionKernel {
    /// Validates a Markov kernel and renormalizes its rows exactly.
    pub fn stochastic(mut matrix: DMatrix<f64>) -> Result<Self> {
        Self::check_nonnegative(&matrix)?;
        for (row, mut r) in matrix.row_iter_mut().enumerate() {
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(FkError::NotStochastic { row, sum });
            }
            r /= sum;
        }
        Ok(Self {
            matrix,
            stochastic: true,
        })
    }

    /// A nonnegative (unnormalized) kernel such as a Feynman-Kac semigroup.
    pub fn nonnegative(matrix: DMatrix<f64>) -> Result<Self> {
        Self::check_nonnegative(&matrix)?;
        Ok(Self {
            matrix,
            stochastic: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::stochastic(matrix_from_rows(rows)?)
    }

    pub fn identity(size: usize) -> Self {
        Self {
            matrix: DMatrix::identity(size, size),
            stochastic: true,
        }
    }

    fn check_nonnegative(matrix: &DMatrix<f64>) -> Result<()> {
        if !matrix.is_square() {
            return Err(FkError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        for i in 0..matrix.nrows() {
            for j in 0..matrix.ncols() {
                let v = matrix[(i, j)];
                if !v.is_finite() {
                    return Err(FkError::NonFinite(i * matrix.ncols() + j));
                }
                if v < 0.0 {
                    return Err(FkError::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.matrix.row(i).iter().copied().collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    /// `K₁K₂` (apply `self` first).
    pub fn then(&self, next: &TransitionKernel) -> Result<TransitionKernel> {
        check_len(self.size(), next.size())?;
        let product = &self.matrix * &next.matrix;
        if self.stochastic && next.stochastic {
            Self::stochastic(product)
        } else {
            Self::nonnegative(product)
        }
    }

    /// `K(f)(x) = Σ_y K(x,y) f(y)`.
    pub fn apply_function(&self, f: &[f64]) -> Vec<f64> {
        debug_assert_eq!(f.len(), self.size());
        self.matrix
            .row_iter()
            .map(|r| r.iter().zip(f).map(|(k, v)| k * v).sum())
            .collect()
    }
}

/// Square matrix from row vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(FkError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    for r in rows {
        check_len(n, r.len())?;
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// A bounded potential (`𝒱_t` or `log G_n`, or a weight table such as `G_n`)
/// with its range cached.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialVector {
    values: Vec<f64>,
    min: f64,
    max: f64,
}

impl PotentialVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FkError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        check_finite(&values)?;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { values, min, max })
    }

    pub fn constant(size: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; size])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// `‖V‖ = sup |V|`.
    pub fn sup_norm(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }

    pub fn oscillation(&self) -> f64 {
        self.max - self.min
    }

    /// `V + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            min: self.min + c,
            max: self.max + c,
        }
    }

    /// `e^{s·V}` entrywise.
    pub fn exp_scaled(&self, scale: f64) -> Vec<f64> {
        self.values.iter().map(|v| (v * scale).exp()).collect()
    }

    /// `log G` of a positive weight table.
    pub fn log_of(weights: &[f64]) -> Result<Self> {
        if let Some((i, &g)) = weights.iter().enumerate().find(|(_, g)| !(**g > 0.0)) {
            return Err(FkError::SignViolation {
                case: "potential weight",
                requirement: "strictly positive entries",
                state: i,
                value: g,
            });
        }
        Self::new(weights.iter().map(|g| g.ln()).collect())
    }
}

impl AsRef<[f64]> for PotentialVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `Ψ_G(μ)(x) = μ(x) G(x) / μ(G)` for nonnegative weights `G`.
pub fn boltzmann_gibbs(mu: &ProbabilityVector, g: &[f64]) -> Result<ProbabilityVector> {
    check_len(mu.len(), g.len())?;
    check_finite(g)?;
    if let Some((i, &w)) = g.iter().enumerate().find(|(_, w)| **w < 0.0) {
        return Err(FkError::SignViolation {
            case: "Boltzmann-Gibbs transform",
            requirement: "nonnegative weights",
            state: i,
            value: w,
        });
    }
    let weighted: Vec<f64> = mu.as_slice().iter().zip(g).map(|(m, w)| m * w).collect();
    let total: f64 = weighted.iter().sum();
    if !(total > WEIGHT_FLOOR) {
        return Err(FkError::DegenerateWeight(total));
    }
    Ok(ProbabilityVector::renormalized(weighted, total))
}

/// `(μK)(y) = Σ_x μ(x) K(x,y)`.
pub fn apply_kernel(mu: &SignedVector, kernel: &TransitionKernel) -> Result<SignedVector> {
    check_len(kernel.size(), mu.len())?;
    let m = kernel.matrix();
    let values = (0..m.ncols())
        .map(|j| {
            mu.as_slice()
                .iter()
                .enumerate()
                .map(|(i, w)| w * m[(i, j)])
                .sum()
        })
        .collect();
    Ok(SignedVector { values })
}

/// `‖μ − ν‖_tv = ½ Σ |μ(x) − ν(x)|`.
pub fn tv_distance(mu: impl AsRef<[f64]>, nu: impl AsRef<[f64]>) -> Result<f64> {
    let (a, b) = (mu.as_ref(), nu.as_ref());
    check_len(a.len(), b.len())?;
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Dobrushin coefficient `β(K) = max_{x,y} ‖K(x,·) − K(y,·)‖_tv`.
pub fn dobrushin(kernel: &TransitionKernel) -> Result<f64> {
    if !kernel.is_stochastic() {
        let sums = kernel.row_sums();
        let (row, sum) = sums
            .iter()
            .copied()
            .enumerate()
            .find(|(_, s)| (s - 1.0).abs() > NORMALIZATION_TOL)
            .unwrap_or((0, sums[0]));
        return Err(FkError::NotStochastic { row, sum });
    }
    let rows: Vec<Vec<f64>> = (0..kernel.size()).map(|i| kernel.row(i)).collect();
    let mut beta: f64 = 0.0;
    for x in 0..rows.len() {
        for y in (x + 1)..rows.len() {
            beta = beta.max(tv_distance(&rows[x], &rows[y])?);
        }
    }
    Ok(beta.min(1.0))
}

/// `osc(f) = max f − min f` (zero for an empty slice).
pub fn oscillation(f: &[f64]) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = f.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts1_kernel() -> TransitionKernel {
        TransitionKernel::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn boltzmann_gibbs_examples() {
        let mu = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let out = boltzmann_gibbs(&mu, &[1.0, 2.0]).unwrap();
        assert!(close(out.as_slice(), &[1.0 / 3.0, 2.0 / 3.0], 1e-15));

        let mu = ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let out = boltzmann_gibbs(&mu, &[4.2, 4.2, 4.2]).unwrap();
        assert!(close(out.as_slice(), mu.as_slice(), 1e-15));

        let mu = ProbabilityVector::new(vec![0.25, 0.75]).unwrap();
        let out = boltzmann_gibbs(&mu, &[4.0, 1.0]).unwrap();
        assert!(close(out.as_slice(), &[4.0 / 7.0, 3.0 / 7.0], 1e-15));
    }

    #[test]
    fn boltzmann_gibbs_rejects_degenerate_weight() {
        let mu = ProbabilityVector::dirac(2, 0);
        assert!(matches!(
            boltzmann_gibbs(&mu, &[0.0, 1.0]),
            Err(FkError::DegenerateWeight(_))
        ));
        assert!(matches!(
            boltzmann_gibbs(&mu, &[-1.0, 1.0]),
            Err(FkError::SignViolation { .. })
        ));
    }

    #[test]
    fn apply_kernel_examples() {
        let id = TransitionKernel::identity(3);
        let d0 = SignedVector::from(ProbabilityVector::dirac(3, 0));
        assert_eq!(apply_kernel(&d0, &id).unwrap(), d0);

        let k = ts1_kernel();
        let out = apply_kernel(&SignedVector::new(vec![1.0, 0.0]).unwrap(), &k).unwrap();
        assert!(close(out.as_slice(), &[0.7, 0.3], 1e-15));
        let out = apply_kernel(&SignedVector::new(vec![0.5, 0.5]).unwrap(), &k).unwrap();
        assert!(close(out.as_slice(), &[0.55, 0.45], 1e-15));

        let bad = SignedVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            apply_kernel(&bad, &k),
            Err(FkError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tv_examples() {
        let mu = [0.2, 0.8];
        assert_eq!(tv_distance(mu, mu).unwrap(), 0.0);
        assert_eq!(tv_distance([1.0, 0.0], [0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance([0.7, 0.3], [0.4, 0.6]).unwrap() - 0.3).abs() < 1e-15);
        assert!(tv_distance([1.0], [0.5, 0.5]).is_err());
    }

    #[test]
    fn dobrushin_examples() {
        let rank_one = TransitionKernel::from_rows(&[vec![0.2, 0.8], vec![0.2, 0.8]]).unwrap();
        assert_eq!(dobrushin(&rank_one).unwrap(), 0.0);
        assert_eq!(dobrushin(&TransitionKernel::identity(3)).unwrap(), 1.0);
        assert!((dobrushin(&ts1_kernel()).unwrap() - 0.3).abs() < 1e-15);

        let q = TransitionKernel::nonnegative(DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.8, 1.2]))
            .unwrap();
        assert!(matches!(dobrushin(&q), Err(FkError::NotStochastic { row: 1, .. })));
    }

    #[test]
    fn oscillation_examples() {
        assert_eq!(oscillation(&[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(oscillation(&[0.0, 1.0]), 1.0);
        assert_eq!(oscillation(&[-2.0, 3.0, 5.0]), 7.0);
    }

    #[test]
    fn kernel_validation_names_the_row() {
        let err = TransitionKernel::from_rows(&[vec![0.5, 0.5], vec![0.6, 0.3]]).unwrap_err();
        assert!(matches!(err, FkError::NotStochastic { row: 1, .. }));
        let err = TransitionKernel::from_rows(&[vec![1.2, -0.2], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, FkError::NegativeEntry { row: 0, col: 1, .. }));
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbabilityVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbabilityVector::new(vec![f64::NAN, 1.0]).is_err());
        let p = ProbabilityVector::from_counts(&[1, 3]).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
    }
}
