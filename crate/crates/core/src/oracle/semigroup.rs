use nalgebra::{DMatrix, DVector};

use crate::error::{FkError, Result};
use crate::measures::{dobrushin, ProbabilityVector, SignedVector, TransitionKernel};

use super::model::FkModelDiscrete;

/// `Q_{k,n}`, its normalization `P_{k,n}`, `g_{k,n}` and `β(P_{k,n})`.
#[derive(Clone, Debug)]
pub struct SemigroupBundle {
    pub q: TransitionKernel,
    pub p: TransitionKernel,
    pub g: f64,
    pub beta: f64,
}

impl SemigroupBundle {
    /// `Q_{k,n}(1)`.
    pub fn mass(&self) -> Vec<f64> {
        self.q.row_sums()
    }
}

/// `Q_{k,n} = Π_{k≤l<n} diag(G_l) M_{l+1}` as a raw matrix.
pub fn semigroup_matrix(model: &FkModelDiscrete, k: u64, n: u64) -> Result<DMatrix<f64>> {
    if k > n {
        return Err(FkError::IndexOrder { k, n });
    }
    model.check_step(n)?;
    let d = model.state_count();
    let mut q = DMatrix::identity(d, d);
    for l in k..n {
        let step = DMatrix::from_diagonal(&DVector::from_column_slice(model.weights(l).values()))
            * model.kernel(l).matrix();
        q *= step;
    }
    Ok(q)
}

pub fn semigroup(model: &FkModelDiscrete, k: u64, n: u64) -> Result<SemigroupBundle> {
    let q = semigroup_matrix(model, k, n)?;
    let mut p = q.clone();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        lo = lo.min(s);
        hi = hi.max(s);
        row /= s;
    }
    let p = TransitionKernel::stochastic(p)?;
    let beta = dobrushin(&p)?;
    Ok(SemigroupBundle {
        q: TransitionKernel::nonnegative(q)?,
        p,
        g: hi / lo,
        beta,
    })
}

/// `Φ_{k,n}(μ) = μQ_{k,n} / μQ_{k,n}(1)`.
pub fn propagate(model: &FkModelDiscrete, k: u64, n: u64, mu: &ProbabilityVector) -> Result<ProbabilityVector> {
    let q = semigroup_matrix(model, k, n)?;
    let out = q.transpose() * DVector::from_column_slice(mu.as_slice());
    ProbabilityVector::from_unnormalized(out.iter().copied().collect())
}

/// One summand of the structural constant, indexed by `k < n`.
#[derive(Clone, Debug)]
pub struct VarianceConstantTerm {
    pub k: u64,
    pub g_kn: f64,
    pub g_k_next: f64,
    pub log_g_norm: f64,
    pub beta: f64,
    pub value: f64,
}

pub fn variance_constant_terms(model: &FkModelDiscrete, n: u64) -> Result<Vec<VarianceConstantTerm>> {
    model.check_step(n)?;
    (0..n)
        .map(|k| {
            let long = semigroup(model, k, n)?;
            let short = semigroup(model, k, k + 1)?;
            let log_g_norm = model.log_potential(k).sup_norm();
            let value = long.g.powi(3) * short.g.powi(3) * log_g_norm.max(1.0).powi(2) * long.beta;
            Ok(VarianceConstantTerm {
                k,
                g_kn: long.g,
                g_k_next: short.g,
                log_g_norm,
                beta: long.beta,
                value,
            })
        })
        .collect()
}

/// `Σ_{k<n} g_{k,n}³ g_{k,k+1}³ (‖log G_k‖ ∨ 1)² β(P_{k,n})`, without the
/// unspecified universal factor.
pub fn variance_constant(model: &FkModelDiscrete, n: u64) -> Result<f64> {
    Ok(variance_constant_terms(model, n)?.iter().map(|t| t.value).sum())
}

/// `Γ_L(f,f) = L(f²) − 2 f L(f)`.
pub fn carre_du_champ(generator: &DMatrix<f64>, f: &SignedVector) -> Result<SignedVector> {
    if generator.nrows() != f.len() || generator.ncols() != f.len() {
        return Err(FkError::DimensionMismatch {
            expected: generator.nrows(),
            found: f.len(),
        });
    }
    let fv = DVector::from_column_slice(f.as_slice());
    let f2 = fv.component_mul(&fv);
    let lf2 = generator * f2;
    let lf = generator * &fv;
    SignedVector::new((0..f.len()).map(|i| lf2[i] - 2.0 * fv[i] * lf[i]).collect())
}

/// Largest `ρ` with `M(x,·) ≥ ρ M(y,·)` for all `x, y`.
pub fn mixing_rho(kernel: &TransitionKernel) -> f64 {
    let d = kernel.size();
    let mut rho: f64 = 1.0;
    for z in 0..d {
        let col: Vec<f64> = (0..d).map(|x| kernel.entry(x, z)).collect();
        let hi = col.iter().copied().fold(0.0, f64::max);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            rho = rho.min(lo / hi);
        }
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::PotentialVector;

    fn ts1() -> FkModelDiscrete {
        FkModelDiscrete::homogeneous(
            ProbabilityVector::dirac(2, 0),
            TransitionKernel::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap(),
            PotentialVector::new(vec![1.0, 2.0]).unwrap(),
            4,
        )
        .unwrap()
    }

    #[test]
    fn empty_product() {
        let b = semigroup(&ts1(), 2, 2).unwrap();
        assert_eq!(b.q.matrix(), &DMatrix::identity(2, 2));
        assert_eq!(b.g, 1.0);
        assert_eq!(b.beta, 1.0);
        assert_eq!(variance_constant(&ts1(), 0).unwrap(), 0.0);
    }

    #[test]
    fn ts1_one_step_semigroup() {
        let b = semigroup(&ts1(), 0, 1).unwrap();
        let q = b.q.matrix();
        let expected = [[0.7, 0.3], [0.8, 1.2]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((q[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
        assert!((b.mass()[0] - 1.0).abs() < 1e-15 && (b.mass()[1] - 2.0).abs() < 1e-15);
        assert!((b.g - 2.0).abs() < 1e-15);
        assert!((b.p.entry(1, 0) - 0.4).abs() < 1e-15);
        assert!((b.beta - 0.3).abs() < 1e-15);
    }

    #[test]
    fn index_order() {
        assert!(matches!(semigroup(&ts1(), 3, 1), Err(FkError::IndexOrder { k: 3, n: 1 })));
    }

    #[test]
    fn carre_du_champ_hand_example() {
        let l = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.5, -0.5]);
        let f = SignedVector::new(vec![0.0, 1.0]).unwrap();
        let g = carre_du_champ(&l, &f).unwrap();
        assert!((g.as_slice()[0] - 1.0).abs() < 1e-15);
        assert!((g.as_slice()[1] - 0.5).abs() < 1e-15);
        let c = SignedVector::new(vec![2.0, 2.0]).unwrap();
        assert!(carre_du_champ(&l, &c).unwrap().as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rho_of_ts1_kernel() {
        let k = TransitionKernel::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        assert!((mixing_rho(&k) - 0.5).abs() < 1e-15);
        assert_eq!(mixing_rho(&TransitionKernel::identity(2)), 0.0);
    }
}
