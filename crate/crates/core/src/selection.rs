//! Selection kernels `S_{t_n,μ}` solving `μS = Ψ_{exp(𝒱/m)}(μ)`, their jump
//! generators, and the first-order expansion `S = Id + L̂/m + R̂/m²`.
//!
//! Matrices are built densely from a snapshot of `μ`; they are rebuilt for
//! every new measure.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::measures::{
    boltzmann_gibbs, tv_distance, PotentialVector, ProbabilityVector, TransitionKernel, WEIGHT_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectionCase {
    /// `𝒱 = −𝒰 ≤ 0`: accept with `e^{−𝒰(x)/m}`, recycle from `Ψ_{e^{−𝒰/m}}(μ)`.
    #[serde(rename = "case1", alias = "Case1_NegPotential")]
    Case1,
    /// `𝒱 ≥ 0`: accept with `1/μ(e^{𝒱/m})`, recycle from `Ψ_{e^{𝒱/m}−1}(μ)`.
    #[serde(rename = "case2", alias = "Case2_PosPotential")]
    Case2,
    /// Any bounded `𝒱`: jump only towards states with a larger potential.
    #[serde(rename = "case3", alias = "Case3_PairwisePositive")]
    Case3,
    /// Case 1 with the recycling law replaced by `μ` itself.
    #[serde(rename = "uniform-recycling", alias = "UniformRecycling")]
    UniformRecycling,
}

impl SelectionCase {
    pub const ALL: [SelectionCase; 4] = [
        SelectionCase::Case1,
        SelectionCase::Case2,
        SelectionCase::Case3,
        SelectionCase::UniformRecycling,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SelectionCase::Case1 => "case1",
            SelectionCase::Case2 => "case2",
            SelectionCase::Case3 => "case3",
            SelectionCase::UniformRecycling => "uniform-recycling",
        }
    }

    /// Checks the sign convention of `v` for this case.
    pub fn check_potential(&self, v: &PotentialVector) -> Result<()> {
        let values = v.values();
        let bad = match self {
            SelectionCase::Case1 | SelectionCase::UniformRecycling => values
                .iter()
                .position(|&x| x > 0.0)
                .map(|i| (i, "nonpositive potential (V = -U, U >= 0)")),
            SelectionCase::Case2 => values
                .iter()
                .position(|&x| x < 0.0)
                .map(|i| (i, "nonnegative potential")),
            SelectionCase::Case3 => None,
        };
        match bad {
            Some((state, requirement)) => Err(FkError::SignViolation {
                case: self.name(),
                requirement,
                state,
                value: values[state],
            }),
            None => Ok(()),
        }
    }
}

impl std::fmt::Display for SelectionCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SelectionCase {
    type Err = FkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "case1" | "1" => Ok(SelectionCase::Case1),
            "case2" | "2" => Ok(SelectionCase::Case2),
            "case3" | "3" => Ok(SelectionCase::Case3),
            "uniform-recycling" | "uniform" => Ok(SelectionCase::UniformRecycling),
            other => Err(FkError::Config(format!("unknown selection case '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SelectionKernelInstance {
    pub kernel: TransitionKernel,
    pub case: SelectionCase,
    pub m: u32,
    pub mu_snapshot: ProbabilityVector,
}

impl SelectionKernelInstance {
    /// `‖μS − Ψ_{exp(𝒱/m)}(μ)‖_tv` for the potential the kernel was built from.
    pub fn transport_residual(&self, v: &PotentialVector) -> Result<f64> {
        let target = boltzmann_gibbs(&self.mu_snapshot, &v.exp_scaled(1.0 / self.m as f64))?;
        let image = self.mu_snapshot.push_forward(&self.kernel)?;
        tv_distance(image, target)
    }
}

/// Each row `(1 − a(x)) δ_x + a(x) ν_x`.
fn assemble(accept_reject: &[(f64, Option<Vec<f64>>)]) -> Result<TransitionKernel> {
    let d = accept_reject.len();
    let mut s = DMatrix::zeros(d, d);
    for (x, (reject, recycle)) in accept_reject.iter().enumerate() {
        s[(x, x)] += 1.0 - reject;
        if let Some(nu) = recycle {
            for (y, w) in nu.iter().enumerate() {
                s[(x, y)] += reject * w;
            }
        }
    }
    TransitionKernel::stochastic(s)
}

/// Per-state rejection probability and recycling law of `S_{t,μ}` with
/// `G = exp(𝒱/m)`.
pub fn rejection_structure(
    case: SelectionCase,
    v: &PotentialVector,
    m: u32,
    mu: &ProbabilityVector,
) -> Result<Vec<(f64, Option<Vec<f64>>)>> {
    if v.len() != mu.len() {
        return Err(FkError::DimensionMismatch {
            expected: mu.len(),
            found: v.len(),
        });
    }
    case.check_potential(v)?;
    let g = v.exp_scaled(1.0 / m as f64);
    let d = g.len();
    let mu_s = mu.as_slice();
    let out = match case {
        SelectionCase::Case1 => {
            let psi = boltzmann_gibbs(mu, &g)?.into_vec();
            g.iter().map(|gx| (1.0 - gx, Some(psi.clone()))).collect()
        }
        SelectionCase::UniformRecycling => g
            .iter()
            .map(|gx| (1.0 - gx, Some(mu_s.to_vec())))
            .collect(),
        SelectionCase::Case2 => {
            let mu_g = mu.expectation(&g);
            let excess: Vec<f64> = g.iter().map(|x| x - 1.0).collect();
            if mu.expectation(&excess) <= WEIGHT_FLOOR {
                vec![(0.0, None); d]
            } else {
                let psi = boltzmann_gibbs(mu, &excess)?.into_vec();
                vec![(1.0 - 1.0 / mu_g, Some(psi)); d]
            }
        }
        SelectionCase::Case3 => {
            let mu_g = mu.expectation(&g);
            (0..d)
                .map(|x| {
                    let w: Vec<f64> = g.iter().map(|gy| (gy - g[x]).max(0.0)).collect();
                    let total = mu.expectation(&w);
                    if total <= WEIGHT_FLOOR {
                        Ok((0.0, None))
                    } else {
                        Ok((total / mu_g, Some(boltzmann_gibbs(mu, &w)?.into_vec())))
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(out)
}

/// The finite-space matrix `S_{t,μ}` for the given case.
pub fn build_selection_kernel(
    case: SelectionCase,
    v: &PotentialVector,
    m: u32,
    mu: &ProbabilityVector,
) -> Result<SelectionKernelInstance> {
    let kernel = assemble(&rejection_structure(case, v, m, mu)?)?;
    Ok(SelectionKernelInstance {
        kernel,
        case,
        m,
        mu_snapshot: mu.clone(),
    })
}

/// `L(x,y) = r_x(y) − 1_{x=y} Σ_z r_x(z)` from a rate table.
pub fn generator_from_rates(rates: &DMatrix<f64>) -> DMatrix<f64> {
    let mut l = rates.clone();
    for x in 0..l.nrows() {
        let total: f64 = rates.row(x).sum();
        l[(x, x)] -= total;
    }
    l
}

/// The interacting jump generator `L̂_{t,μ}` of the case.
pub fn jump_generator(case: SelectionCase, v: &PotentialVector, mu: &ProbabilityVector) -> Result<DMatrix<f64>> {
    if v.len() != mu.len() {
        return Err(FkError::DimensionMismatch {
            expected: mu.len(),
            found: v.len(),
        });
    }
    case.check_potential(v)?;
    let vals = v.values();
    let p = mu.as_slice();
    let d = vals.len();
    let rates = DMatrix::from_fn(d, d, |x, y| match case {
        SelectionCase::Case1 | SelectionCase::UniformRecycling => -vals[x] * p[y],
        SelectionCase::Case2 => vals[y] * p[y],
        SelectionCase::Case3 => (vals[y] - vals[x]).max(0.0) * p[y],
    });
    Ok(generator_from_rates(&rates))
}

/// Max-row L1 norm of `R̂ = m²(S − Id − L̂/m)`.
pub fn expansion_remainder(case: SelectionCase, v: &PotentialVector, m: u32, mu: &ProbabilityVector) -> Result<f64> {
    let s = build_selection_kernel(case, v, m, mu)?.kernel;
    let l = jump_generator(case, v, mu)?;
    let d = mu.len();
    let mf = m as f64;
    let r = (s.matrix() - DMatrix::<f64>::identity(d, d) - l / mf) * (mf * mf);
    Ok(r.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// `(L̂⁺, L̂⁻)` with `L̂⁻(x,·) = [𝒱(x) − μ(𝒱)]₋ (μ − δ_x)` and
/// `L̂⁺(x,y) = [𝒱(y) − μ(𝒱)]₊ μ(y)` off the diagonal.
pub fn plus_minus_generator(v: &PotentialVector, mu: &ProbabilityVector) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if v.len() != mu.len() {
        return Err(FkError::DimensionMismatch {
            expected: mu.len(),
            found: v.len(),
        });
    }
    let vals = v.values();
    let p = mu.as_slice();
    let mean = mu.expectation(vals);
    let d = vals.len();
    let plus = DMatrix::from_fn(d, d, |_, y| (vals[y] - mean).max(0.0) * p[y]);
    let minus = DMatrix::from_fn(d, d, |x, y| (mean - vals[x]).max(0.0) * p[y]);
    Ok((generator_from_rates(&plus), generator_from_rates(&minus)))
}

/// `μ(L f)` for a generator `L`.
pub fn generator_correlation(l: &DMatrix<f64>, mu: &ProbabilityVector, f: &[f64]) -> f64 {
    let p = mu.as_slice();
    (0..l.nrows())
        .map(|x| p[x] * (0..l.ncols()).map(|y| l[(x, y)] * f[y]).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> PotentialVector {
        PotentialVector::new(v.to_vec()).unwrap()
    }

    fn prob(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn case1_zero_potential_is_identity() {
        let s = build_selection_kernel(SelectionCase::Case1, &pv(&[0.0, 0.0, 0.0]), 3, &prob(&[0.2, 0.3, 0.5]))
            .unwrap();
        assert_eq!(s.kernel, TransitionKernel::identity(3));
    }

    #[test]
    fn case1_hand_example() {
        let v = pv(&[0.0, -(2.0f64.ln())]);
        let mu = prob(&[0.5, 0.5]);
        let s = build_selection_kernel(SelectionCase::Case1, &v, 1, &mu).unwrap();
        let k = &s.kernel;
        assert!((k.entry(0, 0) - 1.0).abs() < 1e-15);
        assert!((k.entry(1, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((k.entry(1, 1) - 2.0 / 3.0).abs() < 1e-15);
        let image = mu.push_forward(k).unwrap();
        assert!((image.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(s.transport_residual(&v).unwrap() < 1e-15);
    }

    #[test]
    fn case3_constant_potential_is_identity() {
        let s = build_selection_kernel(SelectionCase::Case3, &pv(&[0.7, 0.7]), 2, &prob(&[0.4, 0.6])).unwrap();
        assert_eq!(s.kernel, TransitionKernel::identity(2));
    }

    #[test]
    fn case2_zero_potential_falls_back_to_identity() {
        let v = pv(&[0.0, 0.0]);
        let mu = prob(&[0.4, 0.6]);
        let s = build_selection_kernel(SelectionCase::Case2, &v, 4, &mu).unwrap();
        assert_eq!(s.kernel, TransitionKernel::identity(2));
        assert_eq!(s.transport_residual(&v).unwrap(), 0.0);
    }

    #[test]
    fn sign_conventions_enforced() {
        let mu = prob(&[0.5, 0.5]);
        assert!(matches!(
            build_selection_kernel(SelectionCase::Case1, &pv(&[0.0, 0.1]), 1, &mu),
            Err(FkError::SignViolation { state: 1, .. })
        ));
        assert!(matches!(
            build_selection_kernel(SelectionCase::Case2, &pv(&[-0.1, 0.1]), 1, &mu),
            Err(FkError::SignViolation { state: 0, .. })
        ));
        assert!(build_selection_kernel(SelectionCase::Case3, &pv(&[-0.1, 0.1]), 1, &mu).is_ok());
    }

    #[test]
    fn jump_generator_examples() {
        let mu = prob(&[0.5, 0.5]);
        let l = jump_generator(SelectionCase::Case1, &pv(&[0.0, 0.0]), &mu).unwrap();
        assert!(l.iter().all(|x| *x == 0.0));
        let l = jump_generator(SelectionCase::Case3, &pv(&[0.3, 0.3]), &mu).unwrap();
        assert!(l.iter().all(|x| *x == 0.0));
        let l = jump_generator(SelectionCase::Case1, &pv(&[0.0, -1.0]), &mu).unwrap();
        assert_eq!(l.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(l.row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, -0.5]);
    }

    #[test]
    fn plus_minus_sign_split() {
        let mu = prob(&[0.5, 0.5]);
        let (plus, minus) = plus_minus_generator(&pv(&[1.3, 1.3]), &mu).unwrap();
        assert!(plus.iter().chain(minus.iter()).all(|x| *x == 0.0));
        let (plus, minus) = plus_minus_generator(&pv(&[0.0, 1.0]), &mu).unwrap();
        // [V - 0.5]+ = (0, 0.5) weights the target; [V - 0.5]- = (0.5, 0) the source.
        assert_eq!(plus[(0, 1)], 0.25);
        assert_eq!(plus[(1, 0)], 0.0);
        assert_eq!(minus[(0, 1)], 0.25);
        assert_eq!(minus[(1, 0)], 0.0);
    }

    #[test]
    fn expansion_remainder_vanishes_without_potential() {
        let r = expansion_remainder(SelectionCase::Case1, &pv(&[0.0, 0.0]), 7, &prob(&[0.3, 0.7])).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn case_names_round_trip() {
        for c in SelectionCase::ALL {
            assert_eq!(c.name().parse::<SelectionCase>().unwrap(), c);
        }
    }
}
