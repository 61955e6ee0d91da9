use nalgebra::{DMatrix, DVector};

use crate::error::{FkError, Result};
use crate::measures::{boltzmann_gibbs, ProbabilityVector};
use crate::selection::{build_selection_kernel, SelectionCase};

use super::mesh::{MeshSchedule, MeshedModel};
use super::model::{FkModel, FkModelCtmc, FkModelDiscrete};

/// `(γ_n(1), η_n)` for every `n ≤ horizon`.
pub fn flow_discrete_trajectory(model: &FkModelDiscrete, n: u64) -> Result<Vec<(f64, ProbabilityVector)>> {
    model.check_step(n)?;
    let mut eta = model.initial_law().clone();
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push((mass, eta.clone()));
    for p in 0..n {
        let g = model.weights(p).values();
        mass *= eta.expectation(g);
        eta = boltzmann_gibbs(&eta, g)?.push_forward(model.kernel(p))?;
        out.push((mass, eta.clone()));
    }
    Ok(out)
}

/// `(γ_n(1), η_n)`.
pub fn flow_discrete(model: &FkModelDiscrete, n: u64) -> Result<(f64, ProbabilityVector)> {
    Ok(flow_discrete_trajectory(model, n)?.pop().expect("trajectory is nonempty"))
}

/// The mesh recursion `μ_{k+1} = Ψ_{𝒢_{t_k}}(μ_k) ℳ_{t_k,t_{k+1}}` with the
/// running mass `Π_{p<k} μ_p(𝒢_{t_p})`.
#[derive(Clone, Debug)]
pub struct MeshTrajectory {
    pub measures: Vec<ProbabilityVector>,
    pub masses: Vec<f64>,
}

pub fn mesh_trajectory(meshed: &MeshedModel, k: u64) -> Result<MeshTrajectory> {
    meshed.check_index(k)?;
    let mut mu = meshed.initial_law().clone();
    let mut mass = 1.0;
    let mut measures = vec![mu.clone()];
    let mut masses = vec![mass];
    for p in 0..k {
        let g = meshed.weights(p);
        mass *= mu.expectation(&g);
        mu = boltzmann_gibbs(&mu, &g)?;
        if let Some(kernel) = meshed.mutation(p) {
            mu = mu.push_forward(kernel)?;
        }
        measures.push(mu.clone());
        masses.push(mass);
    }
    Ok(MeshTrajectory { measures, masses })
}

/// `μ^{(m)}_{t_k}`.
pub fn mesh_flow(model: &FkModel, mesh: MeshSchedule, k: u64) -> Result<ProbabilityVector> {
    let meshed = MeshedModel::new(model, mesh)?;
    Ok(mesh_trajectory(&meshed, k)?.measures.pop().expect("nonempty"))
}

/// `(ν_t(1), μ_t)` with `ν_t = μ₀ exp((L + diag 𝒱) t)`, integrated piece by
/// piece and renormalized after every piece.
pub fn ct_exact_flow(model: &FkModelCtmc, t: f64) -> Result<(f64, ProbabilityVector)> {
    if !(0.0..=model.horizon() + 1e-12).contains(&t) {
        return Err(FkError::TimeOutOfRange {
            time: t,
            horizon: model.horizon(),
        });
    }
    let mut nu = DVector::from_column_slice(model.initial_law().as_slice());
    let mut log_mass = 0.0;
    for (i, piece) in model.pieces().iter().enumerate() {
        if piece.start >= t {
            break;
        }
        let end = model.pieces().get(i + 1).map_or(t, |next| next.start.min(t));
        let dt = end - piece.start;
        let twisted = &piece.generator + DMatrix::from_diagonal(&DVector::from_column_slice(piece.potential.values()));
        let e = (twisted * dt).exp();
        nu = e.transpose() * nu;
        nu.iter_mut().for_each(|v| *v = v.max(0.0));
        let s = nu.sum();
        log_mass += s.ln();
        nu /= s;
    }
    let mu = ProbabilityVector::from_unnormalized(nu.iter().copied().collect())?;
    Ok((log_mass.exp(), mu))
}

/// `μ̃_{k+1} = μ̃_k S̃_{t_k,μ̃_k} ℳ_{t_k,t_{k+1}}` for all `k' ≤ k`.
pub fn uniform_recycling_trajectory(meshed: &MeshedModel, k: u64) -> Result<Vec<ProbabilityVector>> {
    meshed.check_index(k)?;
    for p in meshed.distinct_potentials() {
        if let Some((state, &value)) = p.values().iter().enumerate().find(|(_, v)| **v > 0.0) {
            return Err(FkError::WrongPotentialSign { state, value });
        }
    }
    let mut mu = meshed.initial_law().clone();
    let mut out = vec![mu.clone()];
    for p in 0..k {
        let s = build_selection_kernel(SelectionCase::UniformRecycling, meshed.potential(p), meshed.m(), &mu)?;
        mu = mu.push_forward(&s.kernel)?;
        if let Some(kernel) = meshed.mutation(p) {
            mu = mu.push_forward(kernel)?;
        }
        out.push(mu.clone());
    }
    Ok(out)
}

/// `μ̃^{(m)}_{t_k}`.
pub fn uniform_recycling_flow(model: &FkModel, mesh: MeshSchedule, k: u64) -> Result<ProbabilityVector> {
    let meshed = MeshedModel::new(model, mesh)?;
    Ok(uniform_recycling_trajectory(&meshed, k)?.pop().expect("nonempty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{tv_distance, PotentialVector, TransitionKernel};

    fn ts1(mu0: ProbabilityVector) -> FkModelDiscrete {
        FkModelDiscrete::homogeneous(
            mu0,
            TransitionKernel::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap(),
            PotentialVector::new(vec![1.0, 2.0]).unwrap(),
            3,
        )
        .unwrap()
    }

    #[test]
    fn ts1_one_step() {
        let (mass, eta) = flow_discrete(&ts1(ProbabilityVector::dirac(2, 0)), 1).unwrap();
        assert_eq!(mass, 1.0);
        assert!(tv_distance(&eta, [0.7, 0.3]).unwrap() < 1e-15);

        let (mass, eta) = flow_discrete(&ts1(ProbabilityVector::uniform(2)), 1).unwrap();
        assert!((mass - 1.5).abs() < 1e-15);
        assert!(tv_distance(&eta, [0.5, 0.5]).unwrap() < 1e-15);
    }

    #[test]
    fn horizon_enforced() {
        assert!(matches!(
            flow_discrete(&ts1(ProbabilityVector::uniform(2)), 4),
            Err(FkError::HorizonExceeded { requested: 4, horizon: 3 })
        ));
    }

    #[test]
    fn pure_reweighting_without_generator() {
        let v = PotentialVector::new(vec![0.0, 0.5, -1.0]).unwrap();
        let mu0 = ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let model = FkModelCtmc::homogeneous(mu0.clone(), DMatrix::zeros(3, 3), v.clone(), 2.0).unwrap();
        let (mass, mu) = ct_exact_flow(&model, 1.5).unwrap();
        let w = v.exp_scaled(1.5);
        let expected = boltzmann_gibbs(&mu0, &w).unwrap();
        assert!(tv_distance(&mu, &expected).unwrap() < 1e-14);
        assert!((mass - mu0.expectation(&w)).abs() < 1e-13);
    }

    #[test]
    fn discrete_mesh_mass_telescopes() {
        let model = ts1(ProbabilityVector::uniform(2));
        let meshed = MeshedModel::from_discrete(&model, MeshSchedule::new(4).unwrap());
        let traj = mesh_trajectory(&meshed, 12).unwrap();
        let exact = flow_discrete_trajectory(&model, 3).unwrap();
        for (n, (mass, eta)) in exact.iter().enumerate() {
            assert!((traj.masses[4 * n] - mass).abs() < 1e-13 * mass);
            assert!(tv_distance(&traj.measures[4 * n], eta).unwrap() < 1e-13);
        }
    }

    #[test]
    fn uniform_recycling_requires_nonpositive_potential() {
        let model = FkModel::Discrete(ts1(ProbabilityVector::uniform(2)));
        assert!(matches!(
            uniform_recycling_flow(&model, MeshSchedule::new(2).unwrap(), 2),
            Err(FkError::WrongPotentialSign { state: 1, .. })
        ));
    }
}
