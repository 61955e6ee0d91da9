use fkjump::measures::{tv_distance, PotentialVector, ProbabilityVector, TransitionKernel};
use fkjump::oracle::{
    ct_exact_flow, flow_discrete, flow_discrete_trajectory, mesh_flow, mesh_trajectory, mixing_rho, propagate,
    semigroup, semigroup_matrix, variance_constant, variance_constant_terms, uniform_recycling_flow, FkModel, FkModelCtmc,
    FkModelDiscrete, MeshSchedule, MeshedModel,
};
use fkjump::zoo;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_model() -> impl Strategy<Value = FkModelDiscrete> {
    (any::<u64>(), 2usize..6, 1u64..7).prop_map(|(seed, d, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        zoo::random_discrete_model(&mut rng, d, n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn discrete_mesh_flow_is_exact(model in random_model(), m in prop::sample::select(vec![1u32, 2, 5, 10])) {
        let mesh = MeshSchedule::new(m).unwrap();
        let traj = mesh_trajectory(&MeshedModel::from_discrete(&model, mesh), mesh.index_of_integer(model.horizon())).unwrap();
        for (n, (gamma, eta)) in flow_discrete_trajectory(&model, model.horizon()).unwrap().into_iter().enumerate() {
            let k = mesh.index_of_integer(n as u64) as usize;
            prop_assert!(tv_distance(&traj.measures[k], &eta).unwrap() < 1e-12);
            prop_assert!(gamma > 0.0);
            prop_assert!((traj.masses[k] / gamma - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn semigroup_composes(model in random_model()) {
        let n = model.horizon();
        for k in 0..=n {
            for j in k..=n {
                let lhs = semigroup_matrix(&model, k, n).unwrap();
                let rhs = semigroup_matrix(&model, k, j).unwrap() * semigroup_matrix(&model, j, n).unwrap();
                let scale = lhs.abs().max();
                prop_assert!((lhs - rhs).abs().max() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn beta_is_the_worst_dirac_pair(model in random_model()) {
        let n = model.horizon();
        let d = model.state_count();
        for k in 0..n {
            let b = semigroup(&model, k, n).unwrap();
            prop_assert!(b.g >= 1.0 && (0.0..=1.0).contains(&b.beta));
            let mut worst: f64 = 0.0;
            for x in 0..d {
                for y in 0..d {
                    let px = propagate(&model, k, n, &ProbabilityVector::dirac(d, x)).unwrap();
                    let py = propagate(&model, k, n, &ProbabilityVector::dirac(d, y)).unwrap();
                    worst = worst.max(tv_distance(&px, &py).unwrap());
                }
            }
            prop_assert!((worst - b.beta).abs() < 1e-12);
        }
    }
}

#[test]
fn ts1_flow_examples() {
    let (gamma, eta) = flow_discrete(&zoo::ts1(), 1).unwrap();
    assert_eq!(gamma, 1.0);
    assert!(tv_distance(&eta, [0.7, 0.3]).unwrap() < 1e-15);
    let model = zoo::ts1_with_initial(ProbabilityVector::uniform(2), 4);
    let (gamma, eta) = flow_discrete(&model, 1).unwrap();
    assert!((gamma - 1.5).abs() < 1e-15);
    assert!(tv_distance(&eta, [0.5, 0.5]).unwrap() < 1e-15);
}

#[test]
fn unit_potential_gives_chain_marginals() {
    let k = zoo::mix1_kernel();
    let model = FkModelDiscrete::homogeneous(ProbabilityVector::dirac(5, 0), k.clone(), PotentialVector::constant(5, 1.0).unwrap(), 6).unwrap();
    let mut law = ProbabilityVector::dirac(5, 0);
    for n in 1..=6 {
        law = law.push_forward(&k).unwrap();
        let (gamma, eta) = flow_discrete(&model, n).unwrap();
        assert!((gamma - 1.0).abs() < 1e-14);
        assert!(tv_distance(&eta, &law).unwrap() < 1e-14);
        assert!((semigroup(&model, 0, n).unwrap().g - 1.0).abs() < 1e-14);
    }
}

#[test]
fn ts1_variance_constant_from_semigroup_pieces() {
    // Each term is g_{k,n}³ g_{k,k+1}³ (‖log G_k‖ ∨ 1)² β(P_{k,n}) with ‖log 2‖ < 1.
    let model = zoo::ts1();
    let n = 2;
    let mut expected = 0.0;
    for k in 0..n {
        let s = semigroup(&model, k, n).unwrap();
        let s1 = semigroup(&model, k, k + 1).unwrap();
        expected += s.g.powi(3) * s1.g.powi(3) * s.beta;
    }
    assert!((variance_constant(&model, n).unwrap() - expected).abs() < 1e-12);
    assert_eq!(variance_constant_terms(&model, n).unwrap().len(), 2);
    assert_eq!(variance_constant(&model, 0).unwrap(), 0.0);
}

#[test]
fn rank_one_kernel_has_zero_structural_constant() {
    let k = TransitionKernel::from_rows(&[vec![0.2, 0.8], vec![0.2, 0.8]]).unwrap();
    let model = FkModelDiscrete::homogeneous(ProbabilityVector::dirac(2, 0), k, PotentialVector::new(vec![1.0, 3.0]).unwrap(), 4).unwrap();
    for n in 0..=4 {
        assert_eq!(variance_constant(&model, n).unwrap(), 0.0);
    }
}

#[test]
fn mix1_stability_with_unit_lag() {
    let model = zoo::mix1();
    let rho = mixing_rho(model.kernel(0));
    assert!((rho - 0.25).abs() < 1e-15);
    for n in 0..=model.horizon() {
        let mut prev = 1.0;
        for k in (0..=n).rev() {
            let beta = semigroup(&model, k, n).unwrap().beta;
            assert!(beta <= prev + 1e-15);
            assert!(beta <= (1.0 - rho).powi((n - k) as i32) + 1e-15);
            prev = beta;
        }
    }
}

#[test]
fn zero_potential_ct_flow_is_the_chain_law() {
    let model = zoo::ct1().without_potential();
    for t in [0.0, 0.3, 1.0, 2.0] {
        let (mass, mu) = ct_exact_flow(&model, t).unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
        let want = ProbabilityVector::dirac(3, 0).push_forward(&fkjump::oracle::markov_exponential(&zoo::ct1_generator(), t).unwrap()).unwrap();
        assert!(tv_distance(&mu, &want).unwrap() < 1e-12);
    }
    let mesh = MeshSchedule::new(8).unwrap();
    let got = mesh_flow(&FkModel::Ctmc(model.clone()), mesh, 8).unwrap();
    assert!(tv_distance(&got, &ct_exact_flow(&model, 1.0).unwrap().1).unwrap() < 1e-12);
}

#[test]
fn frozen_generator_gives_pure_reweighting() {
    let v = PotentialVector::new(vec![0.0, 0.3, 0.6]).unwrap();
    let model = FkModelCtmc::homogeneous(ProbabilityVector::uniform(3), DMatrix::zeros(3, 3), v, 2.0).unwrap();
    let (mass, mu) = ct_exact_flow(&model, 1.5).unwrap();
    let w: Vec<f64> = [0.0f64, 0.3, 0.6].iter().map(|v| (1.5 * v).exp()).collect();
    let total: f64 = w.iter().sum();
    assert!((mass - total / 3.0).abs() < 1e-12);
    for (x, wx) in mu.as_slice().iter().zip(&w) {
        assert!((x - wx / total).abs() < 1e-12);
    }
}

fn euler_product(steps: usize) -> Vec<f64> {
    let l = zoo::ct1_generator();
    let v = [0.0, 0.3, 0.6];
    let h = 1.0 / steps as f64;
    let mut nu = [1.0, 0.0, 0.0];
    for _ in 0..steps {
        let mut next = [0.0; 3];
        for y in 0..3 {
            for x in 0..3 {
                let a = if x == y { 1.0 + h * (l[(x, y)] + v[x]) } else { h * l[(x, y)] };
                next[y] += nu[x] * a;
            }
        }
        nu = next;
    }
    nu.to_vec()
}

// Independent oracle: products of first-order steps (I + (L + diag 𝒱)/M) up
// to t = 1. The plain product at M = 2^14 is only O(1/M) accurate, so one
// Richardson step against M = 2^13 is applied before normalizing.
#[test]
fn ct1_exact_flow_matches_fine_euler_product() {
    let fine = euler_product(1 << 14);
    let coarse = euler_product(1 << 13);
    let nu: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| 2.0 * f - c).collect();
    let total: f64 = nu.iter().sum();
    let euler: Vec<f64> = nu.iter().map(|x| x / total).collect();
    let (mass, exact) = ct_exact_flow(&zoo::ct1(), 1.0).unwrap();
    assert!(tv_distance(&exact, &euler).unwrap() < 1e-6);
    assert!((mass / total - 1.0).abs() < 1e-6);
    let plain = ProbabilityVector::from_unnormalized(fine).unwrap();
    assert!(tv_distance(&exact, &plain).unwrap() < 1e-4);
}

// Independent oracle: the uniform-recycling recursion written as a loop,
// μ̃' = [μ̃ ⊙ e^{−𝒰/m} + (1 − μ̃(e^{−𝒰/m})) μ̃] exp(L/m).
#[test]
fn uniform_recycling_matches_straight_loop() {
    let model = zoo::ct1().shifted_to_nonpositive();
    let m = 8u32;
    let u = [0.6, 0.3, 0.0];
    let step = (zoo::ct1_generator() / m as f64).exp();
    let mut mu = [1.0, 0.0, 0.0];
    for _ in 0..m {
        let keep: Vec<f64> = (0..3).map(|x| (-u[x] / m as f64).exp()).collect();
        let kept: f64 = (0..3).map(|x| mu[x] * keep[x]).sum();
        let selected: Vec<f64> = (0..3).map(|x| mu[x] * keep[x] + (1.0 - kept) * mu[x]).collect();
        let mut next = [0.0; 3];
        for y in 0..3 {
            for x in 0..3 {
                next[y] += selected[x] * step[(x, y)];
            }
        }
        mu = next;
    }
    let got = uniform_recycling_flow(&FkModel::Ctmc(model), MeshSchedule::new(m).unwrap(), 8).unwrap();
    assert!(tv_distance(&got, mu).unwrap() < 1e-12);
}

#[test]
fn uniform_recycling_without_potential_is_the_mesh_flow() {
    let model = FkModel::Ctmc(zoo::ct1().without_potential());
    let mesh = MeshSchedule::new(4).unwrap();
    for k in [0, 3, 8] {
        let a = uniform_recycling_flow(&model, mesh, k).unwrap();
        let b = mesh_flow(&model, mesh, k).unwrap();
        assert!(tv_distance(&a, &b).unwrap() < 1e-15);
    }
}

#[test]
fn ct1_mesh_gap_decreases() {
    let gaps = fkjump::verify::ct1_mesh_gaps(&[4, 8, 16, 32, 64, 128, 256]).unwrap();
    assert!(gaps.windows(2).all(|w| w[1].1 < w[0].1));
}
