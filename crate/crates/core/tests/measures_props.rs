use fkjump::measures::{
    apply_kernel, boltzmann_gibbs, dobrushin, oscillation, tv_distance, ProbabilityVector, SignedVector, TransitionKernel,
};
use proptest::prelude::*;

fn law(d: usize) -> impl Strategy<Value = ProbabilityVector> {
    prop::collection::vec(0.0f64..1.0, d)
        .prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| ProbabilityVector::from_unnormalized(w).unwrap())
}

fn kernel(d: usize) -> impl Strategy<Value = TransitionKernel> {
    prop::collection::vec(law(d), d).prop_map(|rows| {
        TransitionKernel::from_rows(&rows.into_iter().map(|r| r.into_vec()).collect::<Vec<_>>()).unwrap()
    })
}

fn triple() -> impl Strategy<Value = (ProbabilityVector, ProbabilityVector, ProbabilityVector, TransitionKernel)> {
    (2usize..7).prop_flat_map(|d| (law(d), law(d), law(d), kernel(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn stochastic_kernels_preserve_mass((mu, _, _, k) in triple()) {
        let out = apply_kernel(&SignedVector::from(mu), &k).unwrap();
        prop_assert!((out.mass() - 1.0).abs() < 1e-12);
        prop_assert!(ProbabilityVector::new(out.into_vec()).is_ok());
    }

    #[test]
    fn contraction((mu, nu, _, k) in triple()) {
        let mk = mu.push_forward(&k).unwrap();
        let nk = nu.push_forward(&k).unwrap();
        let lhs = tv_distance(&mk, &nk).unwrap();
        let rhs = dobrushin(&k).unwrap() * tv_distance(&mu, &nu).unwrap();
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn tv_is_a_metric((a, b, c, _) in triple()) {
        let ab = tv_distance(&a, &b).unwrap();
        prop_assert!((ab - tv_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= tv_distance(&a, &c).unwrap() + tv_distance(&c, &b).unwrap() + 1e-12);
        prop_assert!(tv_distance(&a, &a).unwrap() == 0.0);
    }

    #[test]
    fn boltzmann_gibbs_ignores_scale((mu, g, _, _) in triple(), c in 1e-3f64..1e3) {
        let g: Vec<f64> = g.as_slice().iter().map(|x| x + 0.01).collect();
        let scaled: Vec<f64> = g.iter().map(|x| c * x).collect();
        let a = boltzmann_gibbs(&mu, &g).unwrap();
        let b = boltzmann_gibbs(&mu, &scaled).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    // On a finite space the half-L1 distance is the sup of |μ(f) − ν(f)| over
    // osc(f) ≤ 1, attained at the indicator of {μ > ν}.
    #[test]
    fn tv_equals_oscillation_sup((mu, nu, _, _) in triple(), fs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 20)) {
        let d = mu.len();
        let tv = tv_distance(&mu, &nu).unwrap();
        let ind: Vec<f64> = (0..d).map(|i| if mu.as_slice()[i] > nu.as_slice()[i] { 1.0 } else { 0.0 }).collect();
        prop_assert!(((mu.expectation(&ind) - nu.expectation(&ind)).abs() - tv).abs() < 1e-12);
        for f in fs {
            let f = &f[..d];
            let osc = oscillation(f);
            if osc > 0.0 {
                let gap = (mu.expectation(f) - nu.expectation(f)).abs() / osc;
                prop_assert!(gap <= tv + 1e-12);
            }
        }
    }
}
