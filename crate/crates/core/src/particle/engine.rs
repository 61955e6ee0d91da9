use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FkError, Result};
use crate::measures::{ProbabilityVector, WEIGHT_FLOOR};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{Phase, StreamKey};
use crate::selection::SelectionCase;

use super::model::{Categorical, ParticleModel};

/// `N` particles, their never-rejected flags and the stream key.
#[derive(Clone, Debug)]
pub struct ParticlePopulation<S> {
    pub states: Vec<S>,
    pub all_accepted: Vec<bool>,
    pub step: u64,
    key: StreamKey,
}

impl<S> ParticlePopulation<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Wraps explicit states (all flags set) at mesh index `step`.
    pub fn from_states(states: Vec<S>, step: u64, seed: u64) -> Result<Self> {
        if states.is_empty() {
            return Err(FkError::BadSize(0));
        }
        let n = states.len();
        Ok(Self {
            states,
            all_accepted: vec![true; n],
            step,
            key: StreamKey::new(seed),
        })
    }

    pub fn survivor_count(&self) -> usize {
        self.all_accepted.iter().filter(|f| **f).count()
    }
}

impl ParticlePopulation<usize> {
    /// Occupation counts over `d` states.
    pub fn histogram(&self, d: usize) -> Vec<usize> {
        let mut h = vec![0; d];
        for &x in &self.states {
            h[x] += 1;
        }
        h
    }

    pub fn empirical(&self, d: usize) -> ProbabilityVector {
        ProbabilityVector::from_counts(&self.histogram(d)).expect("nonempty population")
    }
}

/// `N` i.i.d. draws from `sampler`, each on its own stream.
pub fn init_population_with<S, F>(n: usize, seed: u64, exec: Execution, sampler: F) -> Result<ParticlePopulation<S>>
where
    S: Send,
    F: Fn(&mut ChaCha8Rng) -> S + Sync + Send,
{
    if n == 0 {
        return Err(FkError::BadSize(0));
    }
    let key = StreamKey::new(seed);
    let states = map_indexed(exec, n, |i| sampler(&mut key.stream(i as u64, 0, Phase::Init)));
    Ok(ParticlePopulation {
        states,
        all_accepted: vec![true; n],
        step: 0,
        key,
    })
}

pub fn init_population<M: ParticleModel>(
    model: &M,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<ParticlePopulation<M::State>> {
    init_population_with(n, seed, exec, |rng| model.sample_initial(rng))
}

/// `N` i.i.d. draws from a finite law.
pub fn init_from_law(n: usize, mu0: &ProbabilityVector, seed: u64, exec: Execution) -> Result<ParticlePopulation<usize>> {
    let c = Categorical::new(mu0.as_slice());
    init_population_with(n, seed, exec, |rng| c.sample(rng))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionOutcome {
    /// `μ^N(𝒢)` of the pre-selection population.
    pub mean_weight: f64,
    pub rejected: usize,
}

/// Recycling rule of one selection step, built from the frozen population.
enum Recycler {
    None,
    Uniform(usize),
    Weighted(Categorical),
    /// Case 3: particles sorted by weight with prefix sums.
    Upward {
        order: Vec<usize>,
        sorted: Vec<f64>,
        prefix: Vec<f64>,
    },
}

impl Recycler {
    fn upward(g: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
        let sorted: Vec<f64> = order.iter().map(|&i| g[i]).collect();
        let mut prefix = Vec::with_capacity(g.len() + 1);
        prefix.push(0.0);
        for w in &sorted {
            prefix.push(prefix.last().unwrap() + w);
        }
        Recycler::Upward { order, sorted, prefix }
    }

    /// For Case 3: first sorted position above `gx` and `Σ_j (g_j − gx)₊`.
    fn upward_mass(sorted: &[f64], prefix: &[f64], gx: f64) -> (usize, f64) {
        let start = sorted.partition_point(|&g| g <= gx);
        let n = sorted.len();
        let mass = (prefix[n] - prefix[start]) - gx * (n - start) as f64;
        (start, mass.max(0.0))
    }
}

/// One simultaneous acceptance/recycling step. `v[i]` is `𝒱_{t_k}(ξ^i)`.
/// Rejected particles are redrawn from the pre-step population.
pub fn selection_step<S: Clone + Send + Sync>(
    pop: &mut ParticlePopulation<S>,
    case: SelectionCase,
    v: &[f64],
    m: u32,
    exec: Execution,
) -> Result<SelectionOutcome> {
    let n = pop.len();
    if v.len() != n {
        return Err(FkError::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    for (i, &x) in v.iter().enumerate() {
        let bad = match case {
            SelectionCase::Case1 | SelectionCase::UniformRecycling => x > 0.0,
            SelectionCase::Case2 => x < 0.0,
            SelectionCase::Case3 => !x.is_finite(),
        };
        if bad {
            return Err(FkError::SignViolation {
                case: case.name(),
                requirement: "case-compatible potential at every particle",
                state: i,
                value: x,
            });
        }
    }
    let inv_m = 1.0 / m as f64;
    let g: Vec<f64> = v.iter().map(|x| (x * inv_m).exp()).collect();
    let total: f64 = g.iter().sum();
    let mean_weight = total / n as f64;

    let (recycler, common_accept) = match case {
        SelectionCase::Case1 => (Recycler::Weighted(Categorical::new(&g)), None),
        SelectionCase::UniformRecycling => (Recycler::Uniform(n), None),
        SelectionCase::Case2 => {
            let excess: Vec<f64> = g.iter().map(|x| x - 1.0).collect();
            if excess.iter().sum::<f64>() <= WEIGHT_FLOOR {
                (Recycler::None, Some(1.0))
            } else {
                let p = 1.0 / mean_weight;
                if !(0.0..=1.0).contains(&p) {
                    return Err(FkError::SignViolation {
                        case: case.name(),
                        requirement: "acceptance probability 1/μ(G) in [0, 1]",
                        state: 0,
                        value: p,
                    });
                }
                (Recycler::Weighted(Categorical::new(&excess)), Some(p))
            }
        }
        SelectionCase::Case3 => (Recycler::upward(&g), None),
    };

    let step = pop.step;
    let key = pop.key;
    let states = &pop.states;
    let moves: Vec<Option<usize>> = map_indexed(exec, n, |i| {
        let mut rng = key.stream(i as u64, step, Phase::Selection);
        let u: f64 = rng.random();
        match &recycler {
            Recycler::None => None,
            Recycler::Uniform(size) => (u >= g[i]).then(|| rng.random_range(0..*size)),
            Recycler::Weighted(c) => {
                let accept = common_accept.unwrap_or(g[i]);
                (u >= accept).then(|| c.sample(&mut rng))
            }
            Recycler::Upward { order, sorted, prefix } => {
                let (start, mass) = Recycler::upward_mass(sorted, prefix, g[i]);
                let reject = mass / total;
                if mass <= 0.0 || u >= reject {
                    return None;
                }
                let target = rng.random::<f64>() * mass;
                let gx = g[i];
                let cum = |j: usize| (prefix[j + 1] - prefix[start]) - gx * (j + 1 - start) as f64;
                let (mut lo, mut hi) = (start, n);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    if cum(mid) <= target {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                Some(order[lo.min(n - 1)])
            }
        }
    });

    let mut rejected = 0;
    let new_states: Vec<S> = moves
        .iter()
        .enumerate()
        .map(|(i, mv)| match mv {
            Some(j) => {
                rejected += 1;
                states[*j].clone()
            }
            None => states[i].clone(),
        })
        .collect();
    for (flag, mv) in pop.all_accepted.iter_mut().zip(&moves) {
        *flag &= mv.is_none();
    }
    pop.states = new_states;
    Ok(SelectionOutcome { mean_weight, rejected })
}

/// Independent `ℳ_{t_k,t_{k+1}}` moves; advances the step index.
pub fn mutation_step<M: ParticleModel>(model: &M, pop: &mut ParticlePopulation<M::State>, exec: Execution) -> Result<()> {
    let k = pop.step;
    if k >= model.steps() {
        return Err(FkError::HorizonExceeded {
            requested: k + 1,
            horizon: model.steps(),
        });
    }
    if !model.mutation_is_identity(k) {
        let key = pop.key;
        let states = &pop.states;
        pop.states = map_indexed(exec, states.len(), |i| {
            model.mutate(k, &states[i], &mut key.stream(i as u64, k, Phase::Mutation))
        });
    }
    pop.step += 1;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub case: SelectionCase,
    pub n_particles: usize,
    pub seed: u64,
    /// Mesh indices at which `μ^N(f)` is recorded.
    pub record_at: Vec<u64>,
    /// Last mesh index simulated; defaults to the model's horizon.
    pub horizon: Option<u64>,
    pub execution: Execution,
}

impl RunConfig {
    pub fn new(case: SelectionCase, n_particles: usize, seed: u64) -> Self {
        Self {
            case,
            n_particles,
            seed,
            record_at: Vec::new(),
            horizon: None,
            execution: Execution::Sequential,
        }
    }

    pub fn record_at(mut self, at: Vec<u64>) -> Self {
        self.record_at = at;
        self
    }

    pub fn horizon(mut self, k: u64) -> Self {
        self.horizon = Some(k);
        self
    }

    pub fn execution(mut self, exec: Execution) -> Self {
        self.execution = exec;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunEstimate {
    pub seed: u64,
    pub n_particles: usize,
    pub m: u32,
    pub record_at: Vec<u64>,
    /// `f_values[r][j]` is `μ^N_{t_k}(f_j)` at `k = record_at[r]`.
    pub f_values: Vec<Vec<f64>>,
    /// `Π_{p<k} μ^N_{t_p}(𝒢_{t_p})` at each recorded index.
    pub mass_estimate: Vec<f64>,
    pub survivors: Vec<usize>,
    pub rejections: u64,
}

/// Alternates selection and mutation up to the horizon, recording with
/// `observe` before the selection of each requested index.
pub fn run_population<M, F>(
    model: &M,
    cfg: &RunConfig,
    observe: F,
) -> Result<(RunEstimate, ParticlePopulation<M::State>)>
where
    M: ParticleModel,
    F: Fn(&[M::State]) -> Vec<f64>,
{
    let horizon = cfg.horizon.unwrap_or(model.steps());
    if horizon > model.steps() {
        return Err(FkError::HorizonExceeded {
            requested: horizon,
            horizon: model.steps(),
        });
    }
    if let Some(&bad) = cfg.record_at.iter().find(|&&k| k > horizon) {
        return Err(FkError::HorizonExceeded {
            requested: bad,
            horizon,
        });
    }
    let m = model.mesh().m();
    let mut pop = init_population(model, cfg.n_particles, cfg.seed, cfg.execution)?;
    let mut est = RunEstimate {
        seed: cfg.seed,
        n_particles: cfg.n_particles,
        m,
        record_at: cfg.record_at.clone(),
        f_values: vec![Vec::new(); cfg.record_at.len()],
        mass_estimate: vec![0.0; cfg.record_at.len()],
        survivors: vec![0; cfg.record_at.len()],
        rejections: 0,
    };
    let mut log_mass: f64 = 0.0;
    for k in 0..=horizon {
        for (r, _) in cfg.record_at.iter().enumerate().filter(|(_, &at)| at == k) {
            est.f_values[r] = observe(&pop.states);
            est.mass_estimate[r] = log_mass.exp();
            est.survivors[r] = pop.survivor_count();
        }
        if k == horizon {
            break;
        }
        let v: Vec<f64> = pop.states.iter().map(|x| model.potential(k, x)).collect();
        let out = selection_step(&mut pop, cfg.case, &v, m, cfg.execution)?;
        log_mass += out.mean_weight.ln();
        est.rejections += out.rejected as u64;
        mutation_step(model, &mut pop, cfg.execution)?;
    }
    Ok((est, pop))
}

pub fn run<M, F>(model: &M, cfg: &RunConfig, observe: F) -> Result<RunEstimate>
where
    M: ParticleModel,
    F: Fn(&[M::State]) -> Vec<f64>,
{
    Ok(run_population(model, cfg, observe)?.0)
}

/// `μ^N(f_j)` for per-state tables `f_j`.
pub fn finite_observer(d: usize, fs: Vec<Vec<f64>>) -> impl Fn(&[usize]) -> Vec<f64> {
    move |states| {
        let mut h = vec![0usize; d];
        for &x in states {
            h[x] += 1;
        }
        let n = states.len() as f64;
        fs.iter()
            .map(|f| h.iter().zip(f).map(|(c, v)| *c as f64 * v).sum::<f64>() / n)
            .collect()
    }
}

/// The state indicators `1_{x}` for `x < d`.
pub fn indicator_functions(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|x| (0..d).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Particles that were never rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSubpopulation<S> {
    pub count: usize,
    pub states: Vec<S>,
}

pub fn exact_subpopulation<S: Clone>(pop: &ParticlePopulation<S>) -> ExactSubpopulation<S> {
    let states: Vec<S> = pop
        .states
        .iter()
        .zip(&pop.all_accepted)
        .filter(|(_, f)| **f)
        .map(|(s, _)| s.clone())
        .collect();
    ExactSubpopulation {
        count: states.len(),
        states,
    }
}

impl ExactSubpopulation<usize> {
    /// Empirical law of the survivors; `None` when nobody survived.
    pub fn empirical(&self, d: usize) -> Option<ProbabilityVector> {
        if self.count == 0 {
            return None;
        }
        let mut h = vec![0usize; d];
        for &x in &self.states {
            h[x] += 1;
        }
        ProbabilityVector::from_counts(&h).ok()
    }
}

/// Probability that the geometric clock has not rung by `t_p`:
/// `survival[p] = Π_{k<p} e^{−𝒰_{t_k}/m}`, so `survival[0] = 1`.
pub fn geometric_clock_survival(u: &[f64], m: u32) -> Result<Vec<f64>> {
    if let Some((i, &x)) = u.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        return Err(FkError::SignViolation {
            case: "geometric clock",
            requirement: "U >= 0",
            state: i,
            value: x,
        });
    }
    let mut out = Vec::with_capacity(u.len() + 1);
    let mut s = 1.0;
    out.push(s);
    for x in u {
        s *= (-x / m as f64).exp();
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_potential_keeps_everyone() {
        let mut pop = ParticlePopulation::from_states(vec![0usize, 1, 2, 1], 0, 5).unwrap();
        let before = pop.states.clone();
        let out = selection_step(&mut pop, SelectionCase::Case1, &[0.0; 4], 3, Execution::Sequential).unwrap();
        assert_eq!(out.rejected, 0);
        assert_eq!(pop.states, before);
        assert!(pop.all_accepted.iter().all(|f| *f));
    }

    #[test]
    fn case3_never_moves_the_top_particle() {
        let mut pop = ParticlePopulation::from_states(vec![0usize, 1, 2], 0, 11).unwrap();
        let v = [0.0, 5.0, 10.0];
        for _ in 0..50 {
            let mut p = pop.clone();
            selection_step(&mut p, SelectionCase::Case3, &v, 1, Execution::Sequential).unwrap();
            assert_eq!(p.states[2], 2);
            assert!(p.states[1] >= 1);
            pop.key = StreamKey::new(pop.key.stream(0, 0, Phase::Aux).random());
        }
    }

    #[test]
    fn survival_is_indexed_from_one() {
        let s = geometric_clock_survival(&[0.5, 0.5, 0.5], 2).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0], 1.0);
        assert!((s[3] - (-0.75f64).exp()).abs() < 1e-15);
        assert!(geometric_clock_survival(&[-0.1], 2).is_err());
    }

    #[test]
    fn bad_size() {
        assert!(matches!(
            init_from_law(0, &ProbabilityVector::uniform(2), 1, Execution::Sequential),
            Err(FkError::BadSize(0))
        ));
    }
}
