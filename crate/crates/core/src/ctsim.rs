//! Continuous-time interacting jump particle systems on finite spaces.
//!
//! Between interaction jumps every particle follows the reference chain with
//! exponential holding times read from `L_t`. Interaction jumps fire at the
//! case-dependent rate and relocate the particle to a state drawn from the
//! current empirical measure. Three equivalent schedulers are provided:
//! individual clocks, one aggregated population clock, and a thinned
//! population clock at the dominating rate `N·C`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::measures::{PotentialVector, ProbabilityVector};
use crate::oracle::FkModelCtmc;
use crate::parallel::{map_indexed, Execution};
use crate::particle::{
    finite_observer, indicator_functions, run, FiniteParticleModel, MutationMethod, RunConfig,
};
use crate::rng::derive_seed;
use crate::selection::SelectionCase;
use crate::stats::{mean, standard_error};

/// The interaction generator driving the jumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CtInteraction {
    /// Rate `𝒰(x)`, relocation from `μ`.
    Case1,
    /// Common rate `μ(𝒱)`, relocation from `Ψ_𝒱(μ)`.
    Case2,
    /// Rate `μ((𝒱 − 𝒱(x))₊)`, relocation from `Ψ_{(𝒱−𝒱(x))₊}(μ)`.
    Case3,
    /// `L̂⁺ + L̂⁻` around the mean `μ(𝒱)`.
    PlusMinus,
}

impl CtInteraction {
    pub fn name(&self) -> &'static str {
        match self {
            CtInteraction::Case1 => "case1",
            CtInteraction::Case2 => "case2",
            CtInteraction::Case3 => "case3",
            CtInteraction::PlusMinus => "plus-minus",
        }
    }

    fn check_potential(&self, v: &PotentialVector) -> Result<()> {
        match self {
            CtInteraction::Case1 => SelectionCase::Case1.check_potential(v),
            CtInteraction::Case2 => SelectionCase::Case2.check_potential(v),
            CtInteraction::Case3 | CtInteraction::PlusMinus => Ok(()),
        }
    }

    /// A bound on the per-particle interaction rate valid for every
    /// empirical measure.
    pub fn rate_bound(&self, v: &PotentialVector) -> f64 {
        match self {
            CtInteraction::Case1 => (-v.min()).max(0.0),
            CtInteraction::Case2 => v.max().max(0.0),
            CtInteraction::Case3 | CtInteraction::PlusMinus => v.oscillation(),
        }
    }
}

impl TryFrom<SelectionCase> for CtInteraction {
    type Error = FkError;

    fn try_from(c: SelectionCase) -> Result<Self> {
        match c {
            SelectionCase::Case1 => Ok(CtInteraction::Case1),
            SelectionCase::Case2 => Ok(CtInteraction::Case2),
            SelectionCase::Case3 => Ok(CtInteraction::Case3),
            SelectionCase::UniformRecycling => Err(FkError::ModelMismatch(
                "uniform recycling has no continuous-time simulator".into(),
            )),
        }
    }
}

impl std::str::FromStr for CtInteraction {
    type Err = FkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "plus-minus" | "plusminus" | "pm" => Ok(CtInteraction::PlusMinus),
            other => other.parse::<SelectionCase>().and_then(CtInteraction::try_from),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpSchedulingMode {
    IndividualClocks,
    #[default]
    PopulationClock,
    ThinnedPopulationClock,
}

impl JumpSchedulingMode {
    pub const ALL: [JumpSchedulingMode; 3] = [
        JumpSchedulingMode::IndividualClocks,
        JumpSchedulingMode::PopulationClock,
        JumpSchedulingMode::ThinnedPopulationClock,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            JumpSchedulingMode::IndividualClocks => "individual",
            JumpSchedulingMode::PopulationClock => "population",
            JumpSchedulingMode::ThinnedPopulationClock => "thinned",
        }
    }
}

impl std::str::FromStr for JumpSchedulingMode {
    type Err = FkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "individual" | "individual-clocks" => Ok(JumpSchedulingMode::IndividualClocks),
            "population" | "population-clock" => Ok(JumpSchedulingMode::PopulationClock),
            "thinned" | "thinned-population-clock" => Ok(JumpSchedulingMode::ThinnedPopulationClock),
            other => Err(FkError::Config(format!("unknown scheduling mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Mutation,
    Interaction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CtEvent {
    pub time: f64,
    pub particle: usize,
    pub kind: EventKind,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug)]
pub struct CtOptions {
    pub mode: JumpSchedulingMode,
    /// Thinning bound `C`; defaults to the per-piece rate bound.
    pub bound: Option<f64>,
    pub log_events: bool,
}

impl CtOptions {
    pub fn new(mode: JumpSchedulingMode) -> Self {
        Self {
            mode,
            bound: None,
            log_events: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CtRun {
    pub record_at: Vec<f64>,
    pub counts: Vec<Vec<usize>>,
    pub events: Vec<CtEvent>,
    /// Time of each particle's first interaction jump, if any.
    pub first_interaction: Vec<Option<f64>>,
    pub mutations: u64,
    pub interactions: u64,
    /// Proposed interaction events (thinned and per-particle proposal clocks).
    pub proposals: u64,
}

impl CtRun {
    pub fn empirical(&self, r: usize) -> ProbabilityVector {
        ProbabilityVector::from_counts(&self.counts[r]).expect("nonempty population")
    }
}

/// Per-state mutation rates and jump laws of one schedule piece.
struct Motion {
    rate: Vec<f64>,
    jump: Vec<Vec<f64>>,
}

impl Motion {
    fn new(l: &DMatrix<f64>) -> Self {
        let d = l.nrows();
        let rate = (0..d).map(|x| (-l[(x, x)]).max(0.0)).collect();
        let jump = (0..d)
            .map(|x| (0..d).map(|y| if x == y { 0.0 } else { l[(x, y)] }).collect())
            .collect();
        Self { rate, jump }
    }
}

/// Per-state interaction rates and relocation laws for the current counts.
struct Interaction {
    total: Vec<f64>,
    parts: Vec<Vec<(f64, Vec<f64>)>>,
}

impl Interaction {
    fn new(kind: CtInteraction, v: &[f64], counts: &[usize], n: usize) -> Self {
        let d = v.len();
        let mu: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let mean_v: f64 = v.iter().zip(&mu).map(|(a, b)| a * b).sum();
        let parts: Vec<Vec<(f64, Vec<f64>)>> = (0..d)
            .map(|x| match kind {
                CtInteraction::Case1 => vec![(-v[x], mu.clone())],
                CtInteraction::Case2 => {
                    let w: Vec<f64> = (0..d).map(|y| v[y] * mu[y]).collect();
                    vec![(w.iter().sum(), w)]
                }
                CtInteraction::Case3 => {
                    let w: Vec<f64> = (0..d).map(|y| (v[y] - v[x]).max(0.0) * mu[y]).collect();
                    vec![(w.iter().sum(), w)]
                }
                CtInteraction::PlusMinus => {
                    let plus: Vec<f64> = (0..d).map(|y| (v[y] - mean_v).max(0.0) * mu[y]).collect();
                    vec![((mean_v - v[x]).max(0.0), mu.clone()), (plus.iter().sum(), plus)]
                }
            })
            .collect();
        let total = parts
            .iter()
            .map(|p| p.iter().map(|(r, _)| r.max(0.0)).sum())
            .collect();
        Self { total, parts }
    }

    fn relocate(&self, x: usize, rng: &mut ChaCha8Rng) -> usize {
        let parts = &self.parts[x];
        let mut u = rng.random::<f64>() * self.total[x];
        for (j, (rate, w)) in parts.iter().enumerate() {
            if u < *rate || j + 1 == parts.len() {
                return pick(w, rng);
            }
            u -= rate;
        }
        x
    }
}

fn pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

fn exp_time(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate > 0.0 {
        rng.sample::<f64, _>(Exp1) / rate
    } else {
        f64::INFINITY
    }
}

/// Particle states with per-state membership lists for O(1) moves.
struct Population {
    states: Vec<usize>,
    counts: Vec<usize>,
    members: Vec<Vec<usize>>,
    slot: Vec<usize>,
}

impl Population {
    fn new(states: Vec<usize>, d: usize) -> Self {
        let mut members = vec![Vec::new(); d];
        let mut slot = vec![0; states.len()];
        for (i, &x) in states.iter().enumerate() {
            slot[i] = members[x].len();
            members[x].push(i);
        }
        let counts = members.iter().map(|m| m.len()).collect();
        Self {
            states,
            counts,
            members,
            slot,
        }
    }

    fn move_to(&mut self, i: usize, to: usize) {
        let from = self.states[i];
        if from == to {
            return;
        }
        let s = self.slot[i];
        let last = *self.members[from].last().expect("member present");
        self.members[from].swap_remove(s);
        if last != i {
            self.slot[last] = s;
        }
        self.slot[i] = self.members[to].len();
        self.members[to].push(i);
        self.states[i] = to;
        self.counts[from] -= 1;
        self.counts[to] += 1;
    }
}

struct Recorder<'a> {
    times: &'a [f64],
    next: usize,
    counts: Vec<Vec<usize>>,
}

impl<'a> Recorder<'a> {
    /// Snapshots every record time strictly before `t` (or up to `t` when
    /// `inclusive`).
    fn flush(&mut self, t: f64, inclusive: bool, pop: &Population) {
        while self.next < self.times.len() {
            let tau = self.times[self.next];
            if tau < t || (inclusive && tau <= t) {
                self.counts.push(pop.counts.clone());
                self.next += 1;
            } else {
                break;
            }
        }
    }
}

struct Log {
    enabled: bool,
    events: Vec<CtEvent>,
    first_interaction: Vec<Option<f64>>,
    mutations: u64,
    interactions: u64,
    proposals: u64,
}

impl Log {
    fn event(&mut self, time: f64, particle: usize, kind: EventKind, from: usize, to: usize) {
        match kind {
            EventKind::Mutation => self.mutations += 1,
            EventKind::Interaction => {
                self.interactions += 1;
                self.first_interaction[particle].get_or_insert(time);
            }
        }
        if self.enabled {
            self.events.push(CtEvent {
                time,
                particle,
                kind,
                from,
                to,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ClockKind {
    Mutation,
    Interaction,
}

#[derive(Clone, Copy, Debug)]
struct Clock {
    time: f64,
    particle: usize,
    kind: ClockKind,
    version: u64,
}

impl PartialEq for Clock {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Clock {}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Clock {
    // Reversed so that the max-heap pops the earliest clock.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.particle.cmp(&self.particle))
            .then((other.kind as u8).cmp(&(self.kind as u8)))
    }
}

/// Simulates the `N`-particle jump process up to the model horizon and
/// records occupation counts at `record_at` (ascending, within the horizon).
pub fn simulate_ct(
    model: &FkModelCtmc,
    kind: CtInteraction,
    n_particles: usize,
    options: &CtOptions,
    seed: u64,
    record_at: &[f64],
) -> Result<CtRun> {
    if n_particles == 0 {
        return Err(FkError::BadSize(0));
    }
    let horizon = model.horizon();
    if let Some(&t) = record_at.iter().find(|&&t| !(0.0..=horizon).contains(&t)) {
        return Err(FkError::TimeOutOfRange { time: t, horizon });
    }
    if record_at.windows(2).any(|w| w[1] < w[0]) {
        return Err(FkError::Config("record times must be ascending".into()));
    }
    let pieces = model.pieces();
    let mut bounds = Vec::with_capacity(pieces.len());
    for (i, p) in pieces.iter().enumerate() {
        kind.check_potential(&p.potential)?;
        let required = kind.rate_bound(&p.potential);
        if !required.is_finite() {
            return Err(FkError::UnboundedRate { piece: i });
        }
        let c = match options.bound {
            Some(c) if c < required => return Err(FkError::InvalidBound { bound: c, required }),
            Some(c) => c,
            None => required,
        };
        bounds.push(c);
    }
    let d = model.state_count();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x4354_5349]));
    let init: Vec<f64> = model.initial_law().as_slice().to_vec();
    let states: Vec<usize> = (0..n_particles).map(|_| pick(&init, &mut rng)).collect();
    let mut pop = Population::new(states, d);
    let mut rec = Recorder {
        times: record_at,
        next: 0,
        counts: Vec::new(),
    };
    let mut log = Log {
        enabled: options.log_events,
        events: Vec::new(),
        first_interaction: vec![None; n_particles],
        mutations: 0,
        interactions: 0,
        proposals: 0,
    };
    let motions: Vec<Motion> = pieces.iter().map(|p| Motion::new(&p.generator)).collect();
    let ctx = Context {
        model,
        kind,
        motions: &motions,
        bounds: &bounds,
    };
    match options.mode {
        JumpSchedulingMode::PopulationClock => ctx.population(&mut pop, &mut rec, &mut log, &mut rng),
        JumpSchedulingMode::ThinnedPopulationClock => ctx.thinned(&mut pop, &mut rec, &mut log, &mut rng),
        JumpSchedulingMode::IndividualClocks => ctx.individual(&mut pop, &mut rec, &mut log, &mut rng),
    }
    rec.flush(horizon, true, &pop);
    Ok(CtRun {
        record_at: record_at.to_vec(),
        counts: rec.counts,
        events: log.events,
        first_interaction: log.first_interaction,
        mutations: log.mutations,
        interactions: log.interactions,
        proposals: log.proposals,
    })
}

struct Context<'a> {
    model: &'a FkModelCtmc,
    kind: CtInteraction,
    motions: &'a [Motion],
    bounds: &'a [f64],
}

impl Context<'_> {
    fn interaction(&self, piece: usize, pop: &Population) -> Interaction {
        Interaction::new(
            self.kind,
            self.model.pieces()[piece].potential.values(),
            &pop.counts,
            pop.states.len(),
        )
    }

    fn mutate(&self, piece: usize, i: usize, t: f64, pop: &mut Population, log: &mut Log, rng: &mut ChaCha8Rng) {
        let from = pop.states[i];
        let to = pick(&self.motions[piece].jump[from], rng);
        pop.move_to(i, to);
        log.event(t, i, EventKind::Mutation, from, to);
    }

    fn interact(&self, table: &Interaction, i: usize, t: f64, pop: &mut Population, log: &mut Log, rng: &mut ChaCha8Rng) {
        let from = pop.states[i];
        let to = table.relocate(from, rng);
        pop.move_to(i, to);
        log.event(t, i, EventKind::Interaction, from, to);
    }

    fn uniform_member(pop: &Population, x: usize, rng: &mut ChaCha8Rng) -> usize {
        let m = &pop.members[x];
        m[rng.random_range(0..m.len())]
    }

    /// Gillespie on aggregated per-state rates `c_x (q_x + r_x)`.
    fn population(&self, pop: &mut Population, rec: &mut Recorder, log: &mut Log, rng: &mut ChaCha8Rng) {
        let horizon = self.model.horizon();
        let d = pop.counts.len();
        let mut t = 0.0;
        let mut piece = 0;
        loop {
            let end = self.model.piece_end(piece);
            let table = self.interaction(piece, pop);
            let q = &self.motions[piece].rate;
            let per_state: Vec<f64> = (0..d)
                .map(|x| pop.counts[x] as f64 * (q[x] + table.total[x]))
                .collect();
            let total: f64 = per_state.iter().sum();
            let t_next = t + exp_time(total, rng);
            if t_next >= end {
                rec.flush(end, false, pop);
                if end >= horizon || piece + 1 >= self.model.pieces().len() {
                    return;
                }
                t = end;
                piece += 1;
                continue;
            }
            rec.flush(t_next, false, pop);
            t = t_next;
            let x = pick(&per_state, rng);
            let i = Self::uniform_member(pop, x, rng);
            if rng.random::<f64>() * (q[x] + table.total[x]) < q[x] {
                self.mutate(piece, i, t, pop, log, rng);
            } else {
                self.interact(&table, i, t, pop, log, rng);
            }
        }
    }

    /// Exact mutations plus interaction proposals at rate `N·C`, each
    /// accepted with probability `r(ξ^i)/C`.
    fn thinned(&self, pop: &mut Population, rec: &mut Recorder, log: &mut Log, rng: &mut ChaCha8Rng) {
        let horizon = self.model.horizon();
        let n = pop.states.len();
        let d = pop.counts.len();
        let mut t = 0.0;
        let mut piece = 0;
        loop {
            let end = self.model.piece_end(piece);
            let c = self.bounds[piece];
            let q = &self.motions[piece].rate;
            let mutation_total: f64 = (0..d).map(|x| pop.counts[x] as f64 * q[x]).sum();
            let proposal_total = n as f64 * c;
            let t_next = t + exp_time(mutation_total + proposal_total, rng);
            if t_next >= end {
                rec.flush(end, false, pop);
                if end >= horizon || piece + 1 >= self.model.pieces().len() {
                    return;
                }
                t = end;
                piece += 1;
                continue;
            }
            rec.flush(t_next, false, pop);
            t = t_next;
            if rng.random::<f64>() * (mutation_total + proposal_total) < mutation_total {
                let per_state: Vec<f64> = (0..d).map(|x| pop.counts[x] as f64 * q[x]).collect();
                let x = pick(&per_state, rng);
                let i = Self::uniform_member(pop, x, rng);
                self.mutate(piece, i, t, pop, log, rng);
            } else {
                log.proposals += 1;
                let i = rng.random_range(0..n);
                let table = self.interaction(piece, pop);
                let accept = table.total[pop.states[i]] / c;
                debug_assert!((0.0..=1.0 + 1e-12).contains(&accept));
                if rng.random::<f64>() < accept {
                    self.interact(&table, i, t, pop, log, rng);
                }
            }
        }
    }

    /// One mutation clock per particle; Case 1 consumes unit-exponential
    /// budgets at rate `𝒰(ξ^i)`, the other cases thin per-particle proposal
    /// clocks at the piece bound.
    fn individual(&self, pop: &mut Population, rec: &mut Recorder, log: &mut Log, rng: &mut ChaCha8Rng) {
        let horizon = self.model.horizon();
        let n = pop.states.len();
        let budgeted = self.kind == CtInteraction::Case1;
        let mut budget: Vec<f64> = (0..n).map(|_| exp_time(1.0, rng)).collect();
        let mut since = vec![0.0; n];
        let mut mut_ver = vec![0u64; n];
        let mut int_ver = vec![0u64; n];
        let mut heap = BinaryHeap::with_capacity(2 * n);
        let mut t = 0.0;
        let mut piece = 0;

        let u_of = |piece: usize, x: usize| -> f64 { -self.model.pieces()[piece].potential.values()[x] };

        let schedule_mutation = |heap: &mut BinaryHeap<Clock>, ver: &mut u64, i: usize, x: usize, piece: usize, t: f64, rng: &mut ChaCha8Rng| {
            *ver += 1;
            let at = t + exp_time(self.motions[piece].rate[x], rng);
            if at.is_finite() {
                heap.push(Clock { time: at, particle: i, kind: ClockKind::Mutation, version: *ver });
            }
        };
        let schedule_interaction = |heap: &mut BinaryHeap<Clock>, ver: &mut u64, i: usize, x: usize, piece: usize, t: f64, budget: f64, rng: &mut ChaCha8Rng| {
            *ver += 1;
            let at = if budgeted {
                let u = u_of(piece, x);
                if u > 0.0 { t + budget / u } else { f64::INFINITY }
            } else {
                t + exp_time(self.bounds[piece], rng)
            };
            if at.is_finite() {
                heap.push(Clock { time: at, particle: i, kind: ClockKind::Interaction, version: *ver });
            }
        };

        let reset = |heap: &mut BinaryHeap<Clock>, pop: &Population, piece: usize, t: f64, budget: &[f64], mut_ver: &mut [u64], int_ver: &mut [u64], rng: &mut ChaCha8Rng| {
            heap.clear();
            for i in 0..n {
                let x = pop.states[i];
                schedule_mutation(heap, &mut mut_ver[i], i, x, piece, t, rng);
                schedule_interaction(heap, &mut int_ver[i], i, x, piece, t, budget[i], rng);
            }
        };
        reset(&mut heap, pop, piece, t, &budget, &mut mut_ver, &mut int_ver, rng);

        loop {
            let end = self.model.piece_end(piece);
            let next = heap.peek().map_or(f64::INFINITY, |c| c.time);
            if next >= end {
                rec.flush(end, false, pop);
                if end >= horizon || piece + 1 >= self.model.pieces().len() {
                    return;
                }
                if budgeted {
                    for i in 0..n {
                        budget[i] -= u_of(piece, pop.states[i]) * (end - since[i]);
                        budget[i] = budget[i].max(0.0);
                        since[i] = end;
                    }
                }
                t = end;
                piece += 1;
                reset(&mut heap, pop, piece, t, &budget, &mut mut_ver, &mut int_ver, rng);
                continue;
            }
            let clock = heap.pop().expect("peeked");
            let i = clock.particle;
            let current = match clock.kind {
                ClockKind::Mutation => mut_ver[i],
                ClockKind::Interaction => int_ver[i],
            };
            if clock.version != current {
                continue;
            }
            rec.flush(clock.time, false, pop);
            t = clock.time;
            let from = pop.states[i];
            match clock.kind {
                ClockKind::Mutation => {
                    if budgeted {
                        budget[i] = (budget[i] - u_of(piece, from) * (t - since[i])).max(0.0);
                        since[i] = t;
                    }
                    self.mutate(piece, i, t, pop, log, rng);
                    let x = pop.states[i];
                    schedule_mutation(&mut heap, &mut mut_ver[i], i, x, piece, t, rng);
                    if budgeted {
                        schedule_interaction(&mut heap, &mut int_ver[i], i, x, piece, t, budget[i], rng);
                    }
                }
                ClockKind::Interaction => {
                    let table = self.interaction(piece, pop);
                    let fire = if budgeted {
                        true
                    } else {
                        log.proposals += 1;
                        rng.random::<f64>() * self.bounds[piece] < table.total[from]
                    };
                    if fire {
                        self.interact(&table, i, t, pop, log, rng);
                        if budgeted {
                            budget[i] = exp_time(1.0, rng);
                            since[i] = t;
                        }
                        if pop.states[i] != from {
                            schedule_mutation(&mut heap, &mut mut_ver[i], i, pop.states[i], piece, t, rng);
                        }
                    }
                    schedule_interaction(&mut heap, &mut int_ver[i], i, pop.states[i], piece, t, budget[i], rng);
                }
            }
        }
    }
}

pub const EVENT_HEADER: &str = "time,particle,kind,from,to";

pub fn write_events_csv<W: Write>(events: &[CtEvent], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if events.is_empty() {
        w.write_record(EVENT_HEADER.split(','))?;
    }
    for e in events {
        w.serialize(e)?;
    }
    w.flush()
}

/// Replication mean and standard error of the state indicators at the
/// horizon for one scheduling mode.
#[derive(Clone, Debug, Serialize)]
pub struct ModeSummary {
    pub mode: JumpSchedulingMode,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub mean_proposals: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeDifference {
    pub a: JumpSchedulingMode,
    pub b: JumpSchedulingMode,
    pub diff: Vec<f64>,
    pub se: Vec<f64>,
}

impl ModeDifference {
    pub fn within(&self, k: f64) -> bool {
        self.diff.iter().zip(&self.se).all(|(d, s)| d.abs() <= k * s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub modes: Vec<ModeSummary>,
    pub pairs: Vec<ModeDifference>,
    /// `N·C·T` for the thinned clock.
    pub expected_proposals: f64,
}

/// Runs every scheduling mode of Case 1 over `seeds` and compares the
/// horizon laws.
pub fn mode_summary(
    model: &FkModelCtmc,
    kind: CtInteraction,
    n_particles: usize,
    mode: JumpSchedulingMode,
    seeds: &[u64],
    exec: Execution,
) -> Result<ModeSummary> {
    let d = model.state_count();
    let runs: Vec<Result<CtRun>> = map_indexed(exec, seeds.len(), |r| {
        simulate_ct(model, kind, n_particles, &CtOptions::new(mode), seeds[r], &[model.horizon()])
    });
    let runs: Vec<CtRun> = runs.into_iter().collect::<Result<_>>()?;
    let per_state = |x: usize| -> Vec<f64> {
        runs.iter()
            .map(|r| r.counts[0][x] as f64 / n_particles as f64)
            .collect()
    };
    Ok(ModeSummary {
        mode,
        mean: (0..d).map(|x| mean(&per_state(x))).collect(),
        se: (0..d).map(|x| standard_error(&per_state(x))).collect(),
        mean_proposals: runs.iter().map(|r| r.proposals as f64).sum::<f64>() / runs.len() as f64,
    })
}

pub fn scheduling_equivalence_check(
    model: &FkModelCtmc,
    n_particles: usize,
    seeds: &[u64],
    exec: Execution,
) -> Result<EquivalenceReport> {
    let modes = JumpSchedulingMode::ALL
        .iter()
        .map(|&mode| mode_summary(model, CtInteraction::Case1, n_particles, mode, seeds, exec))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for a in 0..modes.len() {
        for b in (a + 1)..modes.len() {
            let (ma, mb) = (&modes[a], &modes[b]);
            pairs.push(ModeDifference {
                a: ma.mode,
                b: mb.mode,
                diff: ma.mean.iter().zip(&mb.mean).map(|(x, y)| x - y).collect(),
                se: ma.se.iter().zip(&mb.se).map(|(x, y)| (x * x + y * y).sqrt()).collect(),
            });
        }
    }
    let c = model
        .pieces()
        .iter()
        .map(|p| CtInteraction::Case1.rate_bound(&p.potential))
        .fold(0.0, f64::max);
    Ok(EquivalenceReport {
        modes,
        pairs,
        expected_proposals: n_particles as f64 * c * model.horizon(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub m: u32,
    pub f_id: usize,
    pub geometric: f64,
    pub exponential: f64,
    pub gap: f64,
    pub se: f64,
}

/// Case-1 geometric engine against the exponential-clock system at the
/// horizon, per mesh parameter and state indicator, with matched seeds.
pub fn geometric_vs_exponential_gap(
    model: &FkModelCtmc,
    n_particles: usize,
    mesh_grid: &[u32],
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<GapRow>> {
    let d = model.state_count();
    let exp = mode_summary(
        model,
        CtInteraction::Case1,
        n_particles,
        JumpSchedulingMode::PopulationClock,
        seeds,
        exec,
    )?;
    let fk = crate::oracle::FkModel::Ctmc(model.clone());
    let mut rows = Vec::new();
    for &m in mesh_grid {
        let mesh = crate::oracle::MeshSchedule::new(m)?;
        let pm = FiniteParticleModel::new(&fk, mesh, MutationMethod::ExactKernel)?;
        let step = pm.meshed().steps();
        let runs: Vec<Result<Vec<f64>>> = map_indexed(exec, seeds.len(), |r| {
            let cfg = RunConfig::new(SelectionCase::Case1, n_particles, seeds[r])
                .record_at(vec![step])
                .horizon(step);
            Ok(run(&pm, &cfg, finite_observer(d, indicator_functions(d)))?.f_values.remove(0))
        });
        let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;
        for x in 0..d {
            let xs: Vec<f64> = runs.iter().map(|r| r[x]).collect();
            let g = mean(&xs);
            let se = (standard_error(&xs).powi(2) + exp.se[x].powi(2)).sqrt();
            rows.push(GapRow {
                m,
                f_id: x,
                geometric: g,
                exponential: exp.mean[x],
                gap: g - exp.mean[x],
                se,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_moves_keep_membership_consistent() {
        let mut pop = Population::new(vec![0, 1, 1, 2, 0], 3);
        pop.move_to(1, 0);
        pop.move_to(0, 2);
        pop.move_to(4, 4 % 3);
        for (x, m) in pop.members.iter().enumerate() {
            assert_eq!(m.len(), pop.counts[x]);
            for (s, &i) in m.iter().enumerate() {
                assert_eq!(pop.states[i], x);
                assert_eq!(pop.slot[i], s);
            }
        }
    }

    #[test]
    fn mode_names_parse() {
        for m in JumpSchedulingMode::ALL {
            assert_eq!(m.name().parse::<JumpSchedulingMode>().unwrap(), m);
        }
        assert_eq!("pm".parse::<CtInteraction>().unwrap(), CtInteraction::PlusMinus);
        assert!("uniform".parse::<CtInteraction>().is_err());
    }
}
