//! The mean-field particle system on the mesh: acceptance/recycling selection
//! followed by independent mutation.

mod engine;
mod model;
mod sweep;

pub use engine::{
    exact_subpopulation, finite_observer, geometric_clock_survival, indicator_functions, init_from_law,
    init_population, init_population_with, mutation_step, run, run_population, selection_step,
    ExactSubpopulation, ParticlePopulation, RunConfig, RunEstimate, SelectionOutcome,
};
pub use model::{Categorical, EulerDiffusion, FiniteParticleModel, MutationMethod, ParticleModel};
pub use sweep::{bias_variance_sweep, reference_values, write_sweep_csv, ReferenceKind, SweepRow, SweepSpec, SWEEP_HEADER};
