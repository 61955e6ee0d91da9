//! Matrix-exact flows, semigroups and constants on finite state spaces.

mod flow;
mod mesh;
mod model;
mod semigroup;

pub use flow::{
    ct_exact_flow, flow_discrete, flow_discrete_trajectory, mesh_flow, mesh_trajectory, uniform_recycling_flow,
    uniform_recycling_trajectory, MeshTrajectory,
};
pub use mesh::{markov_exponential, MeshCell, MeshSchedule, MeshedModel};
pub use model::{validate_generator, CtmcPiece, FkModel, FkModelCtmc, FkModelDiscrete};
pub use semigroup::{
    carre_du_champ, mixing_rho, propagate, semigroup, semigroup_matrix, variance_constant, variance_constant_terms,
    SemigroupBundle, VarianceConstantTerm,
};
