//! Minimal from-scratch neural toolkit: two-hidden-layer MLPs with exact
//! reverse-mode gradients, Adam, log-gamma/digamma, and Dirichlet
//! sampling/log-density with concentration gradients.

pub mod adam;
pub mod dirichlet;
pub mod mlp;
pub mod special;

pub use adam::{AdamHyper, AdamState};
pub use dirichlet::{dirichlet_log_density, dirichlet_sample, DirichletParams};
pub use mlp::{checkpoint_from_json, checkpoint_to_json, ForwardCache, MlpParams, LEAKY_SLOPE};
pub use special::{digamma, log_gamma};
