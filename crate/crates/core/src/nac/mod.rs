//! Two-timescale natural actor-critic on tabular MDPs: TD(0) critic, exponentiated
//! mirror-descent actor, exact diagnostics and assumption-constant estimates.

mod actor;
mod assumptions;
mod critic;
mod mdp;
mod pdl;
mod run;

pub use actor::nac_actor_step;
pub use assumptions::{estimate_assumption_constants, policy_sample, AssumptionConstants};
pub use critic::{td_critic_step, td_critic_step_with, FeatureMap};
pub use mdp::{stationary, Policy, TabularMdp};
pub use pdl::{check_pdl, PdlReport};
pub use run::{ttnac_run, NacAverages, NacPoint, NacReference, NacStepRule, NacTrace};
