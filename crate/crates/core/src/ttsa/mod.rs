//! The two-timescale loop, the double-loop baseline, convergence metrics and
//! numeric checkers for the coupled-sequence and auxiliary step-size lemmas.

mod bsa;
mod lemmas;
mod moreau;
mod run;

pub use bsa::{bsa_inner_steps, bsa_run, BsaConfig};
pub use lemmas::{
    check_aux_lemmas, check_coupled_inequality, coupled_witness_from_traces, descent_lemma_check,
    random_aux_instance, random_coupled_witness, tracking_bound_check, AuxInstance, AuxLemmaReport,
    CoupledReport, CoupledSeqWitness, DescentReport, LemmaOutcome, TrackingReport,
};
pub use moreau::{fill_near_stationarity, moreau_prox, near_stationarity_series, ProxResult};
pub use run::{
    mean_series, record_grid, ttsa_run, IterateAverages, MetricsConfig, Probes, RunSummary, RunTrace, TracePoint,
    TRACE_COLUMNS,
};
