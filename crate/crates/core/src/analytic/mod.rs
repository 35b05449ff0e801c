//! Analytical AoI model: closed forms and an explicit DTMC of the SPS state
//! machine, the latter serving as an independent check of the former.

mod closed_form;
mod dtmc;
mod sparse;

use thiserror::Error;

pub use closed_form::{
    average_aoi, effective_sch_prob, expected_reset, inter_success_moments, reset_aoi_c0, AoiPrediction,
    InterSuccessMoments, ROUTE_AGREEMENT_TOL,
};
pub use dtmc::{
    build_sps_dtmc, build_sps_dtmc_capped, mean_first_passage, mean_first_passage_idle_to_tx,
    stationary_distribution, stationary_distribution_with, DtmcModel, MarkovChain, SolveMethod, SpsState,
    SpsStateIndex, DEFAULT_STATE_CAP, DIRECT_SOLVE_LIMIT, STATIONARY_RESIDUAL_TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("{name} = {value} outside {range}")]
    Domain { name: &'static str, value: f64, range: &'static str },
    #[error("degenerate starvation: no CSR ever found")]
    DegenerateStarvation,
    #[error("renewal route {renewal} disagrees with closed form {closed}")]
    RouteMismatch { renewal: f64, closed: f64 },
    #[error("state space of {states} states exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: usize, cap: usize },
    #[error("invalid transition matrix: {0}")]
    InvalidChain(String),
    #[error("chain is not irreducible")]
    NotIrreducible,
    #[error("singular linear system")]
    Singular,
    #[error("target set unreachable from state {0}")]
    TargetUnreachable(usize),
    #[error("power iteration stalled at residual {residual:e}")]
    NotConverged { residual: f64 },
}
