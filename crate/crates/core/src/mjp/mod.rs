//! Markov jump processes: reaction networks, exact simulation, the bootstrap
//! particle filter, the linear noise approximation, and the Lotka–Volterra
//! inference study built from them.

pub mod gillespie;
pub mod lna;
pub mod lv;
pub mod network;
pub mod oracle;
pub mod pf;
pub mod study;

pub use gillespie::{gillespie_path, gillespie_simulate, Event};
pub use lna::{lna_integrate, lna_marginal_loglik, LnaState};
pub use lv::{
    read_dataset, simulate_dataset, write_dataset, DatasetHeader, LnaPosterior, LvParams, LvPrior, LvStateSpace,
    ObservationSeries, PfLikelihood,
};
pub use network::{ImmigrationDeath, LotkaVolterra, ReactionNetwork, TwoStateSwitch};
pub use pf::{bootstrap_pf, systematic_resample, StateSpaceModel};
pub use study::{
    estimate_sigma2, iterations_for_budget, lna_pilot, run_lv_cell, run_lv_study, stage_one_rate, LvAlgorithm, LvCell, LvCosts, LvPilot, LvStudyConfig,
    LvStudyOutput, LvStudyRow,
};
