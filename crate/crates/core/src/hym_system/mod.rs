//! The coupled Monge-Ampère / trace-free Hermite-Einstein system and its
//! continuity-method solver.

mod config;
mod continuity;
mod newton;
mod split;
mod symbol;
mod system;

pub use config::{NewtonConfig, OmegaVariant, SystemConfig, TSchedule};
pub use continuity::{
    continuity_resume, continuity_run, continuity_run_from, continuity_run_from_with, continuity_run_with, Checkpoint,
    ContinuityOutcome, Escalation, SolverTrace, StepRecord, TerminalStatus,
};
pub use newton::{a0_init, cushioned_solve, cushioned_solve_from, newton_solve, normalize_determinant, NewtonReport};
pub use symbol::{mode_covector, perturbation_tolerance, plane_wave_error, plane_wave_probe, PrincipalSymbol, SymbolReport};
pub use split::{split_solve, SplitChecks, SplitSolution};
pub use system::{Equation, Preconditioner, Residual, SystemState};
