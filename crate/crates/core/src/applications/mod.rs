//! Ground-truth generators for the two differential-equation case studies.

mod convdiff;
mod sir;

pub use convdiff::{solve_convdiff, ConvDiffConfig, ConvDiffSolution};
pub use sir::{solve_sir, solve_sir_states, SirConfig};
