//! Nash solvers for known payoffs.

mod ipo;
mod nash;

pub use ipo::{ipo_population_loss, ipo_residual, ipo_solve, ipo_solve_with, ipo_target, IpoOptions};
pub use nash::{
    nash_players_coincide_check, solve_nash, solve_nash_with, solve_saddle, CoincideReport, NashResult,
    SaddleResult, SolverOptions,
};
