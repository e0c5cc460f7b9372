//! Exact trip search: the linearized integer program (built, checked, and
//! exported as CPLEX LP) and a native branch-and-bound solver.

mod bnb;
mod brute;
mod ilp;
mod lp;

pub use bnb::{solve_exact, ExactSolution};
pub use brute::{enumerate_all, ENUMERATE_MAX_VERTICES};
pub use ilp::{
    build_ilp, check_assignment, constraint_count, encode_trip, p_name, variable_count, x_name, xp_name,
    Assignment, CheckOutcome, Constraint, IlpModel, Sense, VarKind, Variable,
};
pub use lp::{read_lp, write_lp};
