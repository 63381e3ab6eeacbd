//! Cost models, the oracle problem and regret.

mod cost;
mod instance;
mod oracle;

pub use cost::{CostKind, CostModel, DEFAULT_OMEGA_HALF_WIDTH};
pub use instance::Instance;
pub use oracle::{
    oracle_decision, oracle_decision_with, oracle_jacobian, oracle_jacobian_with, regret, solve_on_law, true_expected_cost,
    true_optimum, OracleMethod, OracleSolution, ORACLE_TOL,
};
pub(crate) use oracle::jacobian_at;
