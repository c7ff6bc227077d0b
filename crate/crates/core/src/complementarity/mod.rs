//! Linear complementarity problems and obstacle-type saddle point systems.

mod kkt;
mod lcp;

pub use kkt::{kkt_residuals, solve_mixed_kkt, solve_obstacle_kkt, KktResiduals, ObstacleSolution};
pub use lcp::{
    solve_lcp_active_set, solve_lcp_bruteforce, solve_lcp_projected_relaxation, Lcp, LcpMatrix, LcpOptions,
    LcpResiduals, LcpSolution, BRUTEFORCE_MAX_DIM,
};
