//! Online stage: reduced solves, field reconstruction and both families of
//! error bounds.
//!
//! The primal-dual path (both reduced solves plus its bound) touches only
//! reduced-size data. The primal-only bound deliberately evaluates the
//! constraint residual at truth scale.

mod bounds;
mod solve;

use std::time::{Duration, Instant};

pub use bounds::{
    detailed_inequality_residual, primal_dual_bound, primal_only_bound, project_onto_cone, residual_dual_norm,
    PrimalDualBound, PrimalOnlyBound,
};
pub use solve::{
    reconstruct_lambda, reconstruct_slack, reconstruct_u_dual, reconstruct_u_primal, solve_dual_rb, solve_primal_rb,
    theta_values, OnlineDualSolution, OnlinePrimalSolution,
};

use crate::error::Result;
use crate::offline::OfflineArtifact;

/// Floating point operation tally for the reduced computations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub flops: u64,
}

impl OpCounter {
    pub fn add(&mut self, flops: u64) {
        self.flops += flops;
    }
}

/// Both bound families with the time spent evaluating each.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBounds {
    pub primal_dual: PrimalDualBound,
    pub primal_only: PrimalOnlyBound,
    pub time_primal_dual: Duration,
    pub time_primal_only: Duration,
}

/// Wall-clock split of one online query.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OnlineTimings {
    pub primal_solve: Duration,
    pub dual_solve: Duration,
    pub primal_dual_bound: Duration,
    pub primal_only_bound: Duration,
}

impl OnlineTimings {
    /// Reduced primal solve, reduced slack solve and the primal-dual bound.
    pub fn primal_dual_total(&self) -> Duration {
        self.primal_solve + self.dual_solve + self.primal_dual_bound
    }

    /// Reduced primal solve and the primal-only bound.
    pub fn primal_only_total(&self) -> Duration {
        self.primal_solve + self.primal_only_bound
    }
}

/// Result of one certified online query.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedResult {
    pub mu: Vec<f64>,
    pub primal: OnlinePrimalSolution,
    pub dual: OnlineDualSolution,
    pub bounds: ErrorBounds,
    pub timings: OnlineTimings,
    /// Operations of the primal-dual path (both reduced solves and its bound).
    pub ops_primal_dual: u64,
}

/// Solves both reduced problems at `mu` and evaluates both bound families.
pub fn evaluate(art: &OfflineArtifact, mu: &[f64]) -> Result<CertifiedResult> {
    let th = theta_values(art, mu)?;
    let mut ops = OpCounter::default();

    let t = Instant::now();
    let primal = solve_primal_rb(art, &th, &mut ops)?;
    let primal_solve = t.elapsed();

    let t = Instant::now();
    let dual = solve_dual_rb(art, &th, &mut ops)?;
    let dual_solve = t.elapsed();

    let t = Instant::now();
    let pd = primal_dual_bound(art, &th, &primal, &dual, &mut ops)?;
    let primal_dual_bound_time = t.elapsed();

    let t = Instant::now();
    let po = primal_only_bound(art, &th, &primal)?;
    let primal_only_bound_time = t.elapsed();

    Ok(CertifiedResult {
        mu: mu.to_vec(),
        primal,
        dual,
        bounds: ErrorBounds {
            primal_dual: pd,
            primal_only: po,
            time_primal_dual: primal_dual_bound_time,
            time_primal_only: primal_only_bound_time,
        },
        timings: OnlineTimings {
            primal_solve,
            dual_solve,
            primal_dual_bound: primal_dual_bound_time,
            primal_only_bound: primal_only_bound_time,
        },
        ops_primal_dual: ops.flops,
    })
}
