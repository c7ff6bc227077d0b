use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual_slack::check_feasibility;
use crate::error::Result;
use crate::fe_truth::AffineTruthModel;
use crate::offline::{build_offline, equidistant_parameters, OfflineArtifact, OfflineOptions, SnapshotSet};
use crate::online::{evaluate, reconstruct_lambda, reconstruct_u_dual, reconstruct_u_primal, theta_values};
use crate::truth::TruthSolution;

/// Errors and bounds of one online query measured against the truth solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MuRecord {
    pub mu: Vec<f64>,
    pub u_norm: f64,
    pub lambda_norm: f64,
    pub err_u_pr: f64,
    pub err_u_du: f64,
    pub err_l: f64,
    pub bnd_u_pr: f64,
    pub bnd_u_prdu: f64,
    pub bnd_l_pr: f64,
    pub bnd_l_prdu: f64,
    /// `max(B u_du - g)`.
    pub violation_du: f64,
    /// `max(B u_pr - g)`.
    pub violation_pr: f64,
    pub ops_primal_dual: u64,
}

impl MuRecord {
    /// Pairs where a bound falls below its error.
    pub fn bound_violations(&self) -> usize {
        [
            self.bnd_u_prdu < self.err_u_du,
            self.bnd_u_pr < self.err_u_pr,
            self.bnd_l_pr < self.err_l,
            self.bnd_l_prdu < self.err_l,
        ]
        .iter()
        .filter(|&&v| v)
        .count()
    }
}

/// Evaluates both approximations at the truth parameter and compares.
pub fn compare_with_truth(model: &AffineTruthModel, art: &OfflineArtifact, truth: &TruthSolution) -> Result<MuRecord> {
    let mu = &truth.mu;
    let res = evaluate(art, mu)?;
    let th = theta_values(art, mu)?;
    let u_pr = reconstruct_u_primal(art, &res.primal.u_bar);
    let u_du = reconstruct_u_dual(art, &th, &res.dual.s_bar.map(|v| v.max(0.0)))?;
    let l_pr = reconstruct_lambda(art, &res.primal.lambda_bar);
    let inf = f64::INFINITY;
    Ok(MuRecord {
        mu: mu.clone(),
        u_norm: model.v_norm(&truth.u),
        lambda_norm: truth.lambda.norm(),
        err_u_pr: model.v_norm(&(&truth.u - &u_pr)),
        err_u_du: model.v_norm(&(&truth.u - &u_du)),
        err_l: (&truth.lambda - &l_pr).norm(),
        bnd_u_pr: res.bounds.primal_only.delta_u,
        bnd_u_prdu: res.bounds.primal_dual.delta_u,
        bnd_l_pr: res.bounds.primal_only.delta_lambda,
        bnd_l_prdu: res.bounds.primal_dual.delta_lambda,
        violation_du: check_feasibility(&u_du, model, mu, inf)?.max_violation,
        violation_pr: check_feasibility(&u_pr, model, mu, inf)?.max_violation,
        ops_primal_dual: res.ops_primal_dual,
    })
}

/// One row of the error/bound table: maxima of relative quantities over the
/// test set for a basis built from `n` equidistant snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub err_u_pr: f64,
    pub bnd_u_pr: f64,
    pub err_u_prdu: f64,
    pub bnd_u_prdu: f64,
    pub err_l: f64,
    pub bnd_l_pr: f64,
    pub bnd_l_prdu: f64,
    pub n_v: usize,
    pub n_q: usize,
    pub n_s: usize,
}

/// Column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 11] = [
    "n",
    "err_u_pr",
    "bnd_u_pr",
    "err_u_prdu",
    "bnd_u_prdu",
    "err_l",
    "bnd_l_pr",
    "bnd_l_prdu",
    "n_v",
    "n_q",
    "n_s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Per-parameter records for each row, in test-parameter order.
    pub details: Vec<Vec<MuRecord>>,
    /// Test parameters without contact (`||lambda|| = 0`), left out of the
    /// relative multiplier columns.
    pub lambda_skipped: usize,
}

impl SweepReport {
    /// Total number of (parameter, pair) bound violations.
    pub fn bound_violations(&self) -> usize {
        self.details.iter().flatten().map(MuRecord::bound_violations).sum()
    }
}

fn max_ratio(records: &[MuRecord], value: impl Fn(&MuRecord) -> f64, norm: impl Fn(&MuRecord) -> f64) -> f64 {
    records
        .iter()
        .filter(|r| norm(r) > 0.0)
        .map(|r| value(r) / norm(r))
        .fold(0.0, f64::max)
}

/// Aggregates per-parameter records into one table row.
pub fn summarize(n: usize, art: &OfflineArtifact, records: &[MuRecord]) -> SweepRow {
    let un = |r: &MuRecord| r.u_norm;
    let ln = |r: &MuRecord| r.lambda_norm;
    SweepRow {
        n,
        err_u_pr: max_ratio(records, |r| r.err_u_pr, un),
        bnd_u_pr: max_ratio(records, |r| r.bnd_u_pr, un),
        err_u_prdu: max_ratio(records, |r| r.err_u_du, un),
        bnd_u_prdu: max_ratio(records, |r| r.bnd_u_prdu, un),
        err_l: max_ratio(records, |r| r.err_l, ln),
        bnd_l_pr: max_ratio(records, |r| r.bnd_l_pr, ln),
        bnd_l_prdu: max_ratio(records, |r| r.bnd_l_prdu, ln),
        n_v: art.primal.n_v(),
        n_q: art.primal.n_q(),
        n_s: art.dual.n_s(),
    }
}

/// Builds an artifact from `n` equidistant snapshots for each `n` in the
/// schedule and compares every test parameter against its truth solution.
pub fn run_sweep(model: &AffineTruthModel, schedule: &[usize], truth: &SnapshotSet, opts: &OfflineOptions) -> Result<SweepReport> {
    let mut rows = Vec::with_capacity(schedule.len());
    let mut details = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let params = equidistant_parameters(&model.parameter_box, n)?;
        let art = build_offline(model, &params, opts)?;
        let records = truth
            .solutions
            .par_iter()
            .map(|t| compare_with_truth(model, &art, t))
            .collect::<Result<Vec<_>>>()?;
        rows.push(summarize(n, &art, &records));
        details.push(records);
    }
    let lambda_skipped = truth.solutions.iter().filter(|t| t.lambda.norm() == 0.0).count();
    Ok(SweepReport {
        rows,
        details,
        lambda_skipped,
    })
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != SWEEP_COLUMNS {
        return Err(crate::Error::Config(format!("unexpected sweep header {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?)
}
