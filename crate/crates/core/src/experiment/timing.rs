use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe_truth::{assemble_model, AffineTruthModel, ModelSpec};
use crate::offline::{build_offline, equidistant_parameters, OfflineArtifact, OfflineOptions};
use crate::online::evaluate;

/// Average online cost per query for one artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub resolution: String,
    pub n_truth: usize,
    pub reps: usize,
    /// Reduced primal solve, reduced slack solve and primal-dual bound.
    pub t_total_prdu: f64,
    /// Reduced primal solve and primal-only bound.
    pub t_total_pr: f64,
    pub t_bound_prdu: f64,
    pub t_bound_pr: f64,
    /// Operation count of the primal-dual path summed over the test parameters.
    pub ops_prdu: u64,
    /// Largest relative bounds over the test parameters, for cost/accuracy plots.
    pub max_rel_bnd_u_prdu: f64,
    pub max_rel_bnd_u_pr: f64,
}

/// Column order of the timing CSV.
pub const TIMING_COLUMNS: [&str; 11] = [
    "n",
    "resolution",
    "n_truth",
    "reps",
    "t_total_prdu",
    "t_total_pr",
    "t_bound_prdu",
    "t_bound_pr",
    "ops_prdu",
    "max_rel_bnd_u_prdu",
    "max_rel_bnd_u_pr",
];

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Times `reps` passes over `params`. Each pass yields a per-query average;
/// the row reports the median pass, which damps scheduler noise. Relative
/// bounds are normalized by the X_V norm of the reduced primal field.
pub fn time_artifact(n: usize, art: &OfflineArtifact, params: &[Vec<f64>], reps: usize) -> Result<TimingRow> {
    if reps == 0 || params.is_empty() {
        return Err(Error::Config("timing needs at least one repetition and one parameter".into()));
    }
    let mut passes = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut ops = 0;
    let (mut rel_prdu, mut rel_pr) = (0.0f64, 0.0f64);
    for rep in 0..reps {
        let mut sums = [Duration::ZERO; 4];
        for mu in params {
            let res = evaluate(art, mu)?;
            sums[0] += res.timings.primal_dual_total();
            sums[1] += res.timings.primal_only_total();
            sums[2] += res.timings.primal_dual_bound;
            sums[3] += res.timings.primal_only_bound;
            if rep == 0 {
                ops += res.ops_primal_dual;
                let norm = res.primal.u_bar.norm();
                if norm > 0.0 {
                    rel_prdu = rel_prdu.max(res.bounds.primal_dual.delta_u / norm);
                    rel_pr = rel_pr.max(res.bounds.primal_only.delta_u / norm);
                }
            }
        }
        for (p, s) in passes.iter_mut().zip(sums) {
            p.push(s.as_secs_f64() / params.len() as f64);
        }
    }
    let [a, b, c, d] = passes;
    Ok(TimingRow {
        n,
        resolution: art.spec.as_ref().map(|s| s.resolution.to_string()).unwrap_or_default(),
        n_truth: art.n_truth(),
        reps,
        t_total_prdu: median(a),
        t_total_pr: median(b),
        t_bound_prdu: median(c),
        t_bound_pr: median(d),
        ops_prdu: ops,
        max_rel_bnd_u_prdu: rel_prdu,
        max_rel_bnd_u_pr: rel_pr,
    })
}

/// One row per basis size on a fixed mesh.
pub fn run_timing_per_n(
    model: &AffineTruthModel,
    schedule: &[usize],
    params: &[Vec<f64>],
    reps: usize,
    opts: &OfflineOptions,
) -> Result<Vec<TimingRow>> {
    schedule
        .iter()
        .map(|&n| {
            let art = build_offline(model, &equidistant_parameters(&model.parameter_box, n)?, opts)?;
            time_artifact(n, &art, params, reps)
        })
        .collect()
}

/// One row per mesh with the basis size held fixed.
pub fn run_timing_mesh(
    specs: &[ModelSpec],
    n: usize,
    params: &[Vec<f64>],
    reps: usize,
    opts: &OfflineOptions,
) -> Result<Vec<TimingRow>> {
    specs
        .iter()
        .map(|spec| {
            let model = assemble_model(spec)?;
            let art = build_offline(&model, &equidistant_parameters(&model.parameter_box, n)?, opts)?;
            time_artifact(n, &art, params, reps)
        })
        .collect()
}

pub fn write_timing_csv<W: Write>(out: W, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
