use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::complementarity::LcpOptions;
use crate::error::{Error, Result};
use crate::fe_truth::{AffineTruthModel, ParameterBox};
use crate::truth::{solve_truth_with, TruthSolution};

/// Truth solutions at the snapshot parameters, in parameter order.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub parameters: Vec<Vec<f64>>,
    pub solutions: Vec<TruthSolution>,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    /// Largest KKT residual over all snapshots.
    pub fn max_residual(&self) -> f64 {
        self.solutions.iter().map(|s| s.residuals.max()).fold(0.0, f64::max)
    }
}

/// Solves the truth problem at every parameter, in parallel. The output order
/// follows `params` regardless of scheduling.
pub fn generate_snapshots(model: &AffineTruthModel, params: &[Vec<f64>]) -> Result<SnapshotSet> {
    generate_snapshots_with(model, params, &LcpOptions::default())
}

pub fn generate_snapshots_with(model: &AffineTruthModel, params: &[Vec<f64>], opts: &LcpOptions) -> Result<SnapshotSet> {
    for mu in params {
        model.parameter_box.check(mu)?;
    }
    let solutions = params
        .par_iter()
        .map(|mu| solve_truth_with(model, mu, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(SnapshotSet {
        parameters: params.to_vec(),
        solutions,
    })
}

/// `n` equidistant points of a one-dimensional box including both endpoints;
/// a single point sits at the midpoint.
pub fn equidistant_parameters(bx: &ParameterBox, n: usize) -> Result<Vec<Vec<f64>>> {
    if bx.dim() != 1 {
        return Err(Error::InvalidSpec("equidistant sampling needs a one-dimensional parameter".into()));
    }
    if n == 0 {
        return Err(Error::InvalidSpec("need at least one snapshot parameter".into()));
    }
    let (lo, hi) = (bx.lower[0], bx.upper[0]);
    if n == 1 {
        return Ok(vec![vec![0.5 * (lo + hi)]]);
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            vec![if i == n - 1 { hi } else { lo + t * (hi - lo) }]
        })
        .collect())
}

/// `n` parameters drawn uniformly from the box with a seeded ChaCha stream.
pub fn uniform_parameters(bx: &ParameterBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            bx.lower
                .iter()
                .zip(&bx.upper)
                .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect()
        })
        .collect()
}
