//! Truth-scale solves of the primal saddle point problem.

use nalgebra::DVector;

use crate::complementarity::{kkt_residuals, solve_mixed_kkt, solve_obstacle_kkt, KktResiduals, LcpOptions};
use crate::error::{Error, Result};
use crate::fe_truth::{assemble_at, AffineTruthModel, ConstraintOperator};

/// Field, multiplier and slack of the truth problem at one parameter.
#[derive(Debug, Clone)]
pub struct TruthSolution {
    pub mu: Vec<f64>,
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    /// `s = g(mu) - B u`.
    pub slack: DVector<f64>,
    pub iterations: usize,
    pub residuals: KktResiduals,
}

/// Solves `A(mu) u + B^T lambda = f(mu)`, `0 <= lambda`, `0 <= g(mu) - B u`,
/// complementary. Diagonal `B` uses the sparse active set method; general `B`
/// uses dense condensation.
pub fn solve_truth(model: &AffineTruthModel, mu: &[f64]) -> Result<TruthSolution> {
    solve_truth_with(model, mu, &LcpOptions::default())
}

pub fn solve_truth_with(model: &AffineTruthModel, mu: &[f64], opts: &LcpOptions) -> Result<TruthSolution> {
    let (a, f, g) = assemble_at(model, mu)?;
    let wrap = |e: Error| Error::TruthSolve {
        mu: mu.to_vec(),
        source: Box::new(e),
    };
    let (u, lambda, iterations) = match &model.b {
        ConstraintOperator::Diagonal(d) => {
            let sol = solve_obstacle_kkt(&a, d, &f, &g, opts).map_err(wrap)?;
            (sol.u, sol.lambda, sol.iterations)
        }
        ConstraintOperator::Dense(b) => {
            let (u, l) = solve_mixed_kkt(&a.to_dense(), b, &f, &g, opts).map_err(wrap)?;
            (u, l, 0)
        }
    };
    let bu = model.b.apply(&u);
    let residuals = kkt_residuals(&a.mul_vec(&u), &bu, &model.b.apply_transpose(&lambda), &lambda, &f, &g);
    Ok(TruthSolution {
        mu: mu.to_vec(),
        slack: g - bu,
        u,
        lambda,
        iterations,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_truth::{assemble_model, ModelSpec};

    #[test]
    fn rope_touches_obstacle() {
        let model = assemble_model(&ModelSpec::rope(200)).unwrap();
        let sol = solve_truth(&model, &[0.005]).unwrap();
        assert!(sol.lambda.iter().any(|&l| l > 0.0));
        assert!(sol.slack.min() > -1e-12);
        assert!(sol.residuals.max() < 1e-9, "{:?}", sol.residuals);
        // the rope sags below the unconstrained limit nowhere
        let mid = sol.u[99];
        assert!((mid - (5.0 * 0.5 - 10.0)).abs() < 1e-12);
    }

    #[test]
    fn membrane_has_contact_plateau() {
        let model = assemble_model(&ModelSpec::membrane(16, 16)).unwrap();
        let sol = solve_truth(&model, &[0.5]).unwrap();
        assert!((sol.u.max() - 0.1).abs() < 1e-12);
        assert!(sol.lambda.iter().filter(|&&l| l > 0.0).count() > 1);
        assert!(sol.residuals.max() < 1e-9);
    }
}
