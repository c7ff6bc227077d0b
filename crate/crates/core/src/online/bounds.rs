use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fe_truth::{assemble_at, AffineTruthModel, ThetaValues};
use crate::offline::{primal_dual_coefficients, primal_only_coefficients, OfflineArtifact, ResidualGramian};

use super::solve::{reconstruct_lambda, OnlineDualSolution, OnlinePrimalSolution};
use super::OpCounter;

/// Bound for the pair `(u_du, lambda_pr)` with its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualBound {
    /// `||r||_{V'}`.
    pub residual_norm: f64,
    /// Floating point allowance added to `residual_norm` inside the bound.
    pub rounding: f64,
    /// `<s_n, lambda_n> = lambda_bar^T (psi^T zeta) s_bar`, clamped at 0.
    pub pairing: f64,
    pub d1: f64,
    pub d2: f64,
    pub alpha_lb: f64,
    pub gamma_ub: f64,
    pub beta: f64,
    pub delta_u: f64,
    pub delta_lambda: f64,
}

/// Bound for the pair `(u_pr, lambda_pr)` with its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalOnlyBound {
    /// `||r_e||_{V'}`.
    pub delta0: f64,
    /// Floating point allowance added to `delta0` inside the bound.
    pub rounding: f64,
    /// `||Pi(e_i)||_Q`.
    pub delta1: f64,
    /// `(lambda_n, Pi(e_i))_Q`, or `(lambda_n, Pi(-e_i))_Q` when larger, clamped at 0.
    pub delta2: f64,
    pub c1: f64,
    pub c2: f64,
    pub alpha_lb: f64,
    pub gamma_ub: f64,
    pub beta: f64,
    pub delta_u: f64,
    pub delta_lambda: f64,
    /// `max(B u_pr - g)`: positive when the primal approximation is infeasible.
    pub max_violation: f64,
}

/// `||sum_i c_i p_i||_{V'}` from the stored residual data.
pub fn residual_dual_norm(gramian: &ResidualGramian, coefficients: &DVector<f64>, ops: &mut OpCounter) -> f64 {
    ops.add(2 * (gramian.factor.nrows() * gramian.factor.ncols()) as u64);
    gramian.norm(coefficients)
}

fn coercivity(art: &OfflineArtifact, th: &ThetaValues) -> Result<(f64, f64)> {
    let (alpha, gamma) = art.certification.stability.evaluate(&th.a);
    if !(alpha > 0.0) {
        return Err(Error::NotPositiveDefinite {
            context: "coercivity lower bound",
            pivot: 0,
        });
    }
    Ok((alpha, gamma))
}

/// `Delta_u = d1 + sqrt(d1^2 + d2)` with `d1 = ||r|| / (2 alpha_LB)`,
/// `d2 = <s_n, lambda_n> / alpha_LB`, and
/// `Delta_lambda = (||r|| + gamma_UB Delta_u) / beta`.
pub fn primal_dual_bound(
    art: &OfflineArtifact,
    th: &ThetaValues,
    primal: &OnlinePrimalSolution,
    dual: &OnlineDualSolution,
    ops: &mut OpCounter,
) -> Result<PrimalDualBound> {
    let (alpha_lb, gamma_ub) = coercivity(art, th)?;
    let beta = art.certification.beta;
    let c = primal_dual_coefficients(th, &dual.s_bar, &primal.lambda_bar);
    ops.add(c.len() as u64);
    let gramian = &art.certification.primal_dual;
    let residual_norm = residual_dual_norm(gramian, &c, ops);
    let rounding = gramian.rounding_allowance(&c);
    ops.add(2 * c.len() as u64);
    let r = residual_norm + rounding;
    let pairing = if primal.lambda_bar.is_empty() || dual.s_bar.is_empty() {
        0.0
    } else {
        let (n_q, n_s) = art.reduced.pairing.shape();
        ops.add((2 * n_q * n_s + 2 * n_q) as u64);
        primal.lambda_bar.dot(&(&art.reduced.pairing * &dual.s_bar)).max(0.0)
    };
    let d1 = r / (2.0 * alpha_lb);
    let d2 = pairing / alpha_lb;
    let delta_u = d1 + (d1 * d1 + d2).max(0.0).sqrt();
    let delta_lambda = (r + gamma_ub * delta_u) / beta;
    ops.add(16);
    Ok(PrimalDualBound {
        residual_norm,
        rounding,
        pairing,
        d1,
        d2,
        alpha_lb,
        gamma_ub,
        beta,
        delta_u,
        delta_lambda,
    })
}

/// Projection onto the nonnegative cone under the Euclidean multiplier product.
pub fn project_onto_cone(q: &DVector<f64>) -> DVector<f64> {
    q.map(|v| v.max(0.0))
}

/// Residual-based bound for the primal approximation. The constraint residual
/// `e_i = B u_pr - g(mu)` is formed at truth scale.
pub fn primal_only_bound(art: &OfflineArtifact, th: &ThetaValues, primal: &OnlinePrimalSolution) -> Result<PrimalOnlyBound> {
    let (alpha_lb, gamma_ub) = coercivity(art, th)?;
    let beta = art.certification.beta;
    let c = primal_only_coefficients(th, &primal.u_bar, &primal.lambda_bar);
    let delta0 = art.certification.primal_only.norm(&c);
    let rounding = art.certification.primal_only.rounding_allowance(&c);
    let d0 = delta0 + rounding;

    let mut e = &art.b_phi * &primal.u_bar;
    for (t, g) in th.g.iter().zip(&art.g_components) {
        e.axpy(-t, g, 1.0);
    }
    let max_violation = e.max();
    let projected = project_onto_cone(&e);
    let delta1 = projected.norm();
    // (lambda_n, Pi(e_i)) equals (lambda_n, Pi(-e_i)) when the reduced
    // complementarity holds exactly; in floating point the larger one keeps
    // the bound rigorous.
    let lambda = reconstruct_lambda(art, &primal.lambda_bar);
    let delta2 = lambda.dot(&projected).max(lambda.dot(&project_onto_cone(&-&e))).max(0.0);

    let c1 = (d0 + gamma_ub * delta1 / beta) / (2.0 * alpha_lb);
    let c2 = (d0 * delta1 / beta + delta2) / alpha_lb;
    let delta_u = c1 + (c1 * c1 + c2).max(0.0).sqrt();
    let delta_lambda = (d0 + gamma_ub * delta_u) / beta;
    Ok(PrimalOnlyBound {
        delta0,
        rounding,
        delta1,
        delta2,
        c1,
        c2,
        alpha_lb,
        gamma_ub,
        beta,
        delta_u,
        delta_lambda,
        max_violation,
    })
}

/// `B u - g(mu)`: the Riesz representer of the detailed inequality functional.
pub fn detailed_inequality_residual(model: &AffineTruthModel, mu: &[f64], u: &DVector<f64>) -> Result<DVector<f64>> {
    let (_, _, g) = assemble_at(model, mu)?;
    Ok(model.b.apply(u) - g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_projection_examples() {
        let q = DVector::from_row_slice(&[-1.0, 2.0, 0.0]);
        assert_eq!(project_onto_cone(&q), DVector::from_row_slice(&[0.0, 2.0, 0.0]));
        let pos = DVector::from_row_slice(&[0.5, 3.0]);
        assert_eq!(project_onto_cone(&pos), pos);
        assert_eq!(project_onto_cone(&DVector::from_row_slice(&[-0.5, -3.0])), DVector::zeros(2));
    }
}
