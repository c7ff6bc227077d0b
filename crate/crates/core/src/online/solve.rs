use nalgebra::{DMatrix, DVector};

use crate::complementarity::{kkt_residuals, solve_lcp_active_set, KktResiduals, Lcp, LcpOptions, LcpResiduals};
use crate::dual_slack::ftilde_theta;
use crate::error::{Error, Result};
use crate::fe_truth::ThetaValues;
use crate::offline::OfflineArtifact;

use super::OpCounter;

/// Reduced primal solution: field coefficients and nonnegative multiplier
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlinePrimalSolution {
    pub u_bar: DVector<f64>,
    pub lambda_bar: DVector<f64>,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

/// Reduced slack solution. `multiplier` is the complementary vector
/// `A~_n s_bar - f~_n`; it is not a coefficient vector of any basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineDualSolution {
    pub s_bar: DVector<f64>,
    pub multiplier: DVector<f64>,
    pub residuals: LcpResiduals,
    pub iterations: usize,
}

/// Coefficient values at `mu`, rejecting parameters outside the box.
pub fn theta_values(art: &OfflineArtifact, mu: &[f64]) -> Result<ThetaValues> {
    art.parameter_box.check(mu)?;
    Ok(ThetaValues {
        a: art.theta.a.iter().map(|t| t(mu)).collect(),
        f: art.theta.f.iter().map(|t| t(mu)).collect(),
        g: art.theta.g.iter().map(|t| t(mu)).collect(),
    })
}

fn combine_matrices(coeffs: &[f64], ms: &[DMatrix<f64>], rows: usize, cols: usize, ops: &mut OpCounter) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for (c, m) in coeffs.iter().zip(ms) {
        out += m * *c;
        ops.add(2 * (rows * cols) as u64);
    }
    out
}

fn combine_vectors(coeffs: &[f64], vs: &[DVector<f64>], len: usize, ops: &mut OpCounter) -> DVector<f64> {
    let mut out = DVector::zeros(len);
    for (c, v) in coeffs.iter().zip(vs) {
        out.axpy(*c, v, 1.0);
        ops.add(2 * len as u64);
    }
    out
}

/// Reduced saddle point problem, condensed to an LCP in the multiplier
/// coefficients with `M = B_n A_n^{-1} B_n^T`, `q = g_n - B_n A_n^{-1} f_n`.
pub fn solve_primal_rb(art: &OfflineArtifact, th: &ThetaValues, ops: &mut OpCounter) -> Result<OnlinePrimalSolution> {
    let r = &art.reduced;
    let (n_v, n_q) = (r.n_v(), r.n_q());
    let a = combine_matrices(&th.a, &r.a_n, n_v, n_v, ops);
    let f = combine_vectors(&th.f, &r.f_n, n_v, ops);
    let g = combine_vectors(&th.g, &r.g_n, n_q, ops);
    let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        context: "reduced stiffness",
        pivot: 0,
    })?;
    ops.add((n_v * n_v * n_v / 3 + 2 * n_v * n_v) as u64);
    let a_inv_f = chol.solve(&f);

    let (u_bar, lambda_bar, iterations) = if n_q == 0 {
        (a_inv_f, DVector::zeros(0), 0)
    } else {
        let a_inv_bt = chol.solve(&r.b_n.transpose());
        let m = &r.b_n * &a_inv_bt;
        let m = (&m + m.transpose()) * 0.5;
        let q = &g - &r.b_n * &a_inv_f;
        ops.add((2 * n_v * n_v * n_q + 2 * n_q * n_q * n_v + 2 * n_q * n_v) as u64);
        let sol = solve_lcp_active_set(&Lcp::new(m, q)?, &LcpOptions::default()).map_err(|e| match e {
            Error::Singular(_) => Error::RankDeficientConstraint,
            other => other,
        })?;
        ops.add(sol.work);
        let u = a_inv_f - &a_inv_bt * &sol.z;
        ops.add((2 * n_v * n_q) as u64);
        (u, sol.z, sol.iterations)
    };
    let residuals = kkt_residuals(&(&a * &u_bar), &(&r.b_n * &u_bar), &r.b_n.tr_mul(&lambda_bar), &lambda_bar, &f, &g);
    ops.add((2 * n_v * n_v + 4 * n_q * n_v) as u64);
    Ok(OnlinePrimalSolution {
        u_bar,
        lambda_bar,
        residuals,
        iterations,
    })
}

/// Reduced slack LCP `0 <= s_bar`, `A~_n s_bar - f~_n >= 0`, complementary.
pub fn solve_dual_rb(art: &OfflineArtifact, th: &ThetaValues, ops: &mut OpCounter) -> Result<OnlineDualSolution> {
    let r = &art.reduced;
    let n_s = r.n_s();
    if n_s == 0 {
        let empty = DVector::zeros(0);
        return Ok(OnlineDualSolution {
            residuals: LcpResiduals::of(&empty, &empty),
            s_bar: empty.clone(),
            multiplier: empty,
            iterations: 0,
        });
    }
    let a = combine_matrices(&th.a, &r.atilde_n, n_s, n_s, ops);
    let a = (&a + a.transpose()) * 0.5;
    let f = combine_vectors(&ftilde_theta(th), &r.ftilde_n, n_s, ops);
    let sol = solve_lcp_active_set(&Lcp::new(a, -f)?, &LcpOptions::default())?;
    ops.add(sol.work);
    Ok(OnlineDualSolution {
        s_bar: sol.z,
        multiplier: sol.w,
        residuals: sol.residuals,
        iterations: sol.iterations,
    })
}

/// `u = B^{-1}(g(mu) - zeta s_bar)`, feasible for every `s_bar >= 0`.
pub fn reconstruct_u_dual(art: &OfflineArtifact, th: &ThetaValues, s_bar: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some((index, &value)) = s_bar.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::InfeasibleSlack { index, value });
    }
    let mut u = DVector::zeros(art.n_truth());
    for (c, bg) in th.g.iter().zip(&art.binv_g) {
        u.axpy(*c, bg, 1.0);
    }
    if s_bar.len() > 0 {
        u -= &art.y * s_bar;
    }
    Ok(u)
}

/// `phi u_bar`.
pub fn reconstruct_u_primal(art: &OfflineArtifact, u_bar: &DVector<f64>) -> DVector<f64> {
    &art.primal.phi * u_bar
}

/// `psi lambda_bar`.
pub fn reconstruct_lambda(art: &OfflineArtifact, lambda_bar: &DVector<f64>) -> DVector<f64> {
    if lambda_bar.is_empty() {
        return DVector::zeros(art.primal.psi.nrows());
    }
    &art.primal.psi * lambda_bar
}

/// `zeta s_bar`.
pub fn reconstruct_slack(art: &OfflineArtifact, s_bar: &DVector<f64>) -> DVector<f64> {
    if s_bar.is_empty() {
        return DVector::zeros(art.dual.zeta.nrows());
    }
    &art.dual.zeta * s_bar
}
