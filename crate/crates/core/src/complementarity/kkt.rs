use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SkylineCholesky};

use super::lcp::{solve_lcp_active_set, Lcp, LcpOptions};

/// Residuals of the saddle point system
/// `A u + B^T lambda = f`, `g - B u >= 0`, `lambda >= 0`, `lambda^T (g - B u) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `||A u + B^T lambda - f||_inf`.
    pub stationarity: f64,
    /// `max(B u - g)`, clipped at 0.
    pub primal_violation: f64,
    /// `max(-lambda)`, clipped at 0.
    pub dual_violation: f64,
    /// `|lambda^T (g - B u)|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_violation)
            .max(self.dual_violation)
            .max(self.complementarity)
    }
}

/// Residuals of a candidate pair, given `A u`, `B u` and `B^T lambda` already applied.
pub fn kkt_residuals(
    au: &DVector<f64>,
    bu: &DVector<f64>,
    bt_lambda: &DVector<f64>,
    lambda: &DVector<f64>,
    f: &DVector<f64>,
    g: &DVector<f64>,
) -> KktResiduals {
    let slack = g - bu;
    KktResiduals {
        stationarity: (au + bt_lambda - f).amax(),
        primal_violation: slack.iter().fold(0.0f64, |m, &s| m.max(-s)),
        dual_violation: lambda.iter().fold(0.0f64, |m, &l| m.max(-l)),
        complementarity: lambda.dot(&slack).abs(),
    }
}

/// Dense saddle point solve by condensation: `u = A^{-1}(f - B^T lambda)` and
/// an LCP in `lambda` with `M = B A^{-1} B^T`, `q = g - B A^{-1} f`.
/// An empty `B` (zero rows) gives the unconstrained Galerkin solution.
pub fn solve_mixed_kkt(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DVector<f64>,
    opts: &LcpOptions,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || b.ncols() != n || f.len() != n || g.len() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "mixed KKT system",
            expected: n,
            found: if a.ncols() != n { a.ncols() } else if b.ncols() != n { b.ncols() } else { f.len() },
        });
    }
    let lu = a.clone().lu();
    let solve = |rhs: &DMatrix<f64>| lu.solve(rhs).ok_or(Error::Singular("stiffness matrix"));
    let a_inv_f = solve(&DMatrix::from_column_slice(n, 1, f.as_slice()))?.column(0).into_owned();
    if b.nrows() == 0 {
        return Ok((a_inv_f, DVector::zeros(0)));
    }
    let a_inv_bt = solve(&b.transpose())?;
    let m = b * &a_inv_bt;
    let q = g - b * &a_inv_f;
    let sol = solve_lcp_active_set(&Lcp::new(m, q)?, opts)?;
    let u = a_inv_f - &a_inv_bt * &sol.z;
    Ok((u, sol.z))
}

/// Outcome of [`solve_obstacle_kkt`].
#[derive(Debug, Clone)]
pub struct ObstacleSolution {
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    pub iterations: usize,
}

/// Sparse obstacle problem with diagonal constraints `d_i u_i <= g_i`.
///
/// Primal-dual active set iteration in `(u, lambda)`: on the contact set
/// `u_i = g_i / d_i`, elsewhere `lambda_i = 0` and the reduced stiffness system
/// is solved. Indices leave the contact set when their multiplier is not
/// positive and join when their constraint is violated. A repeated contact set
/// hands over to the LCP engine on the slack form, which pivots to termination.
pub fn solve_obstacle_kkt(
    a: &CsrMatrix,
    d: &DVector<f64>,
    f: &DVector<f64>,
    g: &DVector<f64>,
    opts: &LcpOptions,
) -> Result<ObstacleSolution> {
    let n = a.nrows();
    if d.iter().any(|&v| v == 0.0) {
        return Err(Error::Singular("diagonal constraint operator"));
    }
    let chol = SkylineCholesky::factor(a)?;
    let tol_lambda = opts.tol.unwrap_or(1e-10 * (1.0 + f.amax()));
    let tol_g = opts.tol.unwrap_or(1e-10 * (1.0 + g.amax()));

    let mut u = chol.solve(f);
    let mut active: Vec<bool> = (0..n).map(|i| d[i] * u[i] - g[i] > tol_g).collect();
    let mut seen: HashSet<Vec<bool>> = HashSet::new();

    for iter in 1..=opts.max_iters {
        let inactive: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let mut fixed = DVector::zeros(n);
        for i in 0..n {
            if active[i] {
                fixed[i] = g[i] / d[i];
            }
        }
        u = fixed.clone();
        if !inactive.is_empty() {
            let a_fixed = a.mul_vec(&fixed);
            let rhs = DVector::from_iterator(inactive.len(), inactive.iter().map(|&i| f[i] - a_fixed[i]));
            let sub = a.principal_submatrix(&inactive);
            let ui = SkylineCholesky::factor(&sub)?.solve(&rhs);
            for (k, &i) in inactive.iter().enumerate() {
                u[i] = ui[k];
            }
        }
        let residual = f - a.mul_vec(&u);
        let lambda = DVector::from_fn(n, |i, _| if active[i] { residual[i] / d[i] } else { 0.0 });

        let next: Vec<bool> = (0..n)
            .map(|i| if active[i] { lambda[i] > tol_lambda } else { d[i] * u[i] - g[i] > tol_g })
            .collect();
        if next == active || (0..n).all(|i| if active[i] { lambda[i] >= -tol_lambda } else { d[i] * u[i] - g[i] <= tol_g }) {
            return Ok(ObstacleSolution {
                u,
                lambda: lambda.map(|l| l.max(0.0)),
                iterations: iter,
            });
        }
        seen.insert(active.clone());
        if seen.contains(&next) {
            return slack_fallback(a, d, f, g, opts, iter);
        }
        active = next;
    }
    slack_fallback(a, d, f, g, opts, opts.max_iters)
}

/// Solves the same problem through the slack `s = g - D u`:
/// `0 <= s`, `D^{-1} A D^{-1} s - (D^{-1} A D^{-1} g - D^{-1} f) >= 0`, complementary.
fn slack_fallback(
    a: &CsrMatrix,
    d: &DVector<f64>,
    f: &DVector<f64>,
    g: &DVector<f64>,
    opts: &LcpOptions,
    spent: usize,
) -> Result<ObstacleSolution> {
    let dinv = d.map(|v| 1.0 / v);
    let m = a.scale_rows_cols(&dinv, &dinv);
    let ftilde = m.mul_vec(g) - dinv.component_mul(f);
    let sol = solve_lcp_active_set(&Lcp::new(m, -ftilde)?, opts)?;
    let u = dinv.component_mul(&(g - &sol.z));
    let lambda = dinv.component_mul(&(f - a.mul_vec(&u))).map(|l| l.max(0.0));
    Ok(ObstacleSolution {
        u,
        lambda,
        iterations: spent + sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_rope_is_contact_free() {
        let (u, l) = solve_mixed_kkt(
            &DMatrix::from_element(1, 1, 4.0),
            &DMatrix::from_element(1, 1, -1.0),
            &DVector::from_element(1, -0.5),
            &DVector::from_element(1, 7.5),
            &LcpOptions::default(),
        )
        .unwrap();
        assert!((u[0] + 0.125).abs() < 1e-15);
        assert_eq!(l[0], 0.0);
    }

    #[test]
    fn decoupled_bound() {
        let (u, l) = solve_mixed_kkt(
            &DMatrix::identity(2, 2),
            &DMatrix::identity(2, 2),
            &DVector::from_row_slice(&[1.0, 1.0]),
            &DVector::from_row_slice(&[0.25, 2.0]),
            &LcpOptions::default(),
        )
        .unwrap();
        assert!((u - DVector::from_row_slice(&[0.25, 1.0])).amax() < 1e-14);
        assert!((l - DVector::from_row_slice(&[0.75, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn obstacle_matches_condensed_solve() {
        let n = 40;
        let h = 1.0 / (n + 1) as f64;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 / h));
            if i + 1 < n {
                t.push((i, i + 1, -1.0 / h));
                t.push((i + 1, i, -1.0 / h));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let f = DVector::from_element(n, h * 10.0);
        let g = DVector::from_fn(n, |i, _| 0.3 + 0.2 * ((i as f64) * h * 6.0).sin());
        let d = DVector::from_element(n, 1.0);
        let sparse = solve_obstacle_kkt(&a, &d, &f, &g, &LcpOptions::default()).unwrap();
        let (u, l) = solve_mixed_kkt(&a.to_dense(), &DMatrix::identity(n, n), &f, &g, &LcpOptions::default()).unwrap();
        assert!((sparse.u - u).amax() < 1e-12);
        assert!((sparse.lambda - l).amax() < 1e-12);
    }
}
