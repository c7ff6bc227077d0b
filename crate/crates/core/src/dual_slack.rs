//! The slack formulation: `s = g - B u`, `A~ = B^{-T} A B^{-1}`,
//! `f~ = A~ g - B^{-T} f`, and the LCP `0 <= s`, `A~ s - f~ >= 0`, complementary.
//!
//! `u = B^{-1}(g - s)` is feasible for every `s >= 0`, which is what makes the
//! slack-based reduced approximation feasible by construction.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::complementarity::{solve_lcp_active_set, Lcp, LcpMatrix, LcpOptions, LcpSolution};
use crate::error::{Error, Result};
use crate::fe_truth::{evaluate_theta, AffineTruthModel, ConstraintOperator, ParameterBox, ThetaFunctions, ThetaValues};
use crate::sparse::CsrMatrix;

/// Factorization of the constraint matrix `B`, for solves with `B` and `B^T`.
#[derive(Debug, Clone)]
pub enum BFactor {
    Diagonal(DVector<f64>),
    Dense {
        lu: LU<f64, Dyn, Dyn>,
        lu_t: LU<f64, Dyn, Dyn>,
    },
}

impl BFactor {
    /// `B^{-1} x`.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            BFactor::Diagonal(d) => x.component_div(d),
            BFactor::Dense { lu, .. } => lu.solve(x).expect("factor checked at construction"),
        }
    }

    /// `B^{-T} x`.
    pub fn solve_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            BFactor::Diagonal(d) => x.component_div(d),
            BFactor::Dense { lu_t, .. } => lu_t.solve(x).expect("factor checked at construction"),
        }
    }

    /// `B^{-1} X` column by column.
    pub fn solve_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            BFactor::Diagonal(d) => DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] / d[i]),
            BFactor::Dense { lu, .. } => lu.solve(x).expect("factor checked at construction"),
        }
    }
}

/// Factors `B`; fails if `B` is singular (to a relative pivot of `1e-14`).
pub fn factorize_b(b: &ConstraintOperator) -> Result<BFactor> {
    match b {
        ConstraintOperator::Diagonal(d) => {
            let scale = d.amax();
            if d.iter().any(|&v| !(v.abs() > 1e-14 * scale)) {
                return Err(Error::Singular("constraint matrix B"));
            }
            Ok(BFactor::Diagonal(d.clone()))
        }
        ConstraintOperator::Dense(m) => {
            if m.nrows() != m.ncols() {
                return Err(Error::DimensionMismatch {
                    context: "B must be square",
                    expected: m.nrows(),
                    found: m.ncols(),
                });
            }
            let lu = m.clone().lu();
            let u = lu.u();
            let diag = u.diagonal();
            let scale = m.amax();
            if diag.iter().any(|&v| !(v.abs() > 1e-14 * scale)) {
                return Err(Error::Singular("constraint matrix B"));
            }
            Ok(BFactor::Dense {
                lu,
                lu_t: m.transpose().lu(),
            })
        }
    }
}

/// `s = g - B u`.
pub fn slack_from_primal(u: &DVector<f64>, g: &DVector<f64>, b: &ConstraintOperator) -> DVector<f64> {
    g - b.apply(u)
}

/// `u = B^{-1}(g - s)`; rejects slacks below `-1e-12 (1 + ||g||_inf)`.
pub fn primal_from_slack(s: &DVector<f64>, g: &DVector<f64>, bf: &BFactor) -> Result<DVector<f64>> {
    let tol = 1e-12 * (1.0 + g.amax());
    if let Some((index, &value)) = s.iter().enumerate().find(|(_, &v)| v < -tol) {
        return Err(Error::InfeasibleSlack { index, value });
    }
    Ok(bf.solve(&(g - s)))
}

/// `A~^q`, sparse when `B` is diagonal and dense otherwise.
#[derive(Debug, Clone)]
pub enum TildeOperator {
    Sparse(CsrMatrix),
    Dense(DMatrix<f64>),
}

impl TildeOperator {
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            TildeOperator::Sparse(m) => m.mul_vec(x),
            TildeOperator::Dense(m) => m * x,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            TildeOperator::Sparse(m) => m.to_dense(),
            TildeOperator::Dense(m) => m.clone(),
        }
    }

    fn combine(terms: &[(f64, &TildeOperator)]) -> TildeOperator {
        match terms[0].1 {
            TildeOperator::Sparse(_) => {
                let parts: Vec<(f64, &CsrMatrix)> = terms
                    .iter()
                    .map(|(c, t)| match t {
                        TildeOperator::Sparse(m) => (*c, m),
                        TildeOperator::Dense(_) => unreachable!("mixed storage"),
                    })
                    .collect();
                TildeOperator::Sparse(CsrMatrix::linear_combination(&parts))
            }
            TildeOperator::Dense(first) => {
                let mut out = DMatrix::zeros(first.nrows(), first.ncols());
                for (c, t) in terms {
                    out += t.to_dense() * *c;
                }
                TildeOperator::Dense(out)
            }
        }
    }
}

impl LcpMatrix for TildeOperator {
    fn dim(&self) -> usize {
        match self {
            TildeOperator::Sparse(m) => m.nrows(),
            TildeOperator::Dense(m) => m.nrows(),
        }
    }

    fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        TildeOperator::mul_vec(self, x)
    }

    fn diagonal(&self) -> DVector<f64> {
        match self {
            TildeOperator::Sparse(m) => LcpMatrix::diagonal(m),
            TildeOperator::Dense(m) => LcpMatrix::diagonal(m),
        }
    }

    fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        match self {
            TildeOperator::Sparse(m) => LcpMatrix::row_dot(m, i, x),
            TildeOperator::Dense(m) => LcpMatrix::row_dot(m, i, x),
        }
    }

    fn solve_principal(&self, idx: &[usize], rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            TildeOperator::Sparse(m) => m.solve_principal(idx, rhs),
            TildeOperator::Dense(m) => m.solve_principal(idx, rhs),
        }
    }

    fn mul_cost(&self) -> u64 {
        match self {
            TildeOperator::Sparse(m) => m.mul_cost(),
            TildeOperator::Dense(m) => m.mul_cost(),
        }
    }

    fn solve_cost(&self, k: usize) -> u64 {
        match self {
            TildeOperator::Sparse(m) => m.solve_cost(k),
            TildeOperator::Dense(m) => m.solve_cost(k),
        }
    }
}

/// Affine decomposition of the slack problem. The `f~` components are ordered
/// as `-B^{-T} f^q` for each `q`, followed by `B^{-T} A^{q'} B^{-1} g^{q''}` at
/// position `Q_f + q' Q_g + q''` (zero-based), so `Q~_f = Q_f + Q_a Q_g`.
#[derive(Debug, Clone)]
pub struct DualAffineModel {
    pub atilde_components: Vec<TildeOperator>,
    pub ftilde_components: Vec<DVector<f64>>,
    pub theta: ThetaFunctions,
    pub parameter_box: ParameterBox,
}

impl DualAffineModel {
    pub fn q_ftilde(&self) -> usize {
        self.ftilde_components.len()
    }

    pub fn dim(&self) -> usize {
        self.ftilde_components[0].len()
    }

    /// `A~(mu)` and `f~(mu)`.
    pub fn assemble_at(&self, mu: &[f64]) -> Result<(TildeOperator, DVector<f64>)> {
        self.parameter_box.check(mu)?;
        let th = ThetaValues {
            a: self.theta.a.iter().map(|t| t(mu)).collect(),
            f: self.theta.f.iter().map(|t| t(mu)).collect(),
            g: self.theta.g.iter().map(|t| t(mu)).collect(),
        };
        let terms: Vec<(f64, &TildeOperator)> = th.a.iter().copied().zip(&self.atilde_components).collect();
        let a = TildeOperator::combine(&terms);
        let mut f = DVector::zeros(self.dim());
        for (c, v) in ftilde_theta(&th).iter().zip(&self.ftilde_components) {
            f.axpy(*c, v, 1.0);
        }
        Ok((a, f))
    }
}

/// Coefficients of the `f~` components: `theta_f^q`, then `theta_a^{q'} theta_g^{q''}`.
pub fn ftilde_theta(th: &ThetaValues) -> Vec<f64> {
    let mut out = th.f.clone();
    for ta in &th.a {
        for tg in &th.g {
            out.push(ta * tg);
        }
    }
    out
}

/// Builds `A~^q` and the `f~` components.
pub fn assemble_dual_affine(model: &AffineTruthModel, bf: &BFactor) -> DualAffineModel {
    let atilde_components: Vec<TildeOperator> = model
        .a_components
        .iter()
        .map(|a| match bf {
            BFactor::Diagonal(d) => {
                let dinv = d.map(|v| 1.0 / v);
                TildeOperator::Sparse(a.scale_rows_cols(&dinv, &dinv))
            }
            BFactor::Dense { .. } => {
                // B^{-T} (A B^{-1})
                let ab = a.mul_dense(&bf.solve_matrix(&DMatrix::identity(model.n_q(), model.n_q())));
                let mut out = DMatrix::zeros(ab.nrows(), ab.ncols());
                for j in 0..ab.ncols() {
                    out.set_column(j, &bf.solve_transpose(&ab.column(j).into_owned()));
                }
                TildeOperator::Dense(out)
            }
        })
        .collect();
    let mut ftilde_components: Vec<DVector<f64>> = model.f_components.iter().map(|f| -bf.solve_transpose(f)).collect();
    let binv_g: Vec<DVector<f64>> = model.g_components.iter().map(|g| bf.solve(g)).collect();
    for a in &model.a_components {
        for bg in &binv_g {
            ftilde_components.push(bf.solve_transpose(&a.mul_vec(bg)));
        }
    }
    DualAffineModel {
        atilde_components,
        ftilde_components,
        theta: model.theta.clone(),
        parameter_box: model.parameter_box.clone(),
    }
}

/// Truth slack `s` and its complementary multiplier `A~ s - f~`.
#[derive(Debug, Clone)]
pub struct DualTruthSolution {
    pub s: DVector<f64>,
    pub multiplier: DVector<f64>,
    pub iterations: usize,
}

/// Solves the truth slack LCP `0 <= s`, `A~(mu) s - f~(mu) >= 0`, complementary.
pub fn solve_truth_dual(dual: &DualAffineModel, mu: &[f64]) -> Result<DualTruthSolution> {
    solve_truth_dual_with(dual, mu, &LcpOptions::default())
}

pub fn solve_truth_dual_with(dual: &DualAffineModel, mu: &[f64], opts: &LcpOptions) -> Result<DualTruthSolution> {
    let (a, f) = dual.assemble_at(mu)?;
    let LcpSolution { z, w, iterations, .. } = solve_lcp_active_set(&Lcp::new(a, -f)?, opts).map_err(|e| Error::TruthSolve {
        mu: mu.to_vec(),
        source: Box::new(e),
    })?;
    Ok(DualTruthSolution {
        s: z,
        multiplier: w,
        iterations,
    })
}

/// Largest constraint violation `max(B u - g)` and where it occurs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub max_violation: f64,
    pub location: Option<usize>,
    /// Indices with `(B u - g)_i > tol`.
    pub violating: Vec<usize>,
    pub tol: f64,
    pub passed: bool,
}

pub fn check_feasibility(u: &DVector<f64>, model: &AffineTruthModel, mu: &[f64], tol: f64) -> Result<FeasibilityReport> {
    let th = evaluate_theta(model, mu)?;
    let mut g = DVector::zeros(model.n_q());
    for (c, gq) in th.g.iter().zip(&model.g_components) {
        g.axpy(*c, gq, 1.0);
    }
    let excess = model.b.apply(u) - g;
    let (location, max_violation) = excess
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, v)| (Some(i), v))
        .unwrap_or((None, f64::NEG_INFINITY));
    let violating = (0..excess.len()).filter(|&i| excess[i] > tol).collect::<Vec<_>>();
    Ok(FeasibilityReport {
        max_violation,
        location,
        passed: violating.is_empty(),
        violating,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_truth::{assemble_at, assemble_model, ModelSpec};
    use crate::truth::solve_truth;

    #[test]
    fn diagonal_factor_solves() {
        let bf = factorize_b(&ConstraintOperator::Diagonal(DVector::from_element(3, -1.0))).unwrap();
        let x = DVector::from_row_slice(&[1.0, -2.0, 3.0]);
        assert_eq!(bf.solve(&x), -&x);
        assert_eq!(bf.solve_transpose(&x), -&x);
        let id = factorize_b(&ConstraintOperator::Diagonal(DVector::from_element(3, 1.0))).unwrap();
        assert_eq!(id.solve(&x), x);
    }

    #[test]
    fn singular_b_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.0]);
        assert!(matches!(factorize_b(&ConstraintOperator::Dense(m)), Err(Error::Singular(_))));
        let d = DVector::from_row_slice(&[1.0, 0.0]);
        assert!(matches!(factorize_b(&ConstraintOperator::Diagonal(d)), Err(Error::Singular(_))));
    }

    #[test]
    fn dense_factor_round_trip() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -1.0, 3.0, 1.0, 0.5, 0.0, 1.0]);
        let bf = factorize_b(&ConstraintOperator::Dense(m.clone())).unwrap();
        let x = DVector::from_row_slice(&[0.3, -1.0, 2.0]);
        assert!((&m * bf.solve(&x) - &x).amax() < 1e-14);
        assert!((m.transpose() * bf.solve_transpose(&x) - &x).amax() < 1e-14);
    }

    #[test]
    fn slack_examples() {
        let b = ConstraintOperator::Diagonal(DVector::from_element(4, 1.0));
        let g = DVector::from_element(4, 0.1);
        assert_eq!(slack_from_primal(&DVector::zeros(4), &g, &b), g);
        let bf = factorize_b(&b).unwrap();
        assert_eq!(primal_from_slack(&g, &g, &bf).unwrap(), DVector::zeros(4));
        assert_eq!(primal_from_slack(&DVector::zeros(4), &g, &bf).unwrap(), g);
        let bad = DVector::from_row_slice(&[0.0, -1e-3, 0.0, 0.0]);
        assert!(matches!(primal_from_slack(&bad, &g, &bf), Err(Error::InfeasibleSlack { index: 1, .. })));
    }

    #[test]
    fn rope_full_contact_has_zero_slack() {
        let model = assemble_model(&ModelSpec::rope(10)).unwrap();
        let pts = model.mesh.as_ref().unwrap().interior_points();
        let on_obstacle = DVector::from_iterator(pts.len(), pts.iter().map(|p| 5.0 * p[0] - 10.0));
        let s = slack_from_primal(&on_obstacle, &model.g_components[0], &model.b);
        assert!(s.amax() < 1e-14);
    }

    #[test]
    fn dual_components_bookkeeping() {
        for spec in [ModelSpec::rope(20), ModelSpec::membrane(6, 6)] {
            let model = assemble_model(&spec).unwrap();
            let bf = factorize_b(&model.b).unwrap();
            let dual = assemble_dual_affine(&model, &bf);
            assert_eq!(dual.q_ftilde(), 2);
            assert_eq!(dual.atilde_components[0].to_dense(), model.a_components[0].to_dense());
            let mu = [model.parameter_box.lower[0]];
            let (a, f, g) = assemble_at(&model, &mu).unwrap();
            let direct = bf.solve_transpose(&(a.mul_vec(&bf.solve(&g)) - f));
            let (_, ft) = dual.assemble_at(&mu).unwrap();
            assert!((ft - &direct).amax() <= 1e-12 * direct.amax());
        }
    }

    #[test]
    fn dual_and_primal_truth_agree() {
        let model = assemble_model(&ModelSpec::rope(200)).unwrap();
        let bf = factorize_b(&model.b).unwrap();
        let dual = assemble_dual_affine(&model, &bf);
        let truth = solve_truth(&model, &[0.01]).unwrap();
        let s = solve_truth_dual(&dual, &[0.01]).unwrap().s;
        let u = primal_from_slack(&s, &model.g_components[0], &bf).unwrap();
        assert!(model.v_norm(&(&u - &truth.u)) <= 1e-8 * model.v_norm(&truth.u));
        let back = primal_from_slack(&slack_from_primal(&truth.u, &model.g_components[0], &model.b), &model.g_components[0], &bf).unwrap();
        assert!((back - &truth.u).amax() <= 1e-12 * truth.u.amax());
    }

    #[test]
    fn feasibility_detects_constructed_violation() {
        let model = assemble_model(&ModelSpec::membrane(4, 4)).unwrap();
        let mut u = DVector::from_element(model.n_v(), 0.1);
        u[3] += 1e-6;
        let rep = check_feasibility(&u, &model, &[0.5], 1e-12).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.location, Some(3));
        assert!((rep.max_violation - 1e-6).abs() < 1e-15);
    }
}
