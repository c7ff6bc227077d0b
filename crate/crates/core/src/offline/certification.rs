use nalgebra::{DMatrix, DVector};

use crate::dual_slack::{ftilde_theta, BFactor};
use crate::error::{Error, Result};
use crate::fe_truth::{AffineTruthModel, ThetaValues};
use crate::linalg::{sparse_lambda_max, symmetric_extremes, weighted_r_factor};

use super::spaces::{DualRBSpace, PrimalRBSpace};

/// Gramian `G_ij = p_i^T X_V^{-1} p_j` of the residual pieces `p_i`, together
/// with a triangular factor `R` (`G = R^T R`) from an X_V-orthogonal QR of the
/// Riesz representers. Dual norms are evaluated as `||R c||`, which keeps full
/// relative accuracy when the pieces nearly cancel.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGramian {
    pub gram: DMatrix<f64>,
    pub factor: DMatrix<f64>,
}

/// Relative accuracy assumed for residual norms evaluated from stored pieces.
pub const RESIDUAL_ROUNDING: f64 = 1e-13;

impl ResidualGramian {
    pub fn from_pieces(model: &AffineTruthModel, pieces: &[DVector<f64>]) -> Self {
        let riesz: Vec<DVector<f64>> = pieces.iter().map(|p| model.x_v_factor.solve(p)).collect();
        let m = pieces.len();
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = 0.5 * (pieces[i].dot(&riesz[j]) + pieces[j].dot(&riesz[i]));
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let factor = weighted_r_factor(&riesz, |v| model.x_v.mul_vec(v), 0.0);
        Self { gram, factor }
    }

    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.nrows() == 0
    }

    /// `sqrt(c^T G c)` through the factor.
    pub fn norm(&self, c: &DVector<f64>) -> f64 {
        (&self.factor * c).norm()
    }

    /// Allowance for floating point error in `norm(c)`: a relative
    /// `RESIDUAL_ROUNDING` of `sum_i |c_i| ||p_i||`, the scale at which
    /// cancellation between pieces loses accuracy.
    pub fn rounding_allowance(&self, c: &DVector<f64>) -> f64 {
        RESIDUAL_ROUNDING * c.iter().enumerate().map(|(i, v)| v.abs() * self.gram[(i, i)].max(0.0).sqrt()).sum::<f64>()
    }

    /// `c^T G c` directly from the Gramian. Values below
    /// `-1e-12 |c|^T |G| |c|` signal a corrupted Gramian; smaller negative
    /// roundoff is clamped to zero.
    pub fn quadratic_form(&self, c: &DVector<f64>) -> Result<f64> {
        let value = c.dot(&(&self.gram * c));
        let abs_c = c.abs();
        let scale = abs_c.dot(&(self.gram.abs() * &abs_c));
        if value < -1e-12 * scale {
            return Err(Error::CorruptGramian { value });
        }
        Ok(value.max(0.0))
    }
}

/// Coefficients of the primal-dual residual pieces
/// `[f^q | A^q B^{-1} g^{q'} | A^q B^{-1} zeta_l | B^T psi_k]`.
pub fn primal_dual_coefficients(th: &ThetaValues, s_bar: &DVector<f64>, lambda_bar: &DVector<f64>) -> DVector<f64> {
    let mut c = Vec::with_capacity(th.f.len() + th.a.len() * (th.g.len() + s_bar.len()) + lambda_bar.len());
    c.extend_from_slice(&th.f);
    c.extend(ftilde_theta(th)[th.f.len()..].iter().map(|v| -v));
    for ta in &th.a {
        c.extend(s_bar.iter().map(|s| ta * s));
    }
    c.extend(lambda_bar.iter().map(|l| -l));
    DVector::from_vec(c)
}

/// Coefficients of the primal-only residual pieces `[f^q | A^q phi_i | B^T psi_k]`.
pub fn primal_only_coefficients(th: &ThetaValues, u_bar: &DVector<f64>, lambda_bar: &DVector<f64>) -> DVector<f64> {
    let mut c = Vec::with_capacity(th.f.len() + th.a.len() * u_bar.len() + lambda_bar.len());
    c.extend_from_slice(&th.f);
    for ta in &th.a {
        c.extend(u_bar.iter().map(|u| -ta * u));
    }
    c.extend(lambda_bar.iter().map(|l| -l));
    DVector::from_vec(c)
}

/// Coercivity and continuity bounds in the X_V norm.
#[derive(Debug, Clone, PartialEq)]
pub enum StabilityBounds {
    /// Every `A^q = c_q X_V`, so `alpha = gamma = sum theta_q c_q` exactly.
    Proportional { coefficients: Vec<f64> },
    /// Extreme generalized eigenvalues of `(A^q, X_V)` for symmetric components;
    /// `alpha_LB = sum min(theta lo, theta hi)`, `gamma_UB = sum |theta| max(|lo|, |hi|)`.
    Rayleigh { lower: Vec<f64>, upper: Vec<f64> },
}

impl StabilityBounds {
    pub fn analyze(model: &AffineTruthModel) -> Result<Self> {
        let coefficients: Option<Vec<f64>> = model
            .a_components
            .iter()
            .map(|a| a.proportionality_to(&model.x_v, 1e-14))
            .collect();
        if let Some(coefficients) = coefficients {
            return Ok(StabilityBounds::Proportional { coefficients });
        }
        let chol = model
            .x_v
            .to_dense()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite {
                context: "X_V",
                pivot: 0,
            })?;
        let l = chol.l();
        let (mut lower, mut upper) = (Vec::new(), Vec::new());
        for a in &model.a_components {
            // L^{-1} A L^{-T}
            let left = l.solve_lower_triangular(&a.to_dense()).ok_or(Error::Singular("X_V factor"))?;
            let both = l
                .solve_lower_triangular(&left.transpose())
                .ok_or(Error::Singular("X_V factor"))?;
            let (lo, hi) = symmetric_extremes(&both);
            lower.push(lo);
            upper.push(hi);
        }
        Ok(StabilityBounds::Rayleigh { lower, upper })
    }

    /// `(alpha_LB, gamma_UB)` for the given stiffness coefficients.
    pub fn evaluate(&self, theta_a: &[f64]) -> (f64, f64) {
        match self {
            StabilityBounds::Proportional { coefficients } => {
                let v: f64 = theta_a.iter().zip(coefficients).map(|(t, c)| t * c).sum();
                (v, v.abs())
            }
            StabilityBounds::Rayleigh { lower, upper } => {
                let mut alpha = 0.0;
                let mut gamma = 0.0;
                for ((t, lo), hi) in theta_a.iter().zip(lower).zip(upper) {
                    alpha += (t * lo).min(t * hi);
                    gamma += t.abs() * lo.abs().max(hi.abs());
                }
                (alpha, gamma)
            }
        }
    }
}

/// `(alpha_LB(mu), gamma_UB(mu))`.
pub fn stability_bounds(model: &AffineTruthModel, mu: &[f64]) -> Result<(f64, f64)> {
    let th = crate::fe_truth::evaluate_theta(model, mu)?;
    Ok(StabilityBounds::analyze(model)?.evaluate(&th.a))
}

/// Inf-sup constant `beta = sqrt(lambda_min(B X_V^{-1} B^T))` with the
/// Euclidean multiplier norm, computed as `1 / sqrt(lambda_max(B^{-T} X_V B^{-1}))`.
pub fn compute_beta(model: &AffineTruthModel, bf: &BFactor) -> Result<f64> {
    let lambda_max = match bf {
        BFactor::Diagonal(d) => {
            let dinv = d.map(|v| 1.0 / v);
            sparse_lambda_max(&model.x_v.scale_rows_cols(&dinv, &dinv))?
        }
        BFactor::Dense { .. } => {
            let n = model.n_q();
            let binv = bf.solve_matrix(&DMatrix::identity(n, n));
            let c = binv.transpose() * model.x_v.mul_dense(&binv);
            symmetric_extremes(&c).1
        }
    };
    if !(lambda_max > 0.0) {
        return Err(Error::NotPositiveDefinite {
            context: "inf-sup eigenproblem",
            pivot: 0,
        });
    }
    Ok(1.0 / lambda_max.sqrt())
}

/// Everything the online stage needs to certify an approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationData {
    pub primal_dual: ResidualGramian,
    pub primal_only: ResidualGramian,
    pub beta: f64,
    pub stability: StabilityBounds,
}

/// Residual pieces of the primal-dual residual.
pub fn primal_dual_pieces(
    model: &AffineTruthModel,
    bf: &BFactor,
    primal: &PrimalRBSpace,
    dual: &DualRBSpace,
) -> Vec<DVector<f64>> {
    let y = bf.solve_matrix(&dual.zeta);
    let mut pieces: Vec<DVector<f64>> = model.f_components.clone();
    let binv_g: Vec<DVector<f64>> = model.g_components.iter().map(|g| bf.solve(g)).collect();
    for a in &model.a_components {
        for bg in &binv_g {
            pieces.push(a.mul_vec(bg));
        }
    }
    for a in &model.a_components {
        for l in 0..y.ncols() {
            pieces.push(a.mul_vec(&y.column(l).into_owned()));
        }
    }
    for k in 0..primal.n_q() {
        pieces.push(model.b.apply_transpose(&primal.psi.column(k).into_owned()));
    }
    pieces
}

/// Residual pieces of the primal-only residual.
pub fn primal_only_pieces(model: &AffineTruthModel, primal: &PrimalRBSpace) -> Vec<DVector<f64>> {
    let mut pieces: Vec<DVector<f64>> = model.f_components.clone();
    for a in &model.a_components {
        for i in 0..primal.n_v() {
            pieces.push(a.mul_vec(&primal.phi.column(i).into_owned()));
        }
    }
    for k in 0..primal.n_q() {
        pieces.push(model.b.apply_transpose(&primal.psi.column(k).into_owned()));
    }
    pieces
}

pub fn build_certification(
    model: &AffineTruthModel,
    bf: &BFactor,
    primal: &PrimalRBSpace,
    dual: &DualRBSpace,
) -> Result<CertificationData> {
    Ok(CertificationData {
        primal_dual: ResidualGramian::from_pieces(model, &primal_dual_pieces(model, bf, primal, dual)),
        primal_only: ResidualGramian::from_pieces(model, &primal_only_pieces(model, primal)),
        beta: compute_beta(model, bf)?,
        stability: StabilityBounds::analyze(model)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual_slack::factorize_b;
    use crate::fe_truth::{assemble_model, AffineParts, ConstraintOperator, ModelSpec, ParameterBox, ThetaFunctions};
    use crate::sparse::CsrMatrix;

    #[test]
    fn beta_of_identity_constraints() {
        for sign in [1.0, -1.0] {
            let n = 5;
            let model = AffineTruthModel::from_parts(AffineParts {
                a_components: vec![CsrMatrix::identity(n)],
                f_components: vec![DVector::zeros(n)],
                g_components: vec![DVector::zeros(n)],
                b: ConstraintOperator::Diagonal(DVector::from_element(n, sign)),
                x_v: CsrMatrix::identity(n),
                theta: ThetaFunctions::linear_diffusion(),
                parameter_box: ParameterBox::interval(1.0, 2.0),
            })
            .unwrap();
            let beta = compute_beta(&model, &factorize_b(&model.b).unwrap()).unwrap();
            assert!((beta - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn model_constants_are_exact() {
        let model = assemble_model(&ModelSpec::rope(50)).unwrap();
        assert_eq!(stability_bounds(&model, &[0.001]).unwrap(), (0.001, 0.001));
        let model = assemble_model(&ModelSpec::membrane(6, 6)).unwrap();
        assert_eq!(stability_bounds(&model, &[0.55]).unwrap(), (0.55, 0.55));
        assert!(matches!(stability_bounds(&model, &[0.7]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn rayleigh_bounds_bracket_the_spectrum() {
        let model = assemble_model(&ModelSpec::rope(20)).unwrap();
        let mut t = Vec::new();
        for i in 0..19 {
            t.push((i, i, 1.0 + i as f64 * 0.1));
        }
        let mut parts = AffineParts {
            a_components: vec![model.a_components[0].clone(), CsrMatrix::from_triplets(19, 19, &t)],
            f_components: model.f_components.clone(),
            g_components: model.g_components.clone(),
            b: model.b.clone(),
            x_v: model.x_v.clone(),
            theta: ThetaFunctions::linear_diffusion(),
            parameter_box: model.parameter_box.clone(),
        };
        parts.theta.a.push(std::sync::Arc::new(|_: &[f64]| 1.0));
        let m2 = AffineTruthModel::from_parts(parts).unwrap();
        let bounds = StabilityBounds::analyze(&m2).unwrap();
        assert!(matches!(bounds, StabilityBounds::Rayleigh { .. }));
        let (alpha, gamma) = bounds.evaluate(&[0.005, 1.0]);
        // exact generalized extremes of (0.005 X_V + D, X_V)
        let a = m2.a_components[0].to_dense() * 0.005 + m2.a_components[1].to_dense();
        let l = m2.x_v.to_dense().cholesky().unwrap().l();
        let left = l.solve_lower_triangular(&a).unwrap();
        let (lo, hi) = symmetric_extremes(&l.solve_lower_triangular(&left.transpose()).unwrap());
        assert!(alpha <= lo * (1.0 + 1e-12) && gamma >= hi * (1.0 - 1e-12));
    }

    #[test]
    fn single_piece_norm() {
        let model = assemble_model(&ModelSpec::membrane(6, 6)).unwrap();
        let g = ResidualGramian::from_pieces(&model, &model.f_components);
        let f = &model.f_components[0];
        let exact = f.dot(&model.x_v_factor.solve(f)).sqrt();
        let c = DVector::from_element(1, -2.0);
        assert!((g.norm(&c) - 2.0 * exact).abs() < 1e-14 * exact);
        assert!((g.quadratic_form(&c).unwrap().sqrt() - 2.0 * exact).abs() < 1e-12 * exact);
        assert_eq!(g.norm(&DVector::zeros(1)), 0.0);
    }

    #[test]
    fn corrupted_gramian_is_detected() {
        let g = ResidualGramian {
            gram: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            factor: DMatrix::identity(2, 2),
        };
        let c = DVector::from_row_slice(&[1.0, -1.0]);
        assert!(matches!(g.quadratic_form(&c), Err(Error::CorruptGramian { .. })));
    }
}
