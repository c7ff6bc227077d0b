use nalgebra::{DMatrix, DVector};

use crate::dual_slack::BFactor;
use crate::fe_truth::AffineTruthModel;

use super::spaces::{DualRBSpace, PrimalRBSpace};

/// Parameter-independent reduced blocks of the primal and slack problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedOperators {
    /// `phi^T A^q phi`.
    pub a_n: Vec<DMatrix<f64>>,
    /// `psi^T B phi`.
    pub b_n: DMatrix<f64>,
    /// `phi^T f^q`.
    pub f_n: Vec<DVector<f64>>,
    /// `psi^T g^q`.
    pub g_n: Vec<DVector<f64>>,
    /// `Y^T A^q Y` with `Y = B^{-1} zeta`.
    pub atilde_n: Vec<DMatrix<f64>>,
    /// `-Y^T f^q`, then `Y^T A^{q'} B^{-1} g^{q''}`.
    pub ftilde_n: Vec<DVector<f64>>,
    /// Pairing matrix `psi^T zeta`.
    pub pairing: DMatrix<f64>,
}

impl ReducedOperators {
    pub fn n_v(&self) -> usize {
        self.b_n.ncols()
    }

    pub fn n_q(&self) -> usize {
        self.b_n.nrows()
    }

    pub fn n_s(&self) -> usize {
        self.pairing.ncols()
    }
}

/// Projects every affine component onto the reduced spaces.
pub fn reduce_operators(
    model: &AffineTruthModel,
    bf: &BFactor,
    primal: &PrimalRBSpace,
    dual: &DualRBSpace,
) -> ReducedOperators {
    let phi = &primal.phi;
    let psi = &primal.psi;
    let y = bf.solve_matrix(&dual.zeta);
    let a_n = model.a_components.iter().map(|a| phi.tr_mul(&a.mul_dense(phi))).collect();
    let b_n = psi.tr_mul(&model.b.apply_matrix(phi));
    let f_n = model.f_components.iter().map(|f| phi.tr_mul(f)).collect();
    let g_n = model.g_components.iter().map(|g| psi.tr_mul(g)).collect();
    let atilde_n = model.a_components.iter().map(|a| y.tr_mul(&a.mul_dense(&y))).collect();
    let mut ftilde_n: Vec<DVector<f64>> = model.f_components.iter().map(|f| -y.tr_mul(f)).collect();
    let binv_g: Vec<DVector<f64>> = model.g_components.iter().map(|g| bf.solve(g)).collect();
    for a in &model.a_components {
        for bg in &binv_g {
            ftilde_n.push(y.tr_mul(&a.mul_vec(bg)));
        }
    }
    ReducedOperators {
        a_n,
        b_n,
        f_n,
        g_n,
        atilde_n,
        ftilde_n,
        pairing: psi.tr_mul(&dual.zeta),
    }
}
