use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fe_truth::AffineTruthModel;
use crate::linalg::{columns_to_matrix, cone_generators, WeightedOrthoBasis};

use super::snapshots::SnapshotSet;

/// How the primal space is enriched for inf-sup stability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupremizerKind {
    /// One function per load component: `X_V t_q = f^q`.
    Forcing,
    /// One function per multiplier basis vector: `X_V t_k = B^T psi_k`.
    PerMultiplier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceOptions {
    /// Relative remainder below which a column counts as dependent.
    pub droptol: f64,
    pub supremizer: SupremizerKind,
}

impl Default for SpaceOptions {
    fn default() -> Self {
        Self {
            droptol: 1e-10,
            supremizer: SupremizerKind::Forcing,
        }
    }
}

/// Origin of a primal basis column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnSource {
    Snapshot(usize),
    Supremizer(usize),
}

/// `phi` is X_V-orthonormal; `psi` holds raw, nonnegative multiplier snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalRBSpace {
    pub phi: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub n_sup: usize,
    pub phi_sources: Vec<ColumnSource>,
    /// Snapshot index of each `psi` column.
    pub psi_sources: Vec<usize>,
}

impl PrimalRBSpace {
    pub fn n_v(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_q(&self) -> usize {
        self.psi.ncols()
    }
}

/// Raw, nonnegative slack snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRBSpace {
    pub zeta: DMatrix<f64>,
    pub sources: Vec<usize>,
}

impl DualRBSpace {
    pub fn n_s(&self) -> usize {
        self.zeta.ncols()
    }
}

/// Clips roundoff-level negative entries to zero; anything more negative than
/// `-1e-12 max(1, ||v||_inf)` is an error.
fn nonnegative(column: usize, v: &DVector<f64>) -> Result<DVector<f64>> {
    let tol = 1e-12 * v.amax().max(1.0);
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| x < -tol) {
        return Err(Error::NegativeSnapshot { column, index, value });
    }
    Ok(v.map(|x| x.max(0.0)))
}

/// X_V-Gram-Schmidt of the field snapshots followed by the supremizers. The
/// multiplier snapshots are kept raw, so that their nonnegative span stays
/// inside the multiplier cone, and pruned to generators of that span.
pub fn build_primal_space(snapshots: &SnapshotSet, model: &AffineTruthModel, opts: &SpaceOptions) -> Result<PrimalRBSpace> {
    if snapshots.is_empty() {
        return Err(Error::EmptyBasis("no snapshots"));
    }
    let lambdas = snapshots
        .solutions
        .iter()
        .enumerate()
        .map(|(j, s)| nonnegative(j, &s.lambda))
        .collect::<Result<Vec<_>>>()?;
    let psi_sources = cone_generators(&lambdas, opts.droptol);
    let psi = columns_to_matrix(model.n_q(), &psi_sources.iter().map(|&j| lambdas[j].clone()).collect::<Vec<_>>());

    let x_v = &model.x_v;
    let mut basis = WeightedOrthoBasis::new(|v| x_v.mul_vec(v), opts.droptol);
    let mut phi_sources = Vec::new();
    for (j, s) in snapshots.solutions.iter().enumerate() {
        if basis.offer(&s.u).accepted {
            phi_sources.push(ColumnSource::Snapshot(j));
        }
    }
    let rhs: Vec<DVector<f64>> = match opts.supremizer {
        SupremizerKind::Forcing => model.f_components.clone(),
        SupremizerKind::PerMultiplier => (0..psi.ncols())
            .map(|k| model.b.apply_transpose(&psi.column(k).into_owned()))
            .collect(),
    };
    let mut n_sup = 0;
    for (k, r) in rhs.iter().enumerate() {
        let t = model.x_v_factor.solve(r);
        if basis.offer(&t).accepted {
            phi_sources.push(ColumnSource::Supremizer(k));
            n_sup += 1;
        }
    }
    if basis.is_empty() {
        return Err(Error::EmptyBasis("primal space"));
    }
    Ok(PrimalRBSpace {
        phi: basis.into_matrix(model.n_v()),
        psi,
        n_sup,
        phi_sources,
        psi_sources,
    })
}

/// Slack snapshots pruned to generators of their nonnegative span, in
/// snapshot order.
pub fn build_dual_space(snapshots: &SnapshotSet, opts: &SpaceOptions) -> Result<DualRBSpace> {
    if snapshots.is_empty() {
        return Err(Error::EmptyBasis("no snapshots"));
    }
    let slacks = snapshots
        .solutions
        .iter()
        .enumerate()
        .map(|(j, s)| nonnegative(j, &s.slack))
        .collect::<Result<Vec<_>>>()?;
    let sources = cone_generators(&slacks, opts.droptol);
    let n = slacks[0].len();
    Ok(DualRBSpace {
        zeta: columns_to_matrix(n, &sources.iter().map(|&j| slacks[j].clone()).collect::<Vec<_>>()),
        sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe_truth::{assemble_model, ModelSpec};
    use crate::offline::snapshots::{equidistant_parameters, generate_snapshots};

    #[test]
    fn rope_spaces_have_expected_shape() {
        let model = assemble_model(&ModelSpec::rope(200)).unwrap();
        let params = equidistant_parameters(&model.parameter_box, 25).unwrap();
        let snaps = generate_snapshots(&model, &params).unwrap();
        let primal = build_primal_space(&snaps, &model, &SpaceOptions::default()).unwrap();
        assert!(primal.n_v() <= 26 && primal.n_q() <= 25);
        assert_eq!(primal.n_sup, 1);
        let gram = primal.phi.transpose() * model.x_v.mul_dense(&primal.phi);
        assert!((gram - DMatrix::identity(primal.n_v(), primal.n_v())).amax() <= 1e-10);
        assert!(primal.psi.min() >= 0.0);
        let dual = build_dual_space(&snaps, &SpaceOptions::default()).unwrap();
        assert!(dual.n_s() <= 25 && dual.zeta.min() >= 0.0);
    }

    #[test]
    fn duplicate_parameters_are_dropped() {
        let model = assemble_model(&ModelSpec::membrane(8, 8)).unwrap();
        let snaps = generate_snapshots(&model, &[vec![0.5], vec![0.5]]).unwrap();
        let primal = build_primal_space(&snaps, &model, &SpaceOptions::default()).unwrap();
        assert_eq!(primal.phi_sources, vec![ColumnSource::Snapshot(0), ColumnSource::Supremizer(0)]);
        assert_eq!(primal.psi_sources, vec![0]);
        assert_eq!(build_dual_space(&snaps, &SpaceOptions::default()).unwrap().sources, vec![0]);
    }

    #[test]
    fn negative_snapshot_entries_are_rejected() {
        assert!(matches!(
            nonnegative(3, &DVector::from_row_slice(&[1.0, -0.5])),
            Err(Error::NegativeSnapshot { column: 3, index: 1, .. })
        ));
        assert_eq!(nonnegative(0, &DVector::from_row_slice(&[1.0, -1e-15])).unwrap()[1], 0.0);
    }
}
