//! Offline stage: snapshots, reduced spaces, reduced operators and
//! certification data.

mod artifact;
mod certification;
mod reduced;
mod snapshots;
mod spaces;

pub use artifact::{
    decode_offline, decode_spec, encode_offline, encode_spec, load_offline, save_offline, OfflineArtifact,
    ARTIFACT_MAGIC, ARTIFACT_VERSION,
};
pub use certification::{
    build_certification, compute_beta, primal_dual_coefficients, primal_dual_pieces, primal_only_coefficients,
    primal_only_pieces, stability_bounds, RESIDUAL_ROUNDING, CertificationData, ResidualGramian, StabilityBounds,
};
pub use reduced::{reduce_operators, ReducedOperators};
pub use snapshots::{equidistant_parameters, generate_snapshots, generate_snapshots_with, uniform_parameters, SnapshotSet};
pub use spaces::{build_dual_space, build_primal_space, ColumnSource, DualRBSpace, PrimalRBSpace, SpaceOptions, SupremizerKind};

use crate::complementarity::LcpOptions;
use crate::dual_slack::factorize_b;
use crate::error::Result;
use crate::fe_truth::AffineTruthModel;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OfflineOptions {
    pub spaces: SpaceOptions,
    pub lcp: LcpOptions,
}

/// Runs the whole offline stage for the given snapshot parameters.
pub fn build_offline(model: &AffineTruthModel, params: &[Vec<f64>], opts: &OfflineOptions) -> Result<OfflineArtifact> {
    let snapshots = generate_snapshots_with(model, params, &opts.lcp)?;
    build_offline_from_snapshots(model, &snapshots, opts)
}

pub fn build_offline_from_snapshots(
    model: &AffineTruthModel,
    snapshots: &SnapshotSet,
    opts: &OfflineOptions,
) -> Result<OfflineArtifact> {
    let bf = factorize_b(&model.b)?;
    let primal = build_primal_space(snapshots, model, &opts.spaces)?;
    let dual = build_dual_space(snapshots, &opts.spaces)?;
    let reduced = reduce_operators(model, &bf, &primal, &dual);
    let certification = build_certification(model, &bf, &primal, &dual)?;
    Ok(OfflineArtifact {
        spec: model.spec.clone(),
        theta: model.theta.clone(),
        parameter_box: model.parameter_box.clone(),
        snapshot_parameters: snapshots.parameters.clone(),
        b_phi: model.b.apply_matrix(&primal.phi),
        binv_g: model.g_components.iter().map(|g| bf.solve(g)).collect(),
        y: bf.solve_matrix(&dual.zeta),
        b: model.b.clone(),
        g_components: model.g_components.clone(),
        primal,
        dual,
        reduced,
        certification,
    })
}
