use std::sync::OnceLock;

use nalgebra::{DVector, SymmetricEigen};

use rbvi::dual_slack::factorize_b;
use rbvi::experiment::compare_with_truth;
use rbvi::fe_truth::{assemble_model, AffineTruthModel, ModelSpec};
use rbvi::offline::{
    build_offline, compute_beta, decode_offline, encode_offline, equidistant_parameters, load_offline, save_offline,
    stability_bounds, OfflineArtifact, OfflineOptions, ARTIFACT_MAGIC,
};
use rbvi::online::{evaluate, reconstruct_u_dual, theta_values};
use rbvi::truth::solve_truth;
use rbvi::Error;

struct Fixture {
    model: AffineTruthModel,
    art: OfflineArtifact,
}

fn build(spec: ModelSpec, n: usize) -> Fixture {
    let model = assemble_model(&spec).unwrap();
    let params = equidistant_parameters(&model.parameter_box, n).unwrap();
    let art = build_offline(&model, &params, &OfflineOptions::default()).unwrap();
    Fixture { model, art }
}

fn rope() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| build(ModelSpec::rope(200), 25))
}

fn membrane() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| build(ModelSpec::membrane(32, 32), 15))
}

#[test]
fn rope_dimensions() {
    let art = &rope().art;
    assert!(art.primal.n_v() <= 26);
    assert!(art.primal.n_q() <= 25);
    assert!(art.dual.n_s() <= 25);
    assert_eq!(art.n_truth(), 199);
}

#[test]
fn stored_reduced_entries_match_recomputation() {
    for f in [rope(), membrane()] {
        let (m, art) = (&f.model, &f.art);
        let r = &art.reduced;
        let phi = &art.primal.phi;
        let a_phi = m.a_components[0].mul_dense(phi);
        let direct = phi.transpose() * a_phi;
        assert!((&direct - &r.a_n[0]).amax() <= 1e-12 * direct.amax());
        let y = factorize_b(&m.b).unwrap().solve_matrix(&art.dual.zeta);
        let direct = y.transpose() * m.a_components[0].mul_dense(&y);
        assert!((&direct - &r.atilde_n[0]).amax() <= 1e-12 * direct.amax());
        let direct = art.primal.psi.transpose() * &art.dual.zeta;
        assert!((&direct - &r.pairing).amax() <= 1e-12 * direct.amax());
        let direct = art.primal.psi.transpose() * m.b.apply_matrix(phi);
        assert!((&direct - &r.b_n).amax() <= 1e-12 * direct.amax());
    }
}

#[test]
fn beta_matches_dense_eigensolve() {
    let m = &rope().model;
    let xv_inv = m.x_v.to_dense().try_inverse().unwrap();
    let b = m.b.to_dense();
    let s = &b * xv_inv * b.transpose();
    let oracle = SymmetricEigen::new(s).eigenvalues.min().sqrt();
    let beta = compute_beta(m, &factorize_b(&m.b).unwrap()).unwrap();
    assert!((beta - oracle).abs() <= 1e-10 * oracle, "{beta} vs {oracle}");
    assert_eq!(rope().art.certification.beta, beta);
}

#[test]
fn stability_constants_equal_the_parameter() {
    assert_eq!(stability_bounds(&rope().model, &[0.001]).unwrap(), (0.001, 0.001));
    assert_eq!(stability_bounds(&membrane().model, &[0.55]).unwrap(), (0.55, 0.55));
    assert!(matches!(stability_bounds(&rope().model, &[0.5]), Err(Error::OutOfDomain { .. })));
}

#[test]
fn snapshot_parameter_gives_unit_slack_coordinates() {
    for f in [rope(), membrane()] {
        let art = &f.art;
        for (k, &j) in art.dual.sources.iter().enumerate() {
            let res = evaluate(art, &art.snapshot_parameters[j]).unwrap();
            let mut unit = DVector::zeros(art.dual.n_s());
            unit[k] = 1.0;
            assert!((&res.dual.s_bar - unit).amax() <= 1e-8, "source {j}: {}", res.dual.s_bar);
        }
    }
}

#[test]
fn bounds_collapse_at_snapshot_parameters() {
    for f in [rope(), membrane()] {
        for mu in &f.art.snapshot_parameters {
            let truth = solve_truth(&f.model, mu).unwrap();
            let res = evaluate(&f.art, mu).unwrap();
            let scale = f.model.v_norm(&truth.u);
            assert!(res.bounds.primal_dual.delta_u <= 1e-6 * scale, "{mu:?}: {}", res.bounds.primal_dual.delta_u);
            assert!(res.bounds.primal_dual.residual_norm <= 1e-8 * scale);
        }
    }
}

#[test]
fn midpoint_bounds_dominate_errors() {
    for f in [rope(), membrane()] {
        let bx = &f.model.parameter_box;
        let mid = [(bx.lower[0] + bx.upper[0]) / 2.0 + 1e-4 * (bx.upper[0] - bx.lower[0])];
        let rec = compare_with_truth(&f.model, &f.art, &solve_truth(&f.model, &mid).unwrap()).unwrap();
        assert_eq!(rec.bound_violations(), 0, "{rec:?}");
        assert!(rec.err_u_du > 0.0 && rec.err_u_pr > 0.0);
        assert!(rec.bnd_u_prdu <= rec.bnd_u_pr);
    }
}

#[test]
fn primal_only_approximation_leaves_the_constraint_set() {
    let f = build(ModelSpec::rope(200), 5);
    let mu = [0.0037];
    let rec = compare_with_truth(&f.model, &f.art, &solve_truth(&f.model, &mu).unwrap()).unwrap();
    assert!(rec.violation_pr > 0.0);
    assert!(rec.violation_du <= 0.0);
    let res = evaluate(&f.art, &mu).unwrap();
    assert!(res.bounds.primal_only.delta1 > 0.0);
}

#[test]
fn negative_slack_coordinates_are_rejected() {
    let art = &membrane().art;
    let th = theta_values(art, &[0.5]).unwrap();
    let mut s = DVector::zeros(art.dual.n_s());
    s[0] = -1e-3;
    assert!(matches!(reconstruct_u_dual(art, &th, &s), Err(Error::InfeasibleSlack { index: 0, .. })));
}

#[test]
fn queries_outside_the_box_fail() {
    assert!(matches!(evaluate(&rope().art, &[0.02]), Err(Error::OutOfDomain { .. })));
    assert!(evaluate(&rope().art, &[0.001, 0.002]).is_err());
}

#[test]
fn artifact_round_trip_is_lossless() {
    let art = &membrane().art;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rbvi");
    save_offline(art, &path).unwrap();
    let back = load_offline(&path).unwrap();
    assert_eq!(back.reduced, art.reduced);
    assert_eq!(back.primal, art.primal);
    assert_eq!(back.dual, art.dual);
    assert_eq!(back.certification, art.certification);
    assert_eq!((&back.y, &back.b_phi, &back.binv_g), (&art.y, &art.b_phi, &art.binv_g));
    let mu = [0.4731 + 0.05];
    let (a, b) = (evaluate(art, &mu).unwrap(), evaluate(&back, &mu).unwrap());
    assert_eq!(a.dual.s_bar, b.dual.s_bar);
    assert_eq!(a.bounds.primal_dual.delta_u, b.bounds.primal_dual.delta_u);
}

#[test]
fn damaged_artifacts_are_rejected() {
    let bytes = encode_offline(&rope().art).unwrap();
    assert!(decode_offline(&bytes[..bytes.len() / 2]).is_err());
    let mut wrong = bytes.clone();
    wrong[ARTIFACT_MAGIC.len()..ARTIFACT_MAGIC.len() + 4].copy_from_slice(&99u32.to_le_bytes());
    assert!(matches!(decode_offline(&wrong), Err(Error::VersionMismatch { found: 99, .. })));
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(decode_offline(&flipped).is_err());
    assert!(decode_offline(b"RBVI").is_err());
}

#[test]
fn online_evaluation_is_deterministic() {
    let art = &rope().art;
    let a = evaluate(art, &[0.0042]).unwrap();
    let b = evaluate(art, &[0.0042]).unwrap();
    assert_eq!(a.ops_primal_dual, b.ops_primal_dual);
    assert_eq!(a.primal.u_bar, b.primal.u_bar);
    assert_eq!(a.bounds.primal_only.delta_u, b.bounds.primal_only.delta_u);
}
