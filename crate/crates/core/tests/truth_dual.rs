use nalgebra::{DMatrix, DVector};

use rbvi::complementarity::{solve_mixed_kkt, LcpOptions};
use rbvi::dual_slack::{
    assemble_dual_affine, check_feasibility, factorize_b, primal_from_slack, slack_from_primal, solve_truth_dual,
};
use rbvi::fe_truth::{assemble_at, assemble_model, ModelSpec};
use rbvi::truth::solve_truth;

fn rel_v(model: &rbvi::fe_truth::AffineTruthModel, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    model.v_norm(&(a - b)) / model.v_norm(b)
}

#[test]
fn rope_slack_round_trip_at_largest_parameter() {
    let model = assemble_model(&ModelSpec::rope(200)).unwrap();
    let mu = [0.01];
    let truth = solve_truth(&model, &mu).unwrap();
    let (_, _, g) = assemble_at(&model, &mu).unwrap();
    let bf = factorize_b(&model.b).unwrap();
    let s = slack_from_primal(&truth.u, &g, &model.b);
    assert!(s.min() >= -1e-12 * g.amax());
    let back = primal_from_slack(&s, &g, &bf).unwrap();
    assert!((back - &truth.u).amax() <= 1e-12 * truth.u.amax());
}

#[test]
fn slack_formulation_reproduces_the_truth() {
    for (spec, mu) in [(ModelSpec::rope(200), 0.01), (ModelSpec::membrane(32, 32), 0.5)] {
        let model = assemble_model(&spec).unwrap();
        let bf = factorize_b(&model.b).unwrap();
        let dual = assemble_dual_affine(&model, &bf);
        let slack = solve_truth_dual(&dual, &[mu]).unwrap();
        let (_, _, g) = assemble_at(&model, &[mu]).unwrap();
        let u = primal_from_slack(&slack.s, &g, &bf).unwrap();
        let truth = solve_truth(&model, &[mu]).unwrap();
        assert!(rel_v(&model, &u, &truth.u) <= 1e-8, "{spec:?}");
        // multiplier of the slack problem is the contact force
        assert!((&slack.multiplier - &truth.lambda).amax() <= 1e-8 * truth.lambda.amax().max(1.0));
    }
}

#[test]
fn sparse_truth_matches_dense_condensation() {
    let model = assemble_model(&ModelSpec::rope(40)).unwrap();
    let mu = [0.004];
    let (a, f, g) = assemble_at(&model, &mu).unwrap();
    let (u, lambda) = solve_mixed_kkt(&a.to_dense(), &model.b.to_dense(), &f, &g, &LcpOptions::default()).unwrap();
    let truth = solve_truth(&model, &mu).unwrap();
    assert!(rel_v(&model, &truth.u, &u) <= 1e-10);
    assert!((truth.lambda - lambda).amax() <= 1e-8);
}

#[test]
fn affine_counts_of_the_slack_problem() {
    // Q_f~ = Q_f + Q_a Q_g with one term each
    let model = assemble_model(&ModelSpec::membrane(8, 8)).unwrap();
    let dual = assemble_dual_affine(&model, &factorize_b(&model.b).unwrap());
    assert_eq!(dual.q_ftilde(), 2);
    assert_eq!(dual.atilde_components.len(), 1);
}

#[test]
fn contact_set_is_nonempty_and_truth_is_feasible() {
    for (spec, mu) in [(ModelSpec::rope(200), 0.001), (ModelSpec::membrane(32, 32), 0.45)] {
        let model = assemble_model(&spec).unwrap();
        let truth = solve_truth(&model, &[mu]).unwrap();
        assert!(truth.lambda.iter().any(|&l| l > 0.0));
        let (_, _, g) = assemble_at(&model, &[mu]).unwrap();
        let report = check_feasibility(&truth.u, &model, &[mu], 1e-12 * g.amax()).unwrap();
        assert!(report.passed, "{report:?}");
        // complementarity at truth scale
        assert!(truth.slack.dot(&truth.lambda).abs() <= 1e-10 * truth.slack.norm() * truth.lambda.norm());
    }
}

#[test]
fn feasibility_flags_an_obstacle_crossing() {
    let model = assemble_model(&ModelSpec::membrane(8, 8)).unwrap();
    let mut u = DVector::from_element(model.n_v(), 0.05);
    u[10] = 0.2;
    let report = check_feasibility(&u, &model, &[0.5], 1e-12).unwrap();
    assert!(!report.passed);
    assert_eq!(report.violating, vec![10]);
    assert!((report.max_violation - 0.1).abs() < 1e-14);
}

#[test]
fn two_element_rope_by_condensation() {
    // A = [4], B = [-1], f = [-0.5], g = [7.5]: obstacle inactive
    let (u, lambda) = solve_mixed_kkt(
        &DMatrix::from_element(1, 1, 4.0),
        &DMatrix::from_element(1, 1, -1.0),
        &DVector::from_element(1, -0.5),
        &DVector::from_element(1, 7.5),
        &LcpOptions::default(),
    )
    .unwrap();
    assert_eq!((u[0], lambda[0]), (-0.125, 0.0));
}
