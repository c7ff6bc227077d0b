use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complementarity::{solve_lcp_active_set, solve_lcp_bruteforce, solve_lcp_projected_relaxation, Lcp, LcpOptions};
use crate::dual_slack::{assemble_dual_affine, check_feasibility, factorize_b, primal_from_slack, solve_truth_dual};
use crate::error::Result;
use crate::fe_truth::{assemble_at, assemble_model, AffineTruthModel, ModelSpec};
use crate::offline::{
    build_offline_from_snapshots, equidistant_parameters, generate_snapshots, primal_dual_coefficients,
    primal_only_coefficients, uniform_parameters, OfflineArtifact, OfflineOptions, SnapshotSet,
};
use crate::online::{
    detailed_inequality_residual, evaluate, project_onto_cone, reconstruct_lambda, reconstruct_slack,
    reconstruct_u_dual, reconstruct_u_primal, theta_values,
};

use super::sweep::compare_with_truth;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub spec: ModelSpec,
    pub snapshots: usize,
    pub test_samples: usize,
    pub seed: u64,
    /// Multiplies every tolerance; 0 demands exact agreement.
    pub tolerance_scale: f64,
    /// Perturbs the stored residual data before the consistency check.
    pub corrupt_gramian: bool,
    pub offline: OfflineOptions,
}

impl VerifyOptions {
    pub fn new(spec: ModelSpec) -> Self {
        Self {
            spec,
            snapshots: 10,
            test_samples: 50,
            seed: 2014,
            tolerance_scale: 1.0,
            corrupt_gramian: false,
            offline: OfflineOptions::default(),
        }
    }
}

/// Largest deviation of the active set and relaxation solvers from the
/// exhaustive oracle over `count` random LCPs with SPD matrices of size at
/// most `max_dim`.
pub fn lcp_oracle_deviation(count: usize, max_dim: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.random_range(1..=max_dim);
        let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = l.transpose() * &l + DMatrix::identity(n, n) * 0.1;
        let q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let lcp = Lcp::new(m, q)?;
        let opts = LcpOptions {
            tol: Some(1e-13),
            ..LcpOptions::default()
        };
        let oracle = solve_lcp_bruteforce(&lcp, &opts)?;
        let pdas = solve_lcp_active_set(&lcp, &opts)?;
        let psor = solve_lcp_projected_relaxation(&lcp, &opts)?;
        worst = worst.max((&pdas.z - &oracle.z).amax()).max((&psor.z - &oracle.z).amax());
    }
    Ok(worst)
}

/// `max ||B^{-1}(g - s) - u||_V / ||u||_V` over `params`, with `s` from the
/// truth slack problem and `u` from the truth primal problem.
pub fn truth_equivalence(model: &AffineTruthModel, params: &[Vec<f64>]) -> Result<f64> {
    let bf = factorize_b(&model.b)?;
    let dual = assemble_dual_affine(model, &bf);
    let mut worst = 0.0f64;
    for mu in params {
        let primal = crate::truth::solve_truth(model, mu)?;
        let s = solve_truth_dual(&dual, mu)?.s;
        let (_, _, g) = assemble_at(model, mu)?;
        let u = primal_from_slack(&s, &g, &bf)?;
        worst = worst.max(model.v_norm(&(&u - &primal.u)) / model.v_norm(&primal.u).max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Online quantities next to their truth-space counterparts at one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualComparison {
    pub online_primal_dual: f64,
    pub direct_primal_dual: f64,
    pub online_primal_only: f64,
    pub direct_primal_only: f64,
    pub online_pairing: f64,
    pub direct_pairing: f64,
    /// Magnitudes of the summed terms, used as relative floors.
    pub scale_primal_dual: f64,
    pub scale_primal_only: f64,
    pub scale_pairing: f64,
}

impl ResidualComparison {
    /// Largest of the three relative differences. Each denominator is floored
    /// at `1e-6` of the summed term magnitudes, since residuals that vanish in
    /// exact arithmetic carry no relative digits.
    pub fn max_relative_difference(&self) -> f64 {
        let rel = |a: f64, b: f64, s: f64| (a - b).abs() / b.abs().max(1e-6 * s).max(f64::MIN_POSITIVE);
        rel(self.online_primal_dual, self.direct_primal_dual, self.scale_primal_dual)
            .max(rel(self.online_primal_only, self.direct_primal_only, self.scale_primal_only))
            .max(rel(self.online_pairing, self.direct_pairing, self.scale_pairing))
    }
}

/// Recomputes both residual norms and the slack/multiplier pairing at truth
/// scale from the reconstructed fields.
pub fn residual_consistency(model: &AffineTruthModel, art: &OfflineArtifact, mu: &[f64]) -> Result<ResidualComparison> {
    let res = evaluate(art, mu)?;
    let th = theta_values(art, mu)?;
    let (a, f, _) = assemble_at(model, mu)?;
    let s_bar = res.dual.s_bar.map(|v| v.max(0.0));
    let u_du = reconstruct_u_dual(art, &th, &s_bar)?;
    let u_pr = reconstruct_u_primal(art, &res.primal.u_bar);
    let lambda = reconstruct_lambda(art, &res.primal.lambda_bar);
    let bt_lambda = model.b.apply_transpose(&lambda);
    let r_pd = &f - a.mul_vec(&u_du) - &bt_lambda;
    let r_po = &f - a.mul_vec(&u_pr) - &bt_lambda;

    let cert = &art.certification;
    let piece_scale = |g: &DMatrix<f64>, c: &DVector<f64>| {
        c.iter().enumerate().map(|(i, v)| v.abs() * g[(i, i)].max(0.0).sqrt()).sum::<f64>()
    };
    let c_pd = primal_dual_coefficients(&th, &s_bar, &res.primal.lambda_bar);
    let c_po = primal_only_coefficients(&th, &res.primal.u_bar, &res.primal.lambda_bar);
    let slack = reconstruct_slack(art, &s_bar);
    Ok(ResidualComparison {
        online_primal_dual: res.bounds.primal_dual.residual_norm,
        direct_primal_dual: model.dual_norm(&r_pd),
        online_primal_only: res.bounds.primal_only.delta0,
        direct_primal_only: model.dual_norm(&r_po),
        online_pairing: res.bounds.primal_dual.pairing,
        direct_pairing: slack.dot(&lambda),
        scale_primal_dual: piece_scale(&cert.primal_dual.gram, &c_pd),
        scale_primal_only: piece_scale(&cert.primal_only.gram, &c_po),
        scale_pairing: slack.abs().dot(&lambda.abs()),
    })
}

/// Relative errors `(u_du, s)` of the online slack approximation at each
/// snapshot parameter, against the stored snapshot.
pub fn reproduction_errors(model: &AffineTruthModel, art: &OfflineArtifact, snapshots: &SnapshotSet) -> Result<Vec<(f64, f64)>> {
    snapshots
        .solutions
        .iter()
        .map(|t| {
            let res = evaluate(art, &t.mu)?;
            let th = theta_values(art, &t.mu)?;
            let s_bar = res.dual.s_bar.map(|v| v.max(0.0));
            let u = reconstruct_u_dual(art, &th, &s_bar)?;
            let s = reconstruct_slack(art, &s_bar);
            let eu = model.v_norm(&(&u - &t.u)) / model.v_norm(&t.u).max(f64::MIN_POSITIVE);
            let es = (&s - &t.slack).norm() / t.slack.norm().max(f64::MIN_POSITIVE);
            Ok((eu, es))
        })
        .collect()
}

/// Counts violations of the projection properties: `(q - Pi(q), eta) <= 0`
/// for random `q` and `eta >= 0`; and, for the detailed inequality residual
/// of the truth solution at each parameter, `Pi(e) = 0` and `(q, e) <= 0`
/// for random `q >= 0`. Truth-derived checks allow `tol` relative roundoff.
pub fn cone_property_violations(
    model: &AffineTruthModel,
    params: &[Vec<f64>],
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let dim = model.n_q();
    for _ in 0..samples {
        let q = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let eta = DVector::from_fn(dim, |_, _| rng.random_range(0.0..1.0));
        if (&q - project_onto_cone(&q)).dot(&eta) > 0.0 {
            violations += 1;
        }
    }
    for mu in params {
        let truth = crate::truth::solve_truth(model, mu)?;
        let e = detailed_inequality_residual(model, mu, &truth.u)?;
        let (_, _, g) = assemble_at(model, mu)?;
        let floor = tol * g.amax().max(1.0);
        if project_onto_cone(&e).amax() > floor {
            violations += 1;
        }
        for _ in 0..samples.div_ceil(params.len().max(1)) {
            let q = DVector::from_fn(dim, |_, _| rng.random_range(0.0..1.0));
            if q.dot(&e) > floor * q.sum() {
                violations += 1;
            }
        }
    }
    Ok(violations)
}

/// Scales the stored primal-dual residual data by a random symmetric
/// perturbation of relative size `1e-2`.
pub fn corrupt_gramian(art: &mut OfflineArtifact, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &mut art.certification.primal_dual;
    let m = g.gram.nrows();
    for i in 0..m {
        for j in 0..=i {
            let d = 1.0 + rng.random_range(-1e-2..1e-2);
            g.gram[(i, j)] *= d;
            g.gram[(j, i)] = g.gram[(i, j)];
        }
    }
    g.factor.iter_mut().for_each(|v| *v *= 1.0 + rng.random_range(-1e-2..1e-2));
}

/// Runs every invariant check on one model and reports each outcome.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let scale = opts.tolerance_scale;
    let model = assemble_model(&opts.spec)?;
    let snapshots = generate_snapshots(&model, &equidistant_parameters(&model.parameter_box, opts.snapshots)?)?;
    let mut art = build_offline_from_snapshots(&model, &snapshots, &opts.offline)?;
    let test = uniform_parameters(&model.parameter_box, opts.test_samples, opts.seed);
    let truth = generate_snapshots(&model, &test)?;
    let mut checks = Vec::new();
    let mut push = |name, passed, detail: String| checks.push(CheckResult { name, passed, detail });

    let dev = lcp_oracle_deviation(100, 10, opts.seed)?;
    push("lcp_oracle", dev <= 1e-8 * scale, format!("max |z - z*| = {dev:.3e}"));

    let k = test.len().min(10);
    let eq = truth_equivalence(&model, &test[..k])?;
    push("truth_equivalence", eq <= 1e-8 * scale, format!("max relative gap = {eq:.3e} over {k} parameters"));

    let g_scale = model.g_components.iter().map(|g| g.amax()).fold(0.0, f64::max);
    let mut worst_violation = f64::NEG_INFINITY;
    let mut infeasible = 0;
    let mut bound_violations = 0;
    for t in &truth.solutions {
        let rec = compare_with_truth(&model, &art, t)?;
        let th = theta_values(&art, &t.mu)?;
        let res = evaluate(&art, &t.mu)?;
        let u_du = reconstruct_u_dual(&art, &th, &res.dual.s_bar.map(|v| v.max(0.0)))?;
        let report = check_feasibility(&u_du, &model, &t.mu, 1e-12 * g_scale * scale)?;
        worst_violation = worst_violation.max(report.max_violation);
        infeasible += usize::from(!report.passed);
        bound_violations += rec.bound_violations();
    }
    push(
        "feasibility",
        infeasible == 0,
        format!("{infeasible} infeasible of {}, max violation {worst_violation:.3e}", test.len()),
    );
    push("bound_validity", bound_violations == 0, format!("{bound_violations} violated bound pairs"));

    if opts.corrupt_gramian {
        corrupt_gramian(&mut art, opts.seed);
    }
    let mut worst_rel = 0.0f64;
    let mut failure = None;
    for mu in uniform_parameters(&model.parameter_box, 20, opts.seed ^ 0x5eed) {
        match residual_consistency(&model, &art, &mu) {
            Ok(cmp) => worst_rel = worst_rel.max(cmp.max_relative_difference()),
            Err(e) => failure = Some(e.to_string()),
        }
    }
    match failure {
        Some(e) => push("residual_consistency", false, e),
        None => push(
            "residual_consistency",
            worst_rel <= 1e-8 * scale,
            format!("max relative difference {worst_rel:.3e}"),
        ),
    }

    let repro = reproduction_errors(&model, &art, &snapshots)?;
    let (eu, es) = repro.iter().fold((0.0f64, 0.0f64), |(a, b), (u, s)| (a.max(*u), b.max(*s)));
    push(
        "reproduction",
        eu <= 1e-8 * scale && es <= 1e-8 * scale,
        format!("max relative error u {eu:.3e}, s {es:.3e}"),
    );

    let cone = cone_property_violations(&model, &test[..k], 1000, opts.seed, 1e-12 * scale)?;
    push("cone_projection", cone == 0, format!("{cone} violations"));

    Ok(VerifyReport { checks })
}
