//! `rbvi`: offline builds, certified online queries, error/bound sweeps,
//! timing studies and the invariant suite for the obstacle models.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rbvi::experiment::{
    compare_with_truth, run_sweep, run_timing_mesh, run_timing_per_n, run_verify, write_manifest, write_sweep_csv,
    write_timing_csv, ExperimentConfig, MuRecord, VerifyOptions,
};
use rbvi::fe_truth::{assemble_model, ModelId, ModelSpec};
use rbvi::offline::{
    build_offline_from_snapshots, equidistant_parameters, generate_snapshots, generate_snapshots_with, load_offline,
    save_offline, uniform_parameters, ColumnSource, OfflineArtifact,
};
use rbvi::online::{evaluate, CertifiedResult};
use rbvi::truth::solve_truth;
use rbvi::Error;

#[derive(Parser)]
#[command(name = "rbvi", version, about = "Certified reduced-basis experiments for obstacle problems")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting, applied after the file and the flags below.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// 1 (rope) or 2 (membrane).
    #[arg(long, global = true)]
    model: Option<u8>,
    /// `200` for the rope, `32x32` for the membrane.
    #[arg(long, global = true)]
    resolution: Option<String>,
    #[arg(long, global = true)]
    snapshots: Option<usize>,
    #[arg(long, global = true)]
    test_samples: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build and save the offline artifact.
    Offline,
    /// Certified query of a saved artifact.
    Online {
        /// Artifact file; defaults to `<out_dir>/offline.rbvi`.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Parameter value, comma separated for several components.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        mu: Vec<f64>,
        /// Also solve the truth problem and report the actual errors.
        #[arg(long)]
        with_truth: bool,
    },
    /// Error and bound table over the basis-size schedule.
    Sweep {
        /// Also write the per-parameter table.
        #[arg(long)]
        details: bool,
    },
    /// Online timings per basis size, and optionally across meshes.
    Timing {
        /// Basis size for the mesh-scaling run over `timing_resolutions`.
        #[arg(long)]
        mesh_n: Option<usize>,
    },
    /// Runs the invariant suite; exits with 3 on any failed check.
    Verify {
        /// Perturb the stored residual data to exercise the consistency check.
        #[arg(long)]
        corrupt_gramian: bool,
    },
}

enum Failure {
    Validation(String),
    Solver(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSpec(_)
            | Error::OutOfDomain { .. }
            | Error::DimensionMismatch { .. }
            | Error::Config(_)
            | Error::Artifact(_)
            | Error::VersionMismatch { .. } => Failure::Validation(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.common).and_then(|cfg| run(&cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::for_model(ModelId::Rope),
    };
    let flags = [
        ("model", c.model.map(|v| v.to_string())),
        ("resolution", c.resolution.clone()),
        ("snapshots", c.snapshots.map(|v| v.to_string())),
        ("test_samples", c.test_samples.map(|v| v.to_string())),
        ("out_dir", c.out_dir.as_ref().map(|p| p.display().to_string())),
        ("seed", c.seed.map(|v| v.to_string())),
        ("reps", c.reps.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for o in &c.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: &Command, cfg: &ExperimentConfig) -> Result<(), Failure> {
    match command {
        Command::Offline => cmd_offline(cfg),
        Command::Online { artifact, mu, with_truth } => {
            let path = artifact.clone().unwrap_or_else(|| cfg.out_dir.join("offline.rbvi"));
            cmd_online(&path, mu, *with_truth)
        }
        Command::Sweep { details } => cmd_sweep(cfg, *details),
        Command::Timing { mesh_n } => cmd_timing(cfg, *mesh_n),
        Command::Verify { corrupt_gramian } => cmd_verify(cfg, *corrupt_gramian),
    }
}

fn sources_json(art: &OfflineArtifact) -> Value {
    let phi: Vec<String> = art
        .primal
        .phi_sources
        .iter()
        .map(|s| match s {
            ColumnSource::Snapshot(i) => format!("snapshot {i}"),
            ColumnSource::Supremizer(i) => format!("supremizer {i}"),
        })
        .collect();
    json!({ "phi": phi, "psi": art.primal.psi_sources, "zeta": art.dual.sources })
}

fn cmd_offline(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let model = assemble_model(&cfg.spec())?;
    let params = equidistant_parameters(&model.parameter_box, cfg.snapshots)?;
    let snapshots = generate_snapshots_with(&model, &params, &cfg.offline_options().lcp)?;
    let art = build_offline_from_snapshots(&model, &snapshots, &cfg.offline_options())?;
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("offline.rbvi");
    save_offline(&art, &path)?;
    let details = json!({
        "n_truth": art.n_truth(),
        "n_v": art.primal.n_v(),
        "n_q": art.primal.n_q(),
        "n_s": art.dual.n_s(),
        "n_sup": art.primal.n_sup,
        "beta": art.certification.beta,
        "droptol": cfg.droptol,
        "kept_columns": sources_json(&art),
        "snapshot_parameters": snapshots.parameters,
        "snapshot_max_kkt_residual": snapshots.max_residual(),
        "seconds": start.elapsed().as_secs_f64(),
    });
    println!(
        "{}: n_V = {}, n_Q = {}, n_S = {}, beta = {:.6e}",
        path.display(),
        art.primal.n_v(),
        art.primal.n_q(),
        art.dual.n_s(),
        art.certification.beta
    );
    write_manifest(&cfg.out_dir, "offline", cfg, &[path], details)?;
    Ok(())
}

fn result_json(res: &CertifiedResult) -> Value {
    let pd = &res.bounds.primal_dual;
    let po = &res.bounds.primal_only;
    json!({
        "mu": res.mu,
        "primal": {
            "u_bar": res.primal.u_bar.as_slice(),
            "lambda_bar": res.primal.lambda_bar.as_slice(),
            "iterations": res.primal.iterations,
        },
        "dual": {
            "s_bar": res.dual.s_bar.as_slice(),
            "multiplier": res.dual.multiplier.as_slice(),
            "iterations": res.dual.iterations,
        },
        "primal_dual_bound": {
            "delta_u": pd.delta_u,
            "delta_lambda": pd.delta_lambda,
            "residual_norm": pd.residual_norm,
            "rounding": pd.rounding,
            "pairing": pd.pairing,
            "alpha_lb": pd.alpha_lb,
            "gamma_ub": pd.gamma_ub,
            "beta": pd.beta,
        },
        "primal_only_bound": {
            "delta_u": po.delta_u,
            "delta_lambda": po.delta_lambda,
            "delta0": po.delta0,
            "delta1": po.delta1,
            "delta2": po.delta2,
            "rounding": po.rounding,
            "max_violation": po.max_violation,
        },
        "seconds": {
            "primal_solve": res.timings.primal_solve.as_secs_f64(),
            "dual_solve": res.timings.dual_solve.as_secs_f64(),
            "primal_dual_bound": res.timings.primal_dual_bound.as_secs_f64(),
            "primal_only_bound": res.timings.primal_only_bound.as_secs_f64(),
        },
        "ops_primal_dual": res.ops_primal_dual,
    })
}

fn record_json(r: &MuRecord) -> Value {
    json!({
        "u_norm": r.u_norm,
        "lambda_norm": r.lambda_norm,
        "err_u_pr": r.err_u_pr,
        "err_u_du": r.err_u_du,
        "err_l": r.err_l,
        "violation_pr": r.violation_pr,
        "violation_du": r.violation_du,
        "bound_violations": r.bound_violations(),
    })
}

fn cmd_online(path: &PathBuf, mu: &[f64], with_truth: bool) -> Result<(), Failure> {
    let art = load_offline(path)?;
    let res = evaluate(&art, mu)?;
    let mut out = result_json(&res);
    if with_truth {
        let spec = art
            .spec
            .clone()
            .ok_or_else(|| Failure::Validation("artifact does not record its model; truth comparison needs it".into()))?;
        let model = assemble_model(&spec)?;
        let truth = solve_truth(&model, mu)?;
        let rec = compare_with_truth(&model, &art, &truth)?;
        out["truth"] = record_json(&rec);
        if rec.bound_violations() > 0 {
            println!("{}", serde_json::to_string_pretty(&out).expect("json values serialize"));
            return Err(Failure::Verification(format!("{} bound(s) below the actual error", rec.bound_violations())));
        }
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("json values serialize"));
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig, details: bool) -> Result<(), Failure> {
    let model = assemble_model(&cfg.spec())?;
    let test = uniform_parameters(&model.parameter_box, cfg.test_samples, cfg.seed);
    eprintln!("solving {} truth problems", test.len());
    let truth = generate_snapshots(&model, &test)?;
    let schedule = cfg.schedule();
    let report = run_sweep(&model, &schedule, &truth, &cfg.offline_options())?;
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("sweep.csv");
    write_sweep_csv(BufWriter::new(File::create(&path)?), &report.rows)?;
    let mut outputs = vec![path.clone()];
    if details {
        let dpath = cfg.out_dir.join("sweep_details.csv");
        write_details(&dpath, &schedule, &report.details)?;
        outputs.push(dpath);
    }
    if report.lambda_skipped > 0 {
        eprintln!(
            "note: {} test parameters without contact are left out of the relative multiplier columns",
            report.lambda_skipped
        );
    }
    let violations = report.bound_violations();
    write_manifest(
        &cfg.out_dir,
        "sweep",
        cfg,
        &outputs,
        json!({ "lambda_skipped": report.lambda_skipped, "bound_violations": violations, "rows": report.rows.len() }),
    )?;
    println!("{}: {} rows", path.display(), report.rows.len());
    if violations > 0 {
        return Err(Failure::Verification(format!("{violations} bound(s) below the actual error")));
    }
    Ok(())
}

fn write_details(path: &PathBuf, schedule: &[usize], details: &[Vec<MuRecord>]) -> Result<(), Failure> {
    use std::io::Write;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "n,mu,u_norm,lambda_norm,err_u_pr,err_u_du,err_l,bnd_u_pr,bnd_u_prdu,bnd_l_pr,bnd_l_prdu,violation_pr,violation_du"
    )?;
    for (n, records) in schedule.iter().zip(details) {
        for r in records {
            let mu: Vec<String> = r.mu.iter().map(|m| format!("{m:e}")).collect();
            writeln!(
                w,
                "{n},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                mu.join(";"),
                r.u_norm,
                r.lambda_norm,
                r.err_u_pr,
                r.err_u_du,
                r.err_l,
                r.bnd_u_pr,
                r.bnd_u_prdu,
                r.bnd_l_pr,
                r.bnd_l_prdu,
                r.violation_pr,
                r.violation_du
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_timing(cfg: &ExperimentConfig, mesh_n: Option<usize>) -> Result<(), Failure> {
    if cfg.reps == 1 {
        eprintln!("warning: a single repetition gives noisy timings");
    }
    let model = assemble_model(&cfg.spec())?;
    let params = uniform_parameters(&model.parameter_box, cfg.test_samples, cfg.seed);
    let opts = cfg.offline_options();
    fs::create_dir_all(&cfg.out_dir)?;
    let rows = run_timing_per_n(&model, &cfg.schedule(), &params, cfg.reps, &opts)?;
    let path = cfg.out_dir.join("timing.csv");
    write_timing_csv(BufWriter::new(File::create(&path)?), &rows)?;
    println!("{}: {} rows", path.display(), rows.len());
    let mut outputs = vec![path];
    if let Some(n) = mesh_n {
        if n == 0 {
            return Err(Failure::Validation("mesh-n must be at least 1".into()));
        }
        let specs: Vec<ModelSpec> = cfg.timing_resolutions.iter().map(|r| ModelSpec::new(cfg.model, *r)).collect();
        let rows = run_timing_mesh(&specs, n, &params, cfg.reps, &opts)?;
        let path = cfg.out_dir.join("timing_mesh.csv");
        write_timing_csv(BufWriter::new(File::create(&path)?), &rows)?;
        println!("{}: {} rows", path.display(), rows.len());
        outputs.push(path);
    }
    write_manifest(&cfg.out_dir, "timing", cfg, &outputs, json!({ "mesh_n": mesh_n }))?;
    Ok(())
}

fn cmd_verify(cfg: &ExperimentConfig, corrupt_gramian: bool) -> Result<(), Failure> {
    let mut opts = VerifyOptions::new(cfg.spec());
    opts.snapshots = cfg.snapshots;
    opts.test_samples = cfg.test_samples;
    opts.seed = cfg.seed;
    opts.tolerance_scale = cfg.tolerance_scale;
    opts.corrupt_gramian = corrupt_gramian;
    opts.offline = cfg.offline_options();
    let report = run_verify(&opts)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail }))
        .collect();
    write_manifest(&cfg.out_dir, "verify", cfg, &[], json!({ "checks": checks, "corrupt_gramian": corrupt_gramian }))?;
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(Failure::Verification(names.join(", ")))
    }
}
