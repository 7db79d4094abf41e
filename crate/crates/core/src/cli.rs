//! Command-line driver behind the `anisodiff` binary.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::{FieldSpec, Mode, RunConfig};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forward::{solve_forward, ForwardProblem};
use crate::inversion::{
    add_noise, interior_nodes, lm_solve, relative_l2_error, synthesize, InverseProblem, MeasurementSet,
};
use crate::io::{field_table, fmt_f64, history_table, measurement_table, read_measurements, snapshot_table, Table};
use crate::manufactured::{manufactured_data, sample_field};
use crate::sensitivity::{fd_jacobian_with, full_jacobian, max_relative_discrepancy};
use crate::tensor::PrincipalField;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

/// Files written and the summary document of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// JSON error block printed on stderr for failed runs.
pub fn error_block(e: &Error) -> Value {
    json!({
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
            "exit_code": e.exit_code(),
        }
    })
}

/// Loads the config and runs `opts.mode`, on a dedicated pool when
/// `threads` is given.
pub fn run(opts: &RunOptions) -> Result<RunReport> {
    let mut cfg = RunConfig::load(&opts.config)?;
    cfg.validate(opts.mode)?;
    if let Some(seed) = opts.seed {
        cfg.noise.seed = seed;
    }
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|p| cfg.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("anisodiff-out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let go = || run_mode(opts.mode, &cfg, &out_dir);
    match opts.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let p = self.dir.join(name);
        t.write(&p)?;
        self.files.push(p);
        Ok(())
    }

    fn finish(mut self, mode: Mode, exit_code: i32, mut summary: Value) -> Result<RunReport> {
        summary["mode"] = json!(mode.name());
        summary["exit_code"] = json!(exit_code);
        let p = self.dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).expect("json value") + "\n";
        std::fs::write(&p, text)?;
        self.files.push(p);
        Ok(RunReport {
            exit_code,
            out_dir: self.dir.to_path_buf(),
            files: self.files,
            summary,
        })
    }
}

fn truth_field(cfg: &RunConfig) -> Result<PrincipalField> {
    cfg.field()?.ok_or_else(|| Error::Config {
        path: cfg.path.clone(),
        message: "field `field` is required".into(),
    })
}

fn synthetic_measurements(cfg: &RunConfig, problem: &ForwardProblem) -> Result<MeasurementSet> {
    let mut clean = synthesize(problem, &cfg.measurement_times())?;
    clean.mask = cfg.mask();
    add_noise(&clean, cfg.noise.level, cfg.noise.seed)
}

fn run_mode(mode: Mode, cfg: &RunConfig, dir: &Path) -> Result<RunReport> {
    let mut out = Outputs {
        dir,
        files: Vec::new(),
    };
    match mode {
        Mode::Forward => {
            let p = cfg.forward_problem(truth_field(cfg)?)?;
            let traj = solve_forward(&p)?;
            out.table("snapshots.csv", &snapshot_table(&traj, cfg.n, cfg.t_final, cfg.steps, cfg.snapshot_every))?;
            let summary = json!({
                "n": cfg.n,
                "steps": cfg.steps,
                "t_final": cfg.t_final,
                "final_max_abs": traj.final_state().amax(),
            });
            out.finish(mode, EXIT_OK, summary)
        }
        Mode::Synth => {
            let p = cfg.forward_problem(truth_field(cfg)?)?;
            let traj = solve_forward(&p)?;
            out.table("snapshots.csv", &snapshot_table(&traj, cfg.n, cfg.t_final, cfg.steps, cfg.snapshot_every))?;
            let m = synthetic_measurements(cfg, &p)?;
            out.table("measurements.csv", &measurement_table(&m, cfg.n))?;
            let summary = json!({
                "n": cfg.n,
                "measurement_times": m.times.len(),
                "noise_level": cfg.noise.level,
                "seed": cfg.noise.seed,
                "delta": m.delta,
                "interpolated": m.interpolated,
            });
            out.finish(mode, EXIT_OK, summary)
        }
        Mode::Invert => invert(cfg, out),
        Mode::CheckJacobian => {
            let p = cfg.forward_problem(truth_field(cfg)?)?;
            let times = cfg.measurement_times();
            let spec = &cfg.jacobian_check;
            let j = full_jacobian(&p, &times)?;
            let fd = fd_jacobian_with(&p, &times, spec.h, spec.order.into())?;
            let disc = max_relative_discrepancy(&j.matrix, &fd.matrix, spec.floor);
            let pass = disc <= spec.tolerance;
            let summary = json!({
                "n": cfg.n,
                "measurement_times": times.len(),
                "columns": j.matrix.ncols(),
                "fd_order": spec.order,
                "h": spec.h,
                "floor": spec.floor,
                "max_relative_discrepancy": disc,
                "max_abs_discrepancy": (&j.matrix - &fd.matrix).amax(),
                "tolerance": spec.tolerance,
                "pass": pass,
            });
            out.finish(mode, if pass { EXIT_OK } else { EXIT_NUMERICAL }, summary)
        }
        Mode::MmsConvergence => mms(cfg, out),
    }
}

fn invert(cfg: &RunConfig, mut out: Outputs<'_>) -> Result<RunReport> {
    let truth = cfg.field()?;
    // the forward model needs some field to carry the grid; the value is replaced by each iterate
    let k0 = cfg.initial_guess()?;
    let carrier = PrincipalField::from_unknowns(cfg.n, k0.as_slice())?;
    let problem = cfg.forward_problem(carrier)?;
    let meas = match &cfg.measurements {
        Some(path) => {
            let mut m = read_measurements(&cfg.resolve(path))?;
            if m.mask.is_none() {
                m.mask = cfg.mask();
            }
            m
        }
        None => {
            let truth = truth.as_ref().expect("validated");
            synthetic_measurements(cfg, &problem.with_field(truth.clone()))?
        }
    };
    let inv = InverseProblem::new(problem, meas.clone())?;
    let outcome = lm_solve(&k0, &inv, meas.delta, &cfg.lm)?;
    let field = PrincipalField::from_unknowns(cfg.n, outcome.k.as_slice())?;
    let grid = cfg.grid()?;
    out.table("field.csv", &field_table(&field, grid.nodes()))?;
    out.table("history.csv", &history_table(&outcome.history))?;
    let mut summary = json!({
        "n": cfg.n,
        "status": outcome.status,
        "converged": outcome.converged,
        "iterations": outcome.iterations(),
        "residual_norm": outcome.residual_norm,
        "delta": meas.delta,
        "discrepancy_target": cfg.lm.tau * meas.delta,
        "observations": meas.observation_count(),
    });
    if let Some(t) = &truth {
        let nodes = interior_nodes(cfg.n);
        summary["k11_relative_error_interior"] =
            json!(relative_l2_error(field.k11_values(), t.k11_values(), &nodes));
        summary["k22_relative_error_interior"] =
            json!(relative_l2_error(field.k22_values(), t.k22_values(), &nodes));
    }
    let code = if outcome.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE };
    out.finish(Mode::Invert, code, summary)
}

/// Max nodal error at `t_final` for a manufactured solution.
pub fn manufactured_error(
    u: &Expr,
    k11: &Expr,
    k22: &Expr,
    schedule: &crate::tensor::ThetaSchedule,
    n: usize,
    steps: usize,
    t_final: f64,
) -> Result<f64> {
    let grid = crate::cheb::ChebGrid::new(n)?;
    let data = manufactured_data(u, k11, k22, schedule);
    let p = ForwardProblem {
        field: sample_field(&grid, k11, k22),
        schedule: schedule.clone(),
        boundary: data.boundary.clone(),
        source: data.source.clone(),
        initial: data.initial_state(&grid),
        t_final,
        steps,
    };
    let traj = solve_forward(&p)?;
    Ok((traj.final_state() - data.exact_state(&grid, t_final)).amax())
}

fn mms(cfg: &RunConfig, mut out: Outputs<'_>) -> Result<RunReport> {
    let spec = cfg.manufactured();
    let u = cfg.expr("manufactured.solution", &spec.solution)?;
    let Some(FieldSpec::Expressions { k11, k22 }) = &cfg.field else {
        unreachable!("validated");
    };
    let (a, b) = (cfg.expr("field", k11)?, cfg.expr("field", k22)?);
    let schedule = cfg.schedule()?;
    let mut table = Table::new(
        "convergence",
        ["study", "n", "steps", "dt", "max_error"].map(String::from).to_vec(),
    )
    .with_meta("study", "0 = spatial (fixed steps), 1 = temporal (fixed n)")
    .with_meta("t_final", fmt_f64(cfg.t_final));
    let mut spatial = Vec::new();
    for &n in &spec.degrees {
        let e = manufactured_error(&u, &a, &b, &schedule, n, spec.spatial_steps, cfg.t_final)?;
        table.rows.push(vec![0.0, n as f64, spec.spatial_steps as f64, cfg.t_final / spec.spatial_steps as f64, e]);
        spatial.push(e);
    }
    let mut temporal = Vec::new();
    for &s in &spec.steps {
        let e = manufactured_error(&u, &a, &b, &schedule, spec.temporal_degree, s, cfg.t_final)?;
        table.rows.push(vec![1.0, spec.temporal_degree as f64, s as f64, cfg.t_final / s as f64, e]);
        temporal.push(e);
    }
    out.table("convergence.csv", &table)?;
    let ratios: Vec<f64> = temporal.windows(2).map(|w| w[0] / w[1]).collect();
    let summary = json!({
        "spatial_errors": spatial,
        "monotone_in_n": spatial.windows(2).all(|w| w[1] < w[0]),
        "temporal_errors": temporal,
        "temporal_ratios": ratios,
    });
    out.finish(Mode::MmsConvergence, EXIT_OK, summary)
}

/// Runs and maps the outcome to a process exit code, printing the error
/// block on failure.
pub fn run_to_exit_code(opts: &RunOptions) -> i32 {
    match run(opts) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            if report.exit_code == EXIT_NO_CONVERGENCE {
                eprintln!(
                    "{}",
                    json!({"error": {"kind": "non_convergence", "message": "inversion did not converge", "exit_code": EXIT_NO_CONVERGENCE}})
                );
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("{}", error_block(&e));
            e.exit_code()
        }
    }
}
