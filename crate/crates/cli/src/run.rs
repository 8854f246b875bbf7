//! The four experiments. Each writes CSV logs, a `summary.csv` and SVG
//! plots into `<out>/<experiment>/` and returns a short text report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use mfac::analysis::{closed_loop_matrix, ramp_static_error, stability_check, step_static_error};
use mfac::controller::{BoxConstraints, Weighting};
use mfac::edlm::{DifferentiableModel, PseudoJacobian};
use mfac::kinematics::{forward_kinematics, track_path, KinematicChain};
use mfac::pathgen::{generate_path, PathSpec};
use mfac::plant::{
    metrics, simulate, simulate_frozen, ControllerVariant, Example1Plant, Example1Reference, Ramp, SimInit, SimLog,
    Step,
};
use mfac::Error;

use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::plot::plot_csv;

pub const SUMMARY_SCHEMA: &str = "# mfac summary v1";
const ROOTS_SCHEMA: &str = "# mfac roots v1";
const SWEEP_SCHEMA: &str = "# mfac sweep v1";

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    /// Closed loop left the divergence bound.
    Diverged(String),
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Failed(_) => 1,
            Self::Diverged(_) => 2,
            Self::Config(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "config error: {e}"),
            Self::Diverged(m) => write!(f, "divergence: {m}"),
            Self::Failed(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } => Self::Diverged(e.to_string()),
            other => Self::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        Self::Failed(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        Self::Failed(e.to_string())
    }
}

pub fn run(exp: Experiment, cfg: &ExperimentConfig) -> Result<String, RunError> {
    let dir = cfg.out_root().join(exp.id());
    fs::create_dir_all(&dir).map_err(|e| RunError::Failed(format!("cannot create {}: {e}", dir.display())))?;
    match exp {
        Experiment::Example1 => run_example1(cfg, &dir),
        Experiment::Example2 => run_example2(cfg, &dir),
        Experiment::Sweep => run_sweep(cfg, &dir),
        Experiment::Stability => run_stability(cfg, &dir),
    }
}

/// CSV writer that starts with a schema line.
fn summary_writer(path: &Path, schema: &str) -> Result<csv::Writer<fs::File>, RunError> {
    let mut f = fs::File::create(path)?;
    std::io::Write::write_all(&mut f, format!("{schema}\n").as_bytes())?;
    Ok(csv::Writer::from_writer(f))
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn run_example1(cfg: &ExperimentConfig, dir: &Path) -> Result<String, RunError> {
    let c = &cfg.example1;
    let plant = Example1Plant;
    let dims = plant.dims();
    let w = Weighting::uniform(c.lambda, dims.mu())?;
    let bounds = BoxConstraints::new(DVector::from_column_slice(&c.lower), DVector::from_column_slice(&c.upper))
        .map_err(|e| ConfigError(format!("example1 bounds: {e}")))?;
    let init = SimInit::zeros(&dims, 3, c.seed_pjm);
    let cutoff = if c.steps as i64 > c.cutoff { c.cutoff } else { 0 };

    let mut summary = summary_writer(&dir.join("summary.csv"), SUMMARY_SCHEMA)?;
    let mut header = vec!["variant".to_string(), "rows".into()];
    header.extend(numbered("rmse_y", dims.my()));
    header.extend(numbered("max_err_y", dims.my()));
    header.push("violations".into());
    summary.write_record(&header)?;

    let mut report = format!("example1: lambda = {}, steps = {}, metrics over k > {cutoff}\n", c.lambda, c.steps);
    for name in &c.variants {
        let variant = match name.as_str() {
            "quartic" => ControllerVariant::Quartic,
            "constrained" => ControllerVariant::Constrained(bounds.clone()),
            _ => ControllerVariant::FirstOrder,
        };
        let log = simulate(&plant, &variant, &Example1Reference, c.steps, &init, &w)
            .map_err(|e| tag(e, name))?;
        let csv_path = dir.join(format!("{name}.csv"));
        log.save(&csv_path)?;
        let m = metrics(&log, cutoff, Some(&bounds))?;
        let mut row = vec![name.clone(), log.len().to_string()];
        row.extend(m.rmse.iter().map(|v| v.to_string()));
        row.extend(m.max_abs_error.iter().map(|v| v.to_string()));
        row.push(m.constraint_violations.to_string());
        summary.write_record(&row)?;
        let _ = writeln!(
            report,
            "  {name:<12} rmse = [{:.5}, {:.5}]  max|e| = [{:.5}, {:.5}]  violations = {}",
            m.rmse[0], m.rmse[1], m.max_abs_error[0], m.max_abs_error[1], m.constraint_violations
        );
        example1_plots(&log, &csv_path, dir, name, dims.ly())?;
    }
    summary.flush()?;
    let _ = writeln!(report, "  written to {}", dir.display());
    Ok(report)
}

fn tag(e: Error, variant: &str) -> RunError {
    match e {
        Error::Diverged { .. } => RunError::Diverged(format!("{variant}: {e}")),
        other => other.into(),
    }
}

fn example1_plots(log: &SimLog, csv_path: &Path, dir: &Path, name: &str, ly: usize) -> Result<(), RunError> {
    let svg = |what: &str| -> PathBuf { dir.join(format!("{name}_{what}.svg")) };
    plot_csv(csv_path, "k", &["y1", "yref1", "y2", "yref2"], &format!("{name}: outputs"), "y", false, &svg("outputs"))?;
    plot_csv(csv_path, "k", &["u1", "u2"], &format!("{name}: inputs"), "u", false, &svg("inputs"))?;
    let prefix = format!("Phi{}[", ly + 1);
    let header = log.header();
    let pjm: Vec<&str> = header.iter().filter(|h| h.starts_with(&prefix)).map(String::as_str).collect();
    plot_csv(csv_path, "k", &pjm, &format!("{name}: leading input block of the PJM"), "phi", false, &svg("pjm"))?;
    Ok(())
}

fn run_example2(cfg: &ExperimentConfig, dir: &Path) -> Result<String, RunError> {
    let c = &cfg.example2;
    let chain = match &c.chain {
        Some(p) => KinematicChain::load(p).map_err(|e| ConfigError(format!("chain {}: {e}", p.display())))?,
        None => KinematicChain::table_one(),
    };
    if c.start.len() != chain.dof() || c.goal.len() != chain.dof() {
        return Err(ConfigError(format!(
            "example2.start and example2.goal need {} joint angles for this chain",
            chain.dof()
        ))
        .into());
    }
    let start = forward_kinematics(&chain, &c.start)?.task_vector()?;
    let goal = forward_kinematics(&chain, &c.goal)?.task_vector()?;
    let path = generate_path(&PathSpec::rest_to_rest(start, goal, c.tf, c.t0))?;
    path.save(&dir.join("path.csv"))?;
    let log = track_path(&chain, &c.start, &path, c.cap)?;
    let csv_path = dir.join("tracking.csv");
    log.save(&csv_path)?;

    let s = log.summary();
    let intervals = log.ill_conditioned_intervals(c.cond_threshold);
    let spans: Vec<String> = intervals
        .iter()
        .map(|&(a, b)| format!("{}-{}", log.rows[a].t, log.rows[b].t))
        .collect();
    let mut summary = summary_writer(&dir.join("summary.csv"), SUMMARY_SCHEMA)?;
    summary.write_record([
        "samples",
        "max_position_error",
        "max_orientation_error",
        "max_iterations",
        "max_condition",
        "unconverged",
        "ill_conditioned_intervals",
    ])?;
    summary.write_record([
        log.rows.len().to_string(),
        s.max_position_error.to_string(),
        s.max_orientation_error.to_string(),
        s.max_iterations.to_string(),
        s.max_condition.to_string(),
        s.unconverged.to_string(),
        spans.join(";"),
    ])?;
    summary.flush()?;

    let svg = |what: &str| dir.join(format!("{what}.svg"));
    plot_csv(&csv_path, "t", &["x_ref", "x", "y_ref", "y", "z_ref", "z"], "position", "mm", false, &svg("position"))?;
    plot_csv(
        &csv_path,
        "t",
        &["alpha_ref", "alpha", "beta_ref", "beta", "gamma_ref", "gamma"],
        "orientation",
        "rad",
        false,
        &svg("orientation"),
    )?;
    plot_csv(&csv_path, "t", &["pos_err"], "position error", "mm", false, &svg("position_error"))?;
    plot_csv(&csv_path, "t", &["orient_err"], "orientation error", "rad", false, &svg("orientation_error"))?;
    let q = numbered("q", chain.dof());
    let q: Vec<&str> = q.iter().map(String::as_str).collect();
    plot_csv(&csv_path, "t", &q, "joint angles", "rad", false, &svg("joints"))?;
    let jd = numbered("J", chain.dof().min(6));
    let jd: Vec<String> = jd.iter().enumerate().map(|(i, j)| format!("{j}{}", i + 1)).collect();
    let jd: Vec<&str> = jd.iter().map(String::as_str).collect();
    plot_csv(&csv_path, "t", &jd, "Jacobian diagonal", "value", false, &svg("jacobian"))?;
    plot_csv(&csv_path, "t", &["cond"], "condition number", "cond", true, &svg("condition"))?;
    plot_csv(&csv_path, "t", &["lambda"], "damping", "lambda", false, &svg("lambda"))?;
    plot_csv(&csv_path, "t", &["iters"], "iteration count", "iterations", false, &svg("iterations"))?;

    let mut report = format!("example2: {} samples, tf = {} s, T0 = {} s, cap = {}\n", log.rows.len(), c.tf, c.t0, c.cap);
    let _ = writeln!(report, "  max position error    {:.4e} mm", s.max_position_error);
    let _ = writeln!(report, "  max orientation error {:.4e} rad", s.max_orientation_error);
    let _ = writeln!(report, "  max iterations        {}", s.max_iterations);
    let _ = writeln!(report, "  unconverged samples   {}", s.unconverged);
    let _ = writeln!(report, "  cond > {} on [{}]", c.cond_threshold, spans.join(", "));
    let _ = writeln!(report, "  written to {}", dir.display());
    Ok(report)
}

fn square_loop(cfg: &ExperimentConfig, name: &str) -> Result<PseudoJacobian, RunError> {
    let pjm = cfg.frozen_loop(name)?;
    if pjm.my() != pjm.mu() {
        return Err(ConfigError(format!("loop '{name}' is not square")).into());
    }
    Ok(pjm)
}

/// Final tracking error of a frozen-loop run, or `None` when it diverged.
fn final_error(res: mfac::Result<SimLog>) -> Result<Option<DVector<f64>>, RunError> {
    match res {
        Ok(log) => Ok(log.records().last().map(|r| &r.y_ref - &r.y)),
        Err(Error::Diverged { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn run_sweep(cfg: &ExperimentConfig, dir: &Path) -> Result<String, RunError> {
    let c = &cfg.sweep;
    let pjm = square_loop(cfg, &c.loop_name)?;
    let n = pjm.my();
    let csv_path = dir.join("sweep.csv");
    let mut out = summary_writer(&csv_path, SWEEP_SCHEMA)?;
    let mut header = vec!["lambda".to_string(), "stable".into(), "max_root".into()];
    header.extend(numbered("ess_analytic_", n));
    header.extend(numbered("ess_sim_", n));
    out.write_record(&header)?;

    let mut stable_count = 0;
    for i in 0..c.points {
        let lambda = c.lambda_min + (c.lambda_max - c.lambda_min) * i as f64 / (c.points - 1) as f64;
        let w = Weighting::uniform(lambda, n)?;
        let rep = stability_check(&closed_loop_matrix(&pjm, &w)?)?;
        stable_count += usize::from(rep.stable);
        let analytic = if rep.stable { Some(ramp_static_error(&pjm, &w, c.ts)?) } else { None };
        let sim = final_error(simulate_frozen(&pjm, &w, &Ramp { dim: n, ts: c.ts }, c.steps))?;
        let mut row = vec![lambda.to_string(), u8::from(rep.stable).to_string(), rep.max_root().to_string()];
        for v in [&analytic, &sim] {
            match v {
                Some(e) => row.extend(e.iter().map(|x| x.to_string())),
                None => row.extend(std::iter::repeat_n("NaN".to_string(), n)),
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;

    let ess: Vec<String> = numbered("ess_analytic_", n).into_iter().chain(numbered("ess_sim_", n)).collect();
    let ess: Vec<&str> = ess.iter().map(String::as_str).collect();
    plot_csv(&csv_path, "lambda", &ess, &format!("ramp static error, loop '{}'", c.loop_name), "e_ss", false, &dir.join("ramp_error.svg"))?;
    plot_csv(&csv_path, "lambda", &["max_root"], "largest closed-loop root", "|z|", false, &dir.join("max_root.svg"))?;
    Ok(format!(
        "sweep: loop '{}', {} points on [{}, {}], {stable_count} stable\n  written to {}\n",
        c.loop_name,
        c.points,
        c.lambda_min,
        c.lambda_max,
        dir.display()
    ))
}

fn run_stability(cfg: &ExperimentConfig, dir: &Path) -> Result<String, RunError> {
    let c = &cfg.stability;
    let pjm = square_loop(cfg, &c.loop_name)?;
    let n = pjm.my();
    let w = Weighting::uniform(c.lambda, n)?;
    let rep = stability_check(&closed_loop_matrix(&pjm, &w)?)?;

    let mut roots = summary_writer(&dir.join("roots.csv"), ROOTS_SCHEMA)?;
    roots.write_record(["re", "im", "modulus"])?;
    for z in &rep.characteristic_roots {
        roots.write_record([z.re.to_string(), z.im.to_string(), z.norm().to_string()])?;
    }
    roots.flush()?;

    let step = Step { dim: n, level: 1.0 };
    let bounded = match simulate_frozen(&pjm, &w, &step, c.steps) {
        Ok(log) => {
            let path = dir.join("step.csv");
            log.save(&path)?;
            let mut cols = numbered("y", n);
            cols.extend(numbered("yref", n));
            let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
            plot_csv(&path, "k", &cols, "step response", "y", false, &dir.join("step.svg"))?;
            true
        }
        Err(Error::Diverged { .. }) => false,
        Err(e) => return Err(e.into()),
    };
    let step_err = if rep.stable { Some(step_static_error(&pjm, &w)?) } else { None };

    let mut summary = summary_writer(&dir.join("summary.csv"), SUMMARY_SCHEMA)?;
    let mut header = vec!["loop".to_string(), "lambda".into(), "stable".into(), "max_root".into(), "margin".into()];
    header.push("simulated_bounded".into());
    header.extend(numbered("step_ess_", n));
    summary.write_record(&header)?;
    let mut row = vec![
        c.loop_name.clone(),
        c.lambda.to_string(),
        u8::from(rep.stable).to_string(),
        rep.max_root().to_string(),
        rep.margin.to_string(),
        u8::from(bounded).to_string(),
    ];
    match &step_err {
        Some(e) => row.extend(e.iter().map(|x| x.to_string())),
        None => row.extend(std::iter::repeat_n("NaN".to_string(), n)),
    }
    summary.write_record(&row)?;
    summary.flush()?;

    let mut report = format!(
        "stability: loop '{}', lambda = {}: {} (max |z| = {:.6}, {} roots)\n",
        c.loop_name,
        c.lambda,
        if rep.stable { "stable" } else { "unstable" },
        rep.max_root(),
        rep.characteristic_roots.len()
    );
    let _ = writeln!(
        report,
        "  {}-step frozen simulation: {}",
        c.steps,
        if bounded { "bounded" } else { "diverged" }
    );
    if let Some(e) = step_err {
        let _ = writeln!(report, "  analytic step error {:?}", e.as_slice());
    }
    let _ = writeln!(report, "  written to {}", dir.display());
    Ok(report)
}
