//! Experiment runner: builds models from config files, runs checks and
//! flows, and writes machine-readable results.
//!
//! Exit codes: 0 success; 1 config error; 2 numerical-check failure;
//! 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crlab::config::{build_experiment, random_variation, Config, Experiment};
use crlab::error::Error;
use crlab::extension::{flat_model_of, residual_check, solve_jet};
use crlab::flow::{gradient_flow, subharmonic_flow, FlowConfig, FlowTrace};
use crlab::grid::Scheme;
use crlab::paneitz::{
    covariance_check, f1, gradient_check, invariance_check, p1, p1_scalar, section_l2,
    section_l2_plain,
};
use crlab::structure::heisenberg;
use crlab::suite;

#[derive(Parser)]
#[command(name = "crlab", about = "pseudohermitian geometry laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for generated maps and variations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Override the derivative scheme (spectral | fd4).
    #[arg(long, global = true)]
    scheme: Option<String>,

    /// Run at K successive grid refinements and report the observed order.
    #[arg(long, global = true, default_value_t = 1)]
    refine: usize,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Solve the structure equations; emit torsion/curvature fields and residuals.
    Structure,
    /// Evaluate the obstruction operator on the configured map.
    P1,
    /// Evaluate the renormalized energy of the configured map.
    F1,
    /// Check covariance of p1 under the configured conformal factor.
    Covariance,
    /// Check invariance of f1 under the configured conformal factor.
    Invariance,
    /// Finite-difference gradient identity check.
    Gradcheck,
    /// Solve the boundary jet and run its consistency checks.
    Jet,
    /// Run a descent flow and write its trace.
    Flow,
    /// Run the full acceptance suite.
    Suite,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}

/// Bound kernel parallelism by CRLAB_THREADS when set.
fn init_threads() {
    if let Ok(v) = std::env::var("CRLAB_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::UnknownVariable(_)
        | Error::DivisionByZero
        | Error::InvalidGrid(_) => 1,
        _ => 3,
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    std::fs::create_dir_all(&cli.out)?;
    if cli.command == Command::Suite {
        return run_suite(cli);
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let config = Config::load(config_path)?;
    let scheme = match &cli.scheme {
        Some(s) => Some(Scheme::parse(s)?),
        None => None,
    };
    // a build failure is a config problem by definition
    let build = |refine: usize| -> Result<Experiment, Error> {
        build_experiment(&config, cli.seed, scheme, refine).map_err(to_config)
    };
    match cli.command {
        Command::Structure => run_structure(cli, &build(1)?),
        Command::P1 => run_p1(cli, &build, cli.refine),
        Command::F1 => run_f1(cli, &build, cli.refine),
        Command::Covariance => run_covariance(cli, &config, &build, cli.refine),
        Command::Invariance => run_invariance(cli, &config, &build, cli.refine),
        Command::Gradcheck => run_gradcheck(cli, &config, &build, cli.refine),
        Command::Jet => run_jet(cli, &build(1)?),
        Command::Flow => run_flow_cmd(cli, &config, &build(1)?),
        Command::Suite => unreachable!(),
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_summary(
    out: &Path,
    command: &str,
    seed: u64,
    results: serde_json::Value,
) -> Result<(), Error> {
    let summary = json!({
        "schema": 1,
        "command": command,
        "seed": seed,
        "results": results,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok(())
}

fn refinement_factors(k: usize) -> Vec<usize> {
    (0..k.max(1)).map(|i| 1usize << i).collect()
}

fn observed_orders(errs: &[f64]) -> Vec<f64> {
    errs.windows(2)
        .map(|w| (w[0].max(1e-300) / w[1].max(1e-300)).log2())
        .collect()
}

fn run_structure(cli: &Cli, exp: &Experiment) -> Result<ExitCode, Error> {
    let s = &exp.structure;
    let d = s.diagnostics();
    // flat per-point fields, row-major over the grid
    let torsion = s.torsion().materialize();
    let scal = s.scal_w().materialize();
    let vol = s.vol_density().materialize();
    let mut csv = String::from("idx,torsion_re,torsion_im,scal_w_re,scal_w_im,vol_density\n");
    let t = torsion.periodic_values().as_slice().unwrap();
    let w = scal.periodic_values().as_slice().unwrap();
    let v = vol.periodic_values().as_slice().unwrap();
    for i in 0..t.len() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            fmt17(t[i].re),
            fmt17(t[i].im),
            fmt17(w[i].re),
            fmt17(w[i].im),
            fmt17(v[i].re),
        ));
    }
    std::fs::write(cli.out.join("fields.csv"), csv)?;
    let results = json!({
        "levi_residual": d.levi_residual,
        "structure_residual": d.structure_residual,
        "reeb_residual": d.reeb_residual,
        "torsion_norm_inf": s.torsion().norm_inf(),
        "scal_w_norm_inf": s.scal_w().norm_inf(),
        "fields_csv": "fields.csv",
    });
    println!(
        "structure: levi {:.3e}, structure {:.3e}, reeb {:.3e}, |A|_inf {:.3e}, |Scal|_inf {:.3e}",
        d.levi_residual,
        d.structure_residual,
        d.reeb_residual,
        s.torsion().norm_inf(),
        s.scal_w().norm_inf()
    );
    write_summary(&cli.out, "structure", cli.seed, results)?;
    Ok(ExitCode::SUCCESS)
}

fn run_p1(
    cli: &Cli,
    build: &dyn Fn(usize) -> Result<Experiment, Error>,
    refine: usize,
) -> Result<ExitCode, Error> {
    let mut levels = Vec::new();
    for &factor in &refinement_factors(refine) {
        let exp = build(factor)?;
        let p = p1(&exp.map, &exp.structure)?;
        let l2 = section_l2(&exp.map, &p, &exp.structure);
        levels.push(json!({
            "refine": factor,
            "dims": exp.structure.spec().dims(),
            "p1_norm_inf": p.norm_inf(),
            "p1_norm_l2": l2,
        }));
        println!(
            "p1 (refine {factor}): |p1|_inf = {:.6e}, |p1|_2 = {l2:.6e}",
            p.norm_inf()
        );
    }
    write_summary(&cli.out, "p1", cli.seed, json!({ "levels": levels }))?;
    Ok(ExitCode::SUCCESS)
}

fn run_f1(
    cli: &Cli,
    build: &dyn Fn(usize) -> Result<Experiment, Error>,
    refine: usize,
) -> Result<ExitCode, Error> {
    let mut levels = Vec::new();
    for &factor in &refinement_factors(refine) {
        let exp = build(factor)?;
        let v = f1(&exp.map, &exp.structure)?;
        println!("f1 (refine {factor}) = {}", fmt17(v));
        levels.push(json!({ "refine": factor, "f1": v }));
    }
    write_summary(&cli.out, "f1", cli.seed, json!({ "levels": levels }))?;
    Ok(ExitCode::SUCCESS)
}

fn run_covariance(
    cli: &Cli,
    config: &Config,
    build: &dyn Fn(usize) -> Result<Experiment, Error>,
    refine: usize,
) -> Result<ExitCode, Error> {
    let tol = config.num_or("check.covariance_tol", 1e-6)?;
    let mut errs = Vec::new();
    let mut levels = Vec::new();
    for &factor in &refinement_factors(refine) {
        let exp = build(factor)?;
        let u = exp.conformal_factor.clone().ok_or_else(|| {
            Error::Config("covariance check needs model.conformal_factor".into())
        })?;
        let base = heisenberg(1, exp.structure.spec()).map_err(to_config)?;
        let rep = covariance_check(&exp.map, &base, &u, "config conformal_factor")?;
        println!(
            "covariance (refine {factor}): rel error {:.6e}{}",
            rep.rel_error,
            if rep.absolute_fallback {
                " (absolute: p1 vanishes)"
            } else {
                ""
            }
        );
        errs.push(rep.rel_error);
        levels.push(json!({
            "refine": factor,
            "rel_error": rep.rel_error,
            "absolute_fallback": rep.absolute_fallback,
            "expected_exponent": rep.expected_exponent,
        }));
    }
    let orders = observed_orders(&errs);
    if !orders.is_empty() {
        println!("observed orders: {orders:?}");
    }
    write_summary(
        &cli.out,
        "covariance",
        cli.seed,
        json!({ "levels": levels, "observed_orders": orders, "tolerance": tol }),
    )?;
    let final_err = *errs.last().unwrap();
    if final_err > tol {
        eprintln!("covariance check failed: {final_err:.6e} > {tol:.6e}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_invariance(
    cli: &Cli,
    config: &Config,
    build: &dyn Fn(usize) -> Result<Experiment, Error>,
    refine: usize,
) -> Result<ExitCode, Error> {
    let tol = config.num_or("check.invariance_tol", 1e-6)?;
    let mut errs = Vec::new();
    let mut levels = Vec::new();
    for &factor in &refinement_factors(refine) {
        let exp = build(factor)?;
        let u = exp.conformal_factor.clone().ok_or_else(|| {
            Error::Config("invariance check needs model.conformal_factor".into())
        })?;
        let base = heisenberg(1, exp.structure.spec()).map_err(to_config)?;
        let err = invariance_check(&exp.map, &base, &u)?;
        println!("invariance (refine {factor}): rel change {err:.6e}");
        errs.push(err);
        levels.push(json!({ "refine": factor, "rel_change": err }));
    }
    let orders = observed_orders(&errs);
    write_summary(
        &cli.out,
        "invariance",
        cli.seed,
        json!({ "levels": levels, "observed_orders": orders, "tolerance": tol }),
    )?;
    let final_err = *errs.last().unwrap();
    if final_err > tol {
        eprintln!("invariance check failed: {final_err:.6e} > {tol:.6e}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gradcheck(
    cli: &Cli,
    config: &Config,
    build: &dyn Fn(usize) -> Result<Experiment, Error>,
    refine: usize,
) -> Result<ExitCode, Error> {
    let mut levels = Vec::new();
    let mut final_mismatch = 0.0;
    let mut final_tol = 1e-6;
    for &factor in &refinement_factors(refine) {
        let exp = build(factor)?;
        let default_tol = if exp.map.target.is_flat() { 1e-6 } else { 1e-5 };
        let tol = config.num_or("check.gradient_tol", default_tol)?;
        // t-dependent variations only where every ingredient stays clean
        let t_dependent = exp.map.target.is_flat() && exp.conformal_factor.is_none();
        let amp = config.num_or("check.variation_amp", 0.3)?;
        let dot = random_variation(&exp.map, exp.seed, amp, t_dependent);
        let mismatch = gradient_check(&exp.map, &dot, &exp.structure)?;
        println!("gradcheck (refine {factor}): mismatch {mismatch:.6e} (tol {tol:.1e})");
        levels.push(json!({ "refine": factor, "mismatch": mismatch, "tolerance": tol }));
        final_mismatch = mismatch;
        final_tol = tol;
    }
    write_summary(&cli.out, "gradcheck", cli.seed, json!({ "levels": levels }))?;
    if final_mismatch > final_tol {
        eprintln!("gradient check failed: {final_mismatch:.6e} > {final_tol:.6e}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_jet(cli: &Cli, exp: &Experiment) -> Result<ExitCode, Error> {
    let model = if exp.flat_model.n() >= 2 {
        exp.flat_model.clone()
    } else {
        flat_model_of(&exp.structure)?
    };
    let jet = solve_jet(&exp.map, &model)?;
    let r_samples = exp
        .config
        .num_list("jet.r_samples")
        .unwrap_or_else(|_| vec![1e-1, 1e-2, 1e-3]);
    let ratios: Vec<f64> = r_samples
        .iter()
        .map(|&r| residual_check(&jet, &exp.map, &model, &[r]))
        .collect::<Result<_, _>>()?;
    let lo = ratios
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .max(1e-300);
    let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
    let spread = hi / lo;
    let mut consistency: Option<f64> = None;
    let mut pass = spread <= 10.0 || hi < 1e-10;
    if model.n() == 1 && exp.map.target.is_flat() && exp.map.dim() == 1 {
        let p = p1_scalar(&exp.map.comps[0], &exp.structure)?;
        let diff = jet.log_coeff.comps[0].sub(&p).norm_inf();
        consistency = Some(diff);
        pass &= diff <= 1e-12;
    }
    let coeff_norms: Vec<f64> = jet.coeffs.iter().map(section_l2_plain).collect();
    println!(
        "jet: n = {}, coeff norms {:?}, |log coeff|_2 = {:.6e}",
        jet.n,
        coeff_norms,
        section_l2_plain(&jet.log_coeff)
    );
    println!("jet: residual ratios {ratios:?} (spread {spread:.3})");
    if let Some(c) = consistency {
        println!("jet: log coefficient vs p1 sup-difference {c:.3e}");
    }
    write_summary(
        &cli.out,
        "jet",
        cli.seed,
        json!({
            "n": jet.n,
            "coeff_l2_norms": coeff_norms,
            "log_coeff_l2": section_l2_plain(&jet.log_coeff),
            "residual_ratios": ratios,
            "ratio_spread": spread,
            "p1_consistency": consistency,
        }),
    )?;
    if !pass {
        eprintln!("jet consistency checks failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn write_flow_csv(out: &Path, trace: &FlowTrace) -> Result<(), Error> {
    let mut csv = String::from("iter,f1,p1_norm,tension_norm,step\n");
    for r in &trace.records {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter,
            fmt17(r.f1),
            fmt17(r.p1_norm),
            fmt17(r.tension_norm),
            fmt17(r.step),
        ));
    }
    std::fs::write(out.join("flow.csv"), csv)?;
    let gp = "set datafile separator ','\n\
              set key autotitle columnhead\n\
              set logscale y\n\
              set xlabel 'iteration'\n\
              plot 'flow.csv' using 1:3 with lines title 'p1 norm', \\\n\
                   'flow.csv' using 1:4 with lines title 'tension norm'\n";
    std::fs::write(out.join("flow.gp"), gp)?;
    Ok(())
}

fn run_flow_cmd(cli: &Cli, config: &Config, exp: &Experiment) -> Result<ExitCode, Error> {
    let cfg = FlowConfig {
        step: config.num_or("flow.step", 1e-4)?,
        max_steps: config.usize_or("flow.max_steps", 500)?,
        backtracking: config.bool_or("flow.backtracking", true)?,
        stop_tol: config.num_or("flow.stop_tol", 1e-8)?,
        precondition: config.bool_or("flow.precondition", false)?,
    };
    let kind = config.str_or("flow.kind", "gradient")?.to_string();
    let perturb_amp = config.num_or("flow.perturb_amp", 0.0)?;
    let phi0 = if perturb_amp > 0.0 {
        let dir = random_variation(&exp.map, exp.seed, perturb_amp, false);
        exp.map.retract(&dir, 1.0)?
    } else {
        exp.map.clone()
    };
    let (_, trace) = match kind.as_str() {
        "gradient" => gradient_flow(&phi0, &exp.structure, &cfg)?,
        "subharmonic" => subharmonic_flow(&phi0, &exp.structure, &cfg)?,
        other => {
            return Err(Error::Config(format!(
                "unknown flow.kind `{other}` (gradient | subharmonic)"
            )))
        }
    };
    write_flow_csv(&cli.out, &trace)?;
    let first = trace.records.first().cloned();
    let last = trace.last().cloned();
    println!(
        "flow ({kind}): {} records, p1 norm {:.6e} -> {:.6e}, f1 {:.6e} -> {:.6e}",
        trace.len(),
        first.map(|r| r.p1_norm).unwrap_or(f64::NAN),
        last.map(|r| r.p1_norm).unwrap_or(f64::NAN),
        first.map(|r| r.f1).unwrap_or(f64::NAN),
        last.map(|r| r.f1).unwrap_or(f64::NAN),
    );
    write_summary(
        &cli.out,
        "flow",
        cli.seed,
        json!({
            "kind": kind,
            "records": trace.len(),
            "initial": first,
            "final": last,
            "csv": "flow.csv",
            "gnuplot": "flow.gp",
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn run_suite(cli: &Cli) -> Result<ExitCode, Error> {
    let results = suite::run_all()?;
    let mut all_pass = true;
    for r in &results {
        println!("{}", r.line());
        all_pass &= r.passed;
    }
    write_summary(&cli.out, "suite", cli.seed, json!({ "criteria": results }))?;
    if all_pass {
        println!("acceptance suite: all criteria passed");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("acceptance suite: at least one criterion failed");
        Ok(ExitCode::from(2))
    }
}
