use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use shnl::analysis::{
    epsilon_sweep, measure_growth_rates, uniform_bound_report, SweepConfig,
};
use shnl::initial::mollify;
use shnl::kernels::{check_k_admissible, check_q_dominated, sample_kernel, KernelRole};
use shnl::model::ModelOps;
use shnl::nonlocal::ConvMethod;
use shnl::stepper::integrate;

use shnl_cli::config::{FormatName, RunConfig, VariantName};

#[derive(Parser)]
#[command(name = "shnl", version, about = "Nonlocal Swift-Hohenberg solver and sweep runner")]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overrides [output].directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override [initial].seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate one model and write the trajectory and energy series.
    Simulate,
    /// Run the eps sweep against the local limit and write the reports.
    Sweep,
    /// Check kernel admissibility and companion domination.
    KernelCheck,
    /// Measure linear growth rates and compare with r - (1+lambda)^2.
    DispersionTest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::KernelCheck => "kernel-check",
            Command::DispersionTest => "dispersion-test",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config <path> is required"))?;
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let (mut cfg, warnings) =
        RunConfig::parse(&text).with_context(|| format!("in {}", config_path.display()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.initial.seed = seed;
    }
    if let Some(n) = cli.threads {
        // a second build_global in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let out_dir = cfg.output.directory.clone();
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    // a stale failure report from an earlier run must not survive a clean one
    let _ = fs::remove_file(out_dir.join("failure.json"));

    let started = Instant::now();
    let outcome = match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &out_dir),
        Command::Sweep => cmd_sweep(&cfg, &out_dir),
        Command::KernelCheck => cmd_kernel_check(&cfg, &out_dir),
        Command::DispersionTest => cmd_dispersion_test(&cfg, &out_dir),
    };

    write_manifest(&out_dir, cli.command.name(), &text, started)?;

    match outcome {
        Ok(()) => Ok(()),
        Err(err) => {
            // commands that fail a check write their own report first
            if !out_dir.join("failure.json").exists() {
                write_failure(&out_dir, cli.command.name(), &err)?;
            }
            Err(err)
        }
    }
}

fn write_manifest(out_dir: &Path, command: &str, config_text: &str, started: Instant) -> Result<()> {
    let digest = Sha256::digest(config_text.as_bytes());
    let manifest = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_sha256": format!("{digest:x}"),
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&out_dir.join("manifest.json"), &manifest)
}

fn write_failure(out_dir: &Path, command: &str, err: &anyhow::Error) -> Result<()> {
    let mut failure = json!({
        "command": command,
        "message": format!("{err:#}"),
        "tag": "cli",
    });
    if let Some(e) = err.downcast_ref::<shnl::Error>() {
        failure["tag"] = json!(e.tag());
        match e {
            shnl::Error::NonFinite { step, time } => {
                failure["step"] = json!(step);
                failure["time"] = json!(time);
            }
            shnl::Error::Stalled { step, time, levels } => {
                failure["step"] = json!(step);
                failure["time"] = json!(time);
                failure["levels"] = json!(levels);
            }
            _ => {}
        }
    }
    write_json(&out_dir.join("failure.json"), &failure)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn wants(cfg: &RunConfig, format: FormatName) -> bool {
    cfg.output.formats.contains(&format)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let domain = cfg.domain()?;
    let spec = cfg.model_spec()?;
    let ops = ModelOps::new(&spec, &domain, ConvMethod::Auto)?;
    let mut u0 = cfg.initial_condition()?.build(&domain)?;
    if cfg.initial.mollify_initial {
        let kernel = spec.smoothing_kernel_spec().ok_or_else(|| {
            anyhow!("mollify_initial needs a nonlocal model with a smoothing kernel")
        })?;
        let eps = spec.eps.expect("nonlocal model carries eps");
        u0 = mollify(&u0, kernel, eps, ConvMethod::Auto)?;
    }

    let traj = integrate(&ops, &u0, &cfg.stepper_config())?;

    if wants(cfg, FormatName::Csv) {
        let mut csv = String::from("t,local_part,nonlocal_part,total,l4_bound,e_k,e_q,eq_bound_rhs\n");
        for e in &traj.energy_series {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.t,
                e.local_part,
                e.nonlocal_part,
                e.total,
                e.l4_bound,
                opt(e.e_k),
                opt(e.e_q),
                opt(e.eq_bound_rhs),
            ));
        }
        fs::write(out_dir.join("energy.csv"), csv)?;
    }

    if wants(cfg, FormatName::Json) {
        let first = traj.energy_series.first();
        let last = traj.energy_series.last();
        let summary = json!({
            "final_time": traj.final_time(),
            "base_steps": traj.dt_history.len(),
            "snapshots": traj.times.len(),
            "min_dt": traj.dt_history.iter().cloned().fold(f64::INFINITY, f64::min),
            "energy_initial": first.map(|e| e.total),
            "energy_final": last.map(|e| e.total),
            "bounds": {
                "max_h2": traj.bounds.max_h2,
                "h1_l2_sq": traj.bounds.h1_l2_sq,
                "max_coupling_sup": traj.bounds.max_coupling_sup,
                "h4_l2_sq": traj.bounds.h4_l2_sq,
            },
        });
        write_json(&out_dir.join("summary.json"), &summary)?;
    }

    if wants(cfg, FormatName::Fields) {
        traj.write_to_dir(&out_dir.join("trajectory"))?;
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let domain = cfg.domain()?;
    let spec = cfg.model_spec()?;
    let u0 = cfg.initial_condition()?.build(&domain)?;
    let sweep_cfg = SweepConfig {
        model: spec,
        stepper: cfg.stepper_config(),
        u0,
        mollify_initial: cfg.initial.mollify_initial,
        eps_list: cfg.sweep.eps_list.clone(),
        norm_specs: cfg.norm_specs()?,
        method: ConvMethod::Auto,
    };
    let report = epsilon_sweep(&sweep_cfg)?;
    let uniform = uniform_bound_report(&report);

    if wants(cfg, FormatName::Csv) {
        fs::write(out_dir.join("sweep.csv"), report.to_csv())?;
    }
    if wants(cfg, FormatName::Json) {
        let mut text = report.to_json()?;
        text.push('\n');
        fs::write(out_dir.join("sweep.json"), text)?;
        write_json(
            &out_dir.join("uniform_bounds.json"),
            &serde_json::to_value(&uniform)?,
        )?;
    }

    let failed: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.status != "ok")
        .map(|r| json!({"eps": r.eps, "status": r.status}))
        .collect();
    if !failed.is_empty() {
        write_json(
            &out_dir.join("failure.json"),
            &json!({
                "command": "sweep",
                "tag": "sweep-rows-failed",
                "rows": failed,
            }),
        )?;
        bail!("{} of {} sweep runs failed", failed.len(), report.rows.len());
    }
    Ok(())
}

fn cmd_kernel_check(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let domain = cfg.domain()?;
    let dim = domain.dim();
    let eps = cfg.model.eps;
    let k_spec = cfg.kernel.to_spec()?;

    let admissibility = check_k_admissible(&k_spec, dim)?;
    let mut pass = admissibility.pass();

    let sampled = |spec, role| match sample_kernel(spec, &domain, eps, role) {
        Ok(k) => json!({
            "radii": k.radii(),
            "support_radius": k.support_radius(),
            "discrete_mass": k.discrete_mass(),
            "second_moment": k.second_moment(),
        }),
        Err(e) => json!({ "error": e.tag(), "message": e.to_string() }),
    };

    let smoothing_grid = sampled(&k_spec, KernelRole::Smoothing);
    if smoothing_grid.get("error").is_some() {
        pass = false;
    }

    let two_kernel = matches!(cfg.model.variant, Some(VariantName::TwoKernel));
    let (companion_grid, domination) = if two_kernel {
        let q_spec = cfg.kernel_q.to_spec()?;
        let grid = sampled(&q_spec, KernelRole::Companion);
        if grid.get("error").is_some() {
            pass = false;
        }
        let dom = check_q_dominated(&q_spec, &k_spec, eps, &domain)?;
        pass &= dom.pass;
        (Some(grid), Some(dom))
    } else {
        (None, None)
    };

    let report = json!({
        "dim": dim,
        "eps": eps,
        "smoothing": {
            "admissibility": serde_json::to_value(&admissibility)?,
            "on_grid": smoothing_grid,
        },
        "companion": companion_grid.map(|g| json!({ "on_grid": g })),
        "domination": domination
            .as_ref()
            .map(serde_json::to_value)
            .transpose()?,
        "pass": pass,
    });
    write_json(&out_dir.join("kernel_check.json"), &report)?;

    if !pass {
        write_json(
            &out_dir.join("failure.json"),
            &json!({
                "command": "kernel-check",
                "tag": "kernel-check-failed",
                "report": "kernel_check.json",
            }),
        )?;
        bail!("kernel check failed, see kernel_check.json");
    }
    Ok(())
}

fn cmd_dispersion_test(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let domain = cfg.domain()?;
    let rows = measure_growth_rates(
        &domain,
        cfg.model.r,
        &cfg.analysis.modes,
        &cfg.stepper_config(),
    )?;
    let tol = cfg.analysis.rel_tol;
    let pass = rows.iter().all(|r| r.rel_err <= tol);

    if wants(cfg, FormatName::Csv) {
        let mut csv = String::from("mode,r,measured,predicted,rel_err\n");
        for row in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row.mode, row.r, row.measured, row.predicted, row.rel_err
            ));
        }
        fs::write(out_dir.join("dispersion.csv"), csv)?;
    }
    if wants(cfg, FormatName::Json) {
        write_json(
            &out_dir.join("dispersion.json"),
            &json!({
                "rows": serde_json::to_value(&rows)?,
                "rel_tol": tol,
                "pass": pass,
            }),
        )?;
    }

    if !pass {
        let worst = rows
            .iter()
            .cloned()
            .reduce(|a, b| if a.rel_err >= b.rel_err { a } else { b })
            .expect("at least one mode");
        write_json(
            &out_dir.join("failure.json"),
            &json!({
                "command": "dispersion-test",
                "tag": "dispersion-failed",
                "worst_mode": worst.mode,
                "rel_err": worst.rel_err,
                "rel_tol": tol,
            }),
        )?;
        bail!(
            "dispersion test failed: mode {} measured {} vs predicted {} (rel err {:.3e} > {:.1e})",
            worst.mode,
            worst.measured,
            worst.predicted,
            worst.rel_err,
            tol
        );
    }
    Ok(())
}
