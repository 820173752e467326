//! `cone-meander`: spectral data, entrance densities, conditioned-path
//! samples, and statistical verification for Brownian motion conditioned to
//! stay in a cone.
//!
//! Exit codes: 0 success (all checks passed), 1 verification check failed,
//! 2 usage or configuration error.
//!
//! Every run writes `manifest.json` (a reloadable record of the full
//! configuration) to the output directory; data files are written atomically
//! (temp + rename), so interrupted runs never leave partial CSVs.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meander_core::cones::ConeSpec;
use meander_core::kernel::{EntranceLaw, SurvivalMode};
use meander_core::sampler::{self, RngStreamSpec};
use meander_core::verify::{self, McReport};
use meander_core::{Error, Result};

use config::{load_config, CheckName, RunConfig};

#[derive(Parser)]
#[command(
    name = "cone-meander",
    version,
    about = "Brownian motion conditioned to stay in a cone: spectral data, \
             entrance densities, path sampling, and statistical verification"
)]
struct Cli {
    /// Configuration file: flat `key = value` lines or a JSON run manifest.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// RNG seed (fallback: $CONE_MEANDER_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sampling (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the spectral data of a cone (spectrum.json).
    Spectrum {
        /// Cone: wedge:<beta> | circular:<theta0> | halfspace:<d> (radians).
        #[arg(long)]
        cone: Option<String>,
    },
    /// Tabulate the entrance density e(t, ·) on a polar grid (density.csv).
    Density {
        /// Cone: wedge:<beta> | circular:<theta0> | halfspace:<d> (radians).
        #[arg(long)]
        cone: Option<String>,
        /// Marginal time in (0, 1] (default 1, where no survival factor enters).
        #[arg(long)]
        t: Option<f64>,
        /// Radial x angular cell counts, e.g. 50x50.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Sample conditioned paths as tidy CSV (paths.csv).
    Sample {
        /// Cone: wedge:<beta> | circular:<theta0> | halfspace:<d> (radians).
        #[arg(long)]
        cone: Option<String>,
        /// Start distance from the vertex.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Number of accepted paths.
        #[arg(long)]
        n: Option<usize>,
        /// Walk step size.
        #[arg(long)]
        dt: Option<f64>,
        /// Keep every k-th grid point (default: at most ~200 points per path).
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Run statistical verification (report.json, estimates.csv); exit 1 on failure.
    Verify {
        /// Which check to run.
        #[arg(long, value_enum)]
        check: Option<CheckName>,
        /// Cone: wedge:<beta> | circular:<theta0> | halfspace:<d> (radians).
        #[arg(long)]
        cone: Option<String>,
        /// Accepted samples per ensemble.
        #[arg(long)]
        n: Option<usize>,
        /// Walk step size.
        #[arg(long)]
        dt: Option<f64>,
        /// Start distance from the vertex (entrance, exit-law).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Scaling horizon (scaling check; default 4).
        #[arg(long)]
        t: Option<f64>,
        /// Exit-law horizons, comma-separated, strictly increasing in (1, 10].
        #[arg(long)]
        t_list: Option<String>,
        /// Ball radii, comma-separated, strictly decreasing in (0, 1).
        #[arg(long)]
        lambda_list: Option<String>,
        /// Ball times, comma-separated, strictly decreasing in (0, 1).
        #[arg(long)]
        s_list: Option<String>,
        /// ε-ladder, comma-separated, non-increasing (fdd-trend check).
        #[arg(long)]
        epsilon_list: Option<String>,
        /// Scaling start point, comma-separated coordinates.
        #[arg(long)]
        x: Option<String>,
        /// Ambient dimension for the ball estimate (2 or 3).
        #[arg(long)]
        d: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::defaults()?,
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    apply_command_flags(&mut cfg, &cli.command)?;

    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {} workers: {e}", cfg.workers)))?;
    }
    std::fs::create_dir_all(&cfg.out)?;
    write_atomic(
        &cfg.out.join("manifest.json"),
        &pretty(&cfg.manifest(command_name(&cli.command))),
    )?;

    match &cli.command {
        Command::Spectrum { .. } => cmd_spectrum(&cfg),
        Command::Density { .. } => cmd_density(&cfg),
        Command::Sample { .. } => cmd_sample(&cfg),
        Command::Verify { .. } => cmd_verify(&cfg),
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Spectrum { .. } => "spectrum",
        Command::Density { .. } => "density",
        Command::Sample { .. } => "sample",
        Command::Verify { .. } => "verify",
    }
}

/// Funnel subcommand flags through [`RunConfig::set`] so both input paths
/// share one validation. `f64`/integer `to_string()` round-trips exactly.
fn apply_command_flags(cfg: &mut RunConfig, command: &Command) -> Result<()> {
    let mut pairs: Vec<(&str, String)> = Vec::new();
    match command {
        Command::Spectrum { cone } => {
            push_opt(&mut pairs, "cone", cone.clone());
        }
        Command::Density { cone, t, grid } => {
            push_opt(&mut pairs, "cone", cone.clone());
            push_opt(&mut pairs, "t", t.map(|v| v.to_string()));
            push_opt(&mut pairs, "grid", grid.clone());
        }
        Command::Sample {
            cone,
            epsilon,
            n,
            dt,
            stride,
        } => {
            push_opt(&mut pairs, "cone", cone.clone());
            push_opt(&mut pairs, "epsilon", epsilon.map(|v| v.to_string()));
            push_opt(&mut pairs, "n", n.map(|v| v.to_string()));
            push_opt(&mut pairs, "dt", dt.map(|v| v.to_string()));
            push_opt(&mut pairs, "stride", stride.map(|v| v.to_string()));
        }
        Command::Verify {
            check,
            cone,
            n,
            dt,
            epsilon,
            t,
            t_list,
            lambda_list,
            s_list,
            epsilon_list,
            x,
            d,
        } => {
            push_opt(&mut pairs, "check", check.map(|c| c.as_str().to_string()));
            push_opt(&mut pairs, "cone", cone.clone());
            push_opt(&mut pairs, "n", n.map(|v| v.to_string()));
            push_opt(&mut pairs, "dt", dt.map(|v| v.to_string()));
            push_opt(&mut pairs, "epsilon", epsilon.map(|v| v.to_string()));
            push_opt(&mut pairs, "t", t.map(|v| v.to_string()));
            push_opt(&mut pairs, "t_list", t_list.clone());
            push_opt(&mut pairs, "lambda_list", lambda_list.clone());
            push_opt(&mut pairs, "s_list", s_list.clone());
            push_opt(&mut pairs, "epsilon_list", epsilon_list.clone());
            push_opt(&mut pairs, "x", x.clone());
            push_opt(&mut pairs, "d", d.map(|v| v.to_string()));
        }
    }
    for (key, value) in pairs {
        cfg.set(key, &value)?;
    }
    Ok(())
}

fn push_opt(pairs: &mut Vec<(&str, String)>, key: &'static str, value: Option<String>) {
    if let Some(v) = value {
        pairs.push((key, v));
    }
}

fn require_cone(cfg: &RunConfig) -> Result<&ConeSpec> {
    cfg.cone.as_ref().ok_or_else(|| {
        Error::Config("a cone is required: pass --cone or set `cone` in the config file".into())
    })
}

// ----------------------------------------------------------------------
// Subcommands
// ----------------------------------------------------------------------

fn cmd_spectrum(cfg: &RunConfig) -> Result<ExitCode> {
    let cone = require_cone(cfg)?;
    let law = EntranceLaw::for_cone(cone)?;
    let basis = law.basis();
    let json = serde_json::json!({
        "cone": config::cone_to_string(cone),
        "dim": basis.dim(),
        "modes": basis.num_modes(),
        "lambda1": basis.lambda1(),
        "alpha1": basis.alpha1(),
        "exit_exponent": basis.exit_exponent(),
        "m1_integral": basis.m1_integral,
        "normalization_c": law.normalization(),
    });
    let path = cfg.out.join("spectrum.json");
    write_atomic(&path, &pretty(&json))?;
    println!(
        "lambda1 = {:.12}, alpha1 = {:.12}, exit exponent = {:.12}",
        basis.lambda1(),
        basis.alpha1(),
        basis.exit_exponent()
    );
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_density(cfg: &RunConfig) -> Result<ExitCode> {
    let cone = require_cone(cfg)?;
    let t = cfg.t.unwrap_or(1.0);
    let law = EntranceLaw::for_cone(cone)?;
    let upper = law.basis().cap_upper();
    let (nr, na) = cfg.grid.unwrap_or((50, if upper == 0.0 { 1 } else { 50 }));
    if upper == 0.0 && na != 1 {
        return Err(Error::Config(format!(
            "the half-line has a point cap; use an angular grid of 1 (got {na})"
        )));
    }
    let mode = SurvivalMode::default_for(cone, RngStreamSpec::new(cfg.seed, 0));
    if matches!(mode, SurvivalMode::MonteCarlo { .. }) && t < 1.0 {
        eprintln!(
            "note: t < 1 on this cone estimates the survival factor by Monte Carlo at \
             every grid point; large grids take minutes"
        );
    }

    // Cell-center tabulation. The radial cutoff keeps Γ-tail mass below
    // ~1e−12 for every supported cone, so the weighted cell sum ≈ 1.
    let r_max = 8.0 * t.sqrt();
    let dr = r_max / nr as f64;
    let du = if upper == 0.0 { 1.0 } else { upper / na as f64 };
    let mut csv = String::from("r,angular,e,weight\n");
    let mut mass = 0.0;
    for i in 0..nr {
        let r = (i as f64 + 0.5) * dr;
        for j in 0..na {
            let u = if upper == 0.0 {
                0.0
            } else {
                (j as f64 + 0.5) * du
            };
            let y = point_from_polar(cone, r, u);
            let e = law.entrance_density(t, &y, &mode)?;
            let weight = r.powi(cone.dim() as i32 - 1)
                * law.basis().cap_weight(u)
                * dr
                * if upper == 0.0 { 1.0 } else { du };
            mass += e * weight;
            writeln!(csv, "{r},{u},{e},{weight}").expect("string write");
        }
    }

    let csv_path = cfg.out.join("density.csv");
    write_atomic(&csv_path, &csv)?;
    let json = serde_json::json!({
        "cone": config::cone_to_string(cone),
        "t": t,
        "alpha1": law.alpha1(),
        "normalization_c": law.normalization(),
        "r_max": r_max,
        "grid": format!("{nr}x{na}"),
        "mass": mass,
    });
    let json_path = cfg.out.join("density.json");
    write_atomic(&json_path, &pretty(&json))?;
    println!("weighted cell sum = {mass:.6} (→ 1 as the grid refines)");
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(ExitCode::SUCCESS)
}

/// Representative Cartesian point at polar (r, u); azimuthal symmetry makes
/// the choice of azimuth immaterial for the density.
fn point_from_polar(cone: &ConeSpec, r: f64, u: f64) -> Vec<f64> {
    match cone {
        ConeSpec::Wedge { .. } => vec![r * u.cos(), r * u.sin()],
        ConeSpec::Circular3D { .. } => vec![r * u.cos(), r * u.sin(), 0.0],
        ConeSpec::HalfSpace { d } => {
            let mut y = vec![0.0; *d];
            y[0] = r * u.cos();
            if *d > 1 {
                y[1] = r * u.sin();
            }
            y
        }
    }
}

fn cmd_sample(cfg: &RunConfig) -> Result<ExitCode> {
    let cone = require_cone(cfg)?;
    let x: Vec<f64> = sampler::default_direction(cone)
        .into_iter()
        .map(|c| c * cfg.epsilon)
        .collect();
    let stream = RngStreamSpec::new(cfg.seed, 0);
    let (paths, report) = sampler::sample_conditioned_ensemble(
        cone,
        &x,
        1.0,
        cfg.dt,
        stream,
        cfg.n,
        cfg.max_attempts,
    )?;

    let steps = paths.first().map_or(0, |p| p.len() - 1);
    let stride = cfg.stride.unwrap_or_else(|| steps.div_ceil(200)).max(1);
    let d = cone.dim();
    let mut csv = String::from("path,step,t");
    for j in 1..=d {
        write!(csv, ",x{j}").expect("string write");
    }
    csv.push('\n');
    for (id, path) in paths.iter().enumerate() {
        let mut k = 0;
        loop {
            write!(csv, "{id},{k},{}", path.times[k]).expect("string write");
            for c in path.point(k) {
                write!(csv, ",{c}").expect("string write");
            }
            csv.push('\n');
            if k == steps {
                break;
            }
            k = (k + stride).min(steps);
        }
    }

    let path = cfg.out.join("paths.csv");
    write_atomic(&path, &csv)?;
    println!(
        "{} paths ({} attempts, acceptance rate {:.3e} ± {:.1e})",
        paths.len(),
        report.attempts,
        report.acceptance_rate,
        report.rate_stderr()
    );
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cfg: &RunConfig) -> Result<ExitCode> {
    // Disjoint stream-id blocks per check: each operation derives only a
    // handful of sub-streams (≤ 10) from its base.
    let stream_for = |block: u64| RngStreamSpec::new(cfg.seed, 100 * block);
    let entrance = |cfg: &RunConfig| {
        verify::verify_entrance_density(
            require_cone(cfg)?,
            cfg.epsilon,
            cfg.n,
            cfg.dt,
            stream_for(0),
        )
    };
    let exit_law = |cfg: &RunConfig| {
        verify::verify_exit_law(
            require_cone(cfg)?,
            cfg.epsilon,
            cfg.n,
            cfg.dt,
            &cfg.t_list,
            stream_for(1),
        )
    };
    let scaling = |cfg: &RunConfig| {
        let cone = require_cone(cfg)?;
        let x = cfg
            .x
            .clone()
            .unwrap_or_else(|| sampler::default_direction(cone));
        verify::verify_scaling(cone, &x, cfg.t.unwrap_or(4.0), cfg.n, cfg.dt, stream_for(2))
    };
    let ball = |cfg: &RunConfig| {
        verify::verify_ball_estimate(
            cfg.d,
            &cfg.lambda_list,
            &cfg.s_list,
            cfg.n,
            cfg.dt,
            stream_for(3),
        )
    };
    let fdd = |cfg: &RunConfig| {
        verify::verify_fdd_trend(
            require_cone(cfg)?,
            &cfg.epsilon_list,
            cfg.t.unwrap_or(1.0),
            cfg.n,
            cfg.dt,
            stream_for(4),
        )
    };

    let reports: Vec<McReport> = match cfg.check {
        CheckName::Entrance => vec![entrance(cfg)?],
        CheckName::ExitLaw => vec![exit_law(cfg)?],
        CheckName::Scaling => vec![scaling(cfg)?],
        CheckName::Ball => vec![ball(cfg)?],
        CheckName::FddTrend => vec![fdd(cfg)?],
        CheckName::All => {
            vec![
                entrance(cfg)?,
                exit_law(cfg)?,
                scaling(cfg)?,
                ball(cfg)?,
                fdd(cfg)?,
            ]
        }
    };

    let mut csv = String::from("check,label,value,stderr\n");
    let mut all_pass = true;
    for report in &reports {
        for est in &report.estimates {
            writeln!(
                csv,
                "{},\"{}\",{},{}",
                report.name, est.label, est.value, est.stderr
            )
            .expect("string write");
        }
        for check in &report.checks {
            let p = check
                .p_value
                .map_or(String::new(), |p| format!(", p = {p:.4}"));
            println!(
                "[{}] {} / {}: statistic = {:.4}{p}",
                if check.pass { "PASS" } else { "FAIL" },
                report.name,
                check.label,
                check.statistic
            );
        }
        all_pass &= report.pass;
    }

    let report_path = cfg.out.join("report.json");
    let json = serde_json::to_value(&reports).expect("reports serialize");
    write_atomic(&report_path, &pretty(&json))?;
    let csv_path = cfg.out.join("estimates.csv");
    write_atomic(&csv_path, &csv)?;
    println!("wrote {} and {}", report_path.display(), csv_path.display());
    println!("overall: {}", if all_pass { "PASS" } else { "FAIL" });
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

// ----------------------------------------------------------------------
// Output plumbing
// ----------------------------------------------------------------------

fn pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serialization");
    text.push('\n');
    text
}

/// Write via a sibling temp file and rename, so readers never observe a
/// partially written file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
