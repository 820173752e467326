//! Run configuration: defaults, flat `key = value` files, JSON run
//! manifests, and the precedence rules
//! **flags > config file > `CONE_MEANDER_SEED` > built-in defaults**.
//!
//! Every run writes a `manifest.json` that is itself a loadable config, so
//! `cone-meander --config manifest.json <command>` reproduces the run
//! exactly (same seed, same parameters, same outputs).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use meander_core::cones::ConeSpec;
use meander_core::{verify, Error, Result};

/// Environment variable consulted for the seed when neither a `--seed` flag
/// nor a config file provides one.
pub const SEED_ENV: &str = "CONE_MEANDER_SEED";

/// Which verification check `verify` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckName {
    Entrance,
    ExitLaw,
    Scaling,
    Ball,
    FddTrend,
    All,
}

impl CheckName {
    /// The kebab-case name, matching the clap/config spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Entrance => "entrance",
            CheckName::ExitLaw => "exit-law",
            CheckName::Scaling => "scaling",
            CheckName::Ball => "ball",
            CheckName::FddTrend => "fdd-trend",
            CheckName::All => "all",
        }
    }
}

/// One run's complete parameter set. Defaults suit the standard acceptance
/// runs; subcommands read only the fields they need.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Cone under study (`wedge:<beta>`, `circular:<theta0>`, `halfspace:<d>`).
    pub cone: Option<ConeSpec>,
    /// Walk step size.
    pub dt: f64,
    /// Accepted-sample count (paths for `sample`, per ensemble for `verify`).
    pub n: usize,
    /// Start distance from the vertex for conditioned ensembles.
    pub epsilon: f64,
    /// Rejection-attempt budget per accepted path.
    pub max_attempts: u64,
    /// Base RNG seed; all streams derive from it.
    pub seed: u64,
    /// Worker threads (0 = one per core).
    pub workers: usize,
    /// Output directory.
    pub out: PathBuf,
    /// Verification check to run.
    pub check: CheckName,
    /// Marginal time (`density`) or scaling horizon (`verify --check scaling`).
    pub t: Option<f64>,
    /// Radial × angular grid for `density`, e.g. `50x50`.
    pub grid: Option<(usize, usize)>,
    /// Exit-law horizons, strictly increasing in (1, 10].
    pub t_list: Vec<f64>,
    /// Ball radii λ, strictly decreasing in (0, 1).
    pub lambda_list: Vec<f64>,
    /// Ball times s, strictly decreasing in (0, 1).
    pub s_list: Vec<f64>,
    /// ε-ladder for the f.d.d. trend, non-increasing.
    pub epsilon_list: Vec<f64>,
    /// Start point for the scaling check (default: the cone's axis direction).
    pub x: Option<Vec<f64>>,
    /// Ambient dimension for the ball estimate (2 or 3).
    pub d: usize,
    /// Keep every k-th grid point in `sample` output (default ≈ 200/path).
    pub stride: Option<usize>,
    // Check thresholds. These are fixed by the verification contract
    // (`meander_core::verify`); they appear here so every manifest records
    // the thresholds in force, and loading rejects values that disagree.
    pub p_threshold: f64,
    pub z_max: f64,
    pub slope_tol_sigma: f64,
    pub trend_p_threshold: f64,
    pub ball_small_cell: f64,
}

impl RunConfig {
    /// Built-in defaults, with [`SEED_ENV`] as the seed fallback.
    pub fn defaults() -> Result<RunConfig> {
        let seed = match std::env::var(SEED_ENV) {
            Ok(text) => text.trim().parse::<u64>().map_err(|_| {
                Error::Config(format!("{SEED_ENV}={text} is not an unsigned integer seed"))
            })?,
            Err(_) => 0,
        };
        Ok(RunConfig {
            cone: None,
            dt: 1e-3,
            n: 10_000,
            epsilon: 0.05,
            max_attempts: 10_000_000,
            seed,
            workers: 0,
            out: PathBuf::from("."),
            check: CheckName::All,
            t: None,
            grid: None,
            t_list: vec![2.0, 4.0],
            lambda_list: vec![0.4, 0.2, 0.1],
            s_list: vec![0.1, 0.05, 0.01],
            epsilon_list: vec![0.4, 0.25, 0.15, 0.08],
            x: None,
            d: 2,
            stride: None,
            p_threshold: verify::P_THRESHOLD,
            z_max: verify::Z_MAX,
            slope_tol_sigma: verify::SLOPE_TOL_SIGMA,
            trend_p_threshold: verify::TREND_P_THRESHOLD,
            ball_small_cell: verify::BALL_SMALL_CELL,
        })
    }

    /// Parse and assign one `key = value` pair; errors name the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "cone" => self.cone = Some(parse_cone(value)?),
            "dt" => self.dt = parse_positive_f64(key, value)?,
            "n" => self.n = parse_positive_int(key, value)? as usize,
            "epsilon" => self.epsilon = parse_positive_f64(key, value)?,
            "max_attempts" => self.max_attempts = parse_positive_int(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad_value(key, value, "an unsigned integer"))?
            }
            "workers" => {
                self.workers = value
                    .parse()
                    .map_err(|_| bad_value(key, value, "a thread count (0 = auto)"))?
            }
            "out" => self.out = PathBuf::from(value),
            "check" => {
                self.check = CheckName::from_str(value, false).map_err(|_| {
                    bad_value(
                        key,
                        value,
                        "one of entrance, exit-law, scaling, ball, fdd-trend, all",
                    )
                })?
            }
            "t" => self.t = Some(parse_positive_f64(key, value)?),
            "grid" => self.grid = Some(parse_grid(value)?),
            "t_list" => self.t_list = parse_f64_list(key, value)?,
            "lambda_list" => self.lambda_list = parse_f64_list(key, value)?,
            "s_list" => self.s_list = parse_f64_list(key, value)?,
            "epsilon_list" => self.epsilon_list = parse_f64_list(key, value)?,
            "x" => self.x = Some(parse_f64_list(key, value)?),
            "d" => self.d = parse_positive_int(key, value)? as usize,
            "stride" => self.stride = Some(parse_positive_int(key, value)? as usize),
            "p_threshold" => check_fixed(key, value, verify::P_THRESHOLD)?,
            "z_max" => check_fixed(key, value, verify::Z_MAX)?,
            "slope_tol_sigma" => check_fixed(key, value, verify::SLOPE_TOL_SIGMA)?,
            "trend_p_threshold" => check_fixed(key, value, verify::TREND_P_THRESHOLD)?,
            "ball_small_cell" => check_fixed(key, value, verify::BALL_SMALL_CELL)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// The JSON run manifest: `{"command": ..., "config": {...}}`, loadable
    /// back through [`load_config`].
    pub fn manifest(&self, command: &str) -> serde_json::Value {
        use serde_json::json;
        let mut config = BTreeMap::<&str, serde_json::Value>::new();
        if let Some(cone) = &self.cone {
            config.insert("cone", json!(cone_to_string(cone)));
        }
        config.insert("dt", json!(self.dt));
        config.insert("n", json!(self.n));
        config.insert("epsilon", json!(self.epsilon));
        config.insert("max_attempts", json!(self.max_attempts));
        config.insert("seed", json!(self.seed));
        config.insert("workers", json!(self.workers));
        config.insert("out", json!(self.out.display().to_string()));
        config.insert("check", json!(self.check.as_str()));
        if let Some(t) = self.t {
            config.insert("t", json!(t));
        }
        if let Some((nr, na)) = self.grid {
            config.insert("grid", json!(format!("{nr}x{na}")));
        }
        config.insert("t_list", json!(self.t_list));
        config.insert("lambda_list", json!(self.lambda_list));
        config.insert("s_list", json!(self.s_list));
        config.insert("epsilon_list", json!(self.epsilon_list));
        if let Some(x) = &self.x {
            config.insert("x", json!(x));
        }
        config.insert("d", json!(self.d));
        if let Some(stride) = self.stride {
            config.insert("stride", json!(stride));
        }
        config.insert("p_threshold", json!(self.p_threshold));
        config.insert("z_max", json!(self.z_max));
        config.insert("slope_tol_sigma", json!(self.slope_tol_sigma));
        config.insert("trend_p_threshold", json!(self.trend_p_threshold));
        config.insert("ball_small_cell", json!(self.ball_small_cell));
        json!({ "command": command, "config": config })
    }
}

/// Load a configuration file on top of the defaults. Two formats are
/// recognized: a JSON run manifest (first non-space byte `{`) and the flat
/// text format of `key = value` lines with `#` comments. Unknown keys are
/// rejected; flat-format errors carry the line number.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = RunConfig::defaults()?;
    if text.trim_start().starts_with('{') {
        apply_manifest(&mut cfg, &text)?;
    } else {
        apply_flat(&mut cfg, &text)?;
    }
    Ok(cfg)
}

fn apply_flat(cfg: &mut RunConfig, text: &str) -> Result<()> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{line}`",
                idx + 1
            )));
        };
        cfg.set(key.trim(), value.trim())
            .map_err(|e| at_line(idx + 1, e))?;
    }
    Ok(())
}

fn at_line(line: usize, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("line {line}: {msg}")),
        Error::Domain(msg) => Error::Config(format!("line {line}: {msg}")),
        other => other,
    }
}

fn apply_manifest(cfg: &mut RunConfig, text: &str) -> Result<()> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest JSON: {e}")))?;
    let Some(top) = value.as_object() else {
        return Err(Error::Config("manifest must be a JSON object".into()));
    };
    for (key, entry) in top {
        match key.as_str() {
            // The command is informational: the subcommand on the command
            // line decides what runs.
            "command" => {}
            "config" => {
                let Some(pairs) = entry.as_object() else {
                    return Err(Error::Config("manifest `config` must be an object".into()));
                };
                for (k, v) in pairs {
                    cfg.set(k, &flat_value(k, v)?)?;
                }
            }
            other => return Err(Error::Config(format!("unknown manifest key `{other}`"))),
        }
    }
    Ok(())
}

/// Render a manifest JSON value in the flat format so both formats share one
/// parse-and-validate path. `serde_json` prints floats with the shortest
/// round-trip representation, so numbers survive exactly.
fn flat_value(key: &str, v: &serde_json::Value) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Array(items) => {
            let parts: Result<Vec<String>> = items.iter().map(|i| flat_value(key, i)).collect();
            Ok(parts?.join(","))
        }
        other => Err(Error::Config(format!(
            "config key `{key}`: unsupported value {other}"
        ))),
    }
}

/// Parse the cone syntax `wedge:<beta>` / `circular:<theta0>` /
/// `halfspace:<d>` (angles in radians).
pub fn parse_cone(text: &str) -> Result<ConeSpec> {
    let usage = || {
        Error::Config(format!(
            "cone `{text}`: expected wedge:<beta>, circular:<theta0>, or halfspace:<d> \
             (angles in radians)"
        ))
    };
    let (family, param) = text.split_once(':').ok_or_else(usage)?;
    let param = param.trim();
    match family.trim() {
        "wedge" => ConeSpec::wedge(param.parse().map_err(|_| usage())?),
        "circular" => ConeSpec::circular3d(param.parse().map_err(|_| usage())?),
        "halfspace" => ConeSpec::half_space(param.parse().map_err(|_| usage())?),
        _ => Err(usage()),
    }
}

/// Inverse of [`parse_cone`]; `f64`'s `Display` is shortest-round-trip, so
/// the parameter survives exactly.
pub fn cone_to_string(cone: &ConeSpec) -> String {
    match cone {
        ConeSpec::Wedge { beta } => format!("wedge:{beta}"),
        ConeSpec::Circular3D { theta0 } => format!("circular:{theta0}"),
        ConeSpec::HalfSpace { d } => format!("halfspace:{d}"),
    }
}

fn bad_value(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("config key `{key}`: `{value}` is not {expected}"))
}

fn parse_positive_f64(key: &str, value: &str) -> Result<f64> {
    let x: f64 = value
        .parse()
        .map_err(|_| bad_value(key, value, "a number"))?;
    if !x.is_finite() || x <= 0.0 {
        return Err(bad_value(key, value, "a positive finite number"));
    }
    Ok(x)
}

fn parse_positive_int(key: &str, value: &str) -> Result<u64> {
    let x: u64 = value
        .parse()
        .map_err(|_| bad_value(key, value, "a positive integer"))?;
    if x == 0 {
        return Err(bad_value(key, value, "a positive integer"));
    }
    Ok(x)
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let parts: Result<Vec<f64>> = value
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| bad_value(key, value, "a comma-separated list of numbers"))
        })
        .collect();
    let xs = parts?;
    if xs.is_empty() || xs.iter().any(|x| !x.is_finite()) {
        return Err(bad_value(key, value, "a nonempty list of finite numbers"));
    }
    Ok(xs)
}

fn parse_grid(value: &str) -> Result<(usize, usize)> {
    let err = || bad_value("grid", value, "of the form <radial>x<angular>, e.g. 50x50");
    let (r, a) = value.split_once('x').ok_or_else(err)?;
    let nr: usize = r.trim().parse().map_err(|_| err())?;
    let na: usize = a.trim().parse().map_err(|_| err())?;
    if nr == 0 || na == 0 {
        return Err(err());
    }
    Ok((nr, na))
}

fn check_fixed(key: &str, value: &str, expected: f64) -> Result<()> {
    let x: f64 = value
        .parse()
        .map_err(|_| bad_value(key, value, "a number"))?;
    if x != expected {
        return Err(Error::Config(format!(
            "check threshold `{key}` is fixed at {expected} by the verification contract \
             (got {x}); remove the override"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().expect("temp file");
        f.write_all(contents.as_bytes()).expect("write");
        f
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = write_temp("");
        let cfg = load_config(f.path()).unwrap();
        let base = RunConfig::defaults().unwrap();
        assert_eq!(cfg.dt, base.dt);
        assert_eq!(cfg.n, base.n);
        assert_eq!(cfg.t_list, base.t_list);
        assert!(cfg.cone.is_none());
    }

    #[test]
    fn flat_format_parses_comments_and_lists() {
        let f = write_temp(
            "# comment line\n\
             cone = wedge:1.5707963267948966  # trailing comment\n\
             dt = 5e-3\n\
             t_list = 2, 4, 8\n\
             seed = 42\n",
        );
        let cfg = load_config(f.path()).unwrap();
        assert!(matches!(cfg.cone, Some(ConeSpec::Wedge { .. })));
        assert_eq!(cfg.dt, 5e-3);
        assert_eq!(cfg.t_list, vec![2.0, 4.0, 8.0]);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn errors_carry_line_numbers_and_key_names() {
        let f = write_temp("n = 100\ndt = 0\n");
        let err = load_config(f.path()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "missing line number: {err}");
        assert!(err.contains("`dt`"), "missing key name: {err}");

        let f = write_temp("frobnicate = 3\n");
        let err = load_config(f.path()).unwrap_err().to_string();
        assert!(
            err.contains("line 1") && err.contains("frobnicate"),
            "{err}"
        );

        let f = write_temp("just some words\n");
        let err = load_config(f.path()).unwrap_err().to_string();
        assert!(err.contains("expected `key = value`"), "{err}");
    }

    #[test]
    fn threshold_overrides_are_rejected() {
        let f = write_temp("p_threshold = 0.05\n");
        let err = load_config(f.path()).unwrap_err().to_string();
        assert!(
            err.contains("p_threshold") && err.contains("fixed"),
            "{err}"
        );
        // The recorded (default) value loads fine.
        let f = write_temp(&format!("p_threshold = {}\n", verify::P_THRESHOLD));
        assert!(load_config(f.path()).is_ok());
    }

    #[test]
    fn manifest_round_trips_exactly() {
        let mut cfg = RunConfig::defaults().unwrap();
        for (k, v) in [
            ("cone", "circular:0.7853981633974483"),
            ("dt", "0.0001"),
            ("epsilon", "0.037"),
            ("t", "0.75"),
            ("grid", "40x30"),
            ("x", "0.3,0.4,0.5"),
            ("check", "exit-law"),
            ("seed", "987654321"),
        ] {
            cfg.set(k, v).unwrap();
        }
        let manifest = serde_json::to_string_pretty(&cfg.manifest("verify")).unwrap();
        let f = write_temp(&manifest);
        let reloaded = load_config(f.path()).unwrap();
        assert_eq!(
            serde_json::to_string(&reloaded.manifest("verify")).unwrap(),
            serde_json::to_string(&cfg.manifest("verify")).unwrap(),
            "manifest → config → manifest must be the identity"
        );
        assert_eq!(reloaded.dt, 1e-4);
        assert_eq!(reloaded.x.as_deref(), Some(&[0.3, 0.4, 0.5][..]));
        assert_eq!(reloaded.check, CheckName::ExitLaw);
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        let f = write_temp(r#"{ "command": "verify", "config": {}, "extra": 1 }"#);
        assert!(load_config(f.path())
            .unwrap_err()
            .to_string()
            .contains("extra"));
        let f = write_temp(r#"{ "config": { "frobnicate": 1 } }"#);
        assert!(load_config(f.path())
            .unwrap_err()
            .to_string()
            .contains("frobnicate"));
    }

    #[test]
    fn cone_syntax_round_trips_and_rejects_garbage() {
        for text in ["wedge:1.0471975511965976", "circular:0.5", "halfspace:3"] {
            let cone = parse_cone(text).unwrap();
            assert_eq!(cone_to_string(&cone), text);
        }
        for bad in [
            "wedge",
            "sphere:1.0",
            "wedge:abc",
            "wedge:-1",
            "halfspace:0",
        ] {
            assert!(parse_cone(bad).is_err(), "`{bad}` should be rejected");
        }
    }

    #[test]
    fn grid_and_list_parsing_reject_malformed_input() {
        assert_eq!(parse_grid("50x50").unwrap(), (50, 50));
        assert_eq!(parse_grid("200x1").unwrap(), (200, 1));
        for bad in ["50", "0x50", "50x0", "axb"] {
            assert!(parse_grid(bad).is_err());
        }
        assert!(parse_f64_list("xs", "1,two,3").is_err());
        assert!(parse_f64_list("xs", "").is_err());
    }
}
