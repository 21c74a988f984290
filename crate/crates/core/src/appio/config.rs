//! TOML run configuration.
//!
//! ```toml
//! mode = "regularized"        # regularized | target | mms | sweep-eps | sweep-delta | verify
//! run_id = "demo"
//!
//! [grid]
//! nx = 64
//! ny = 64
//! lx = 1.0
//! ly = 1.0
//!
//! [time]
//! t_final = 1.0
//! cfl = 0.4
//! # dt_max = 1e-3
//!
//! [physics]
//! a = 1.0
//! gamma = 1.4
//! mu = 0.1
//! lambda = 0.0
//! eps = 0.01
//! delta = 0.01
//! Gamma = 6.0
//! transport = "upwind"        # upwind | centered
//!
//! [initial]
//! kind = "ratio_profile"      # constant | cosine | ratio_profile | snapshot
//! rho_base = 1.0
//! rho_amp = 0.1
//! ratio_lo = 0.5
//! ratio_hi = 2.0
//!
//! [output]
//! record_interval = 1
//! snapshot_interval = 100
//! output_dir = "output"
//! ```
//!
//! Only `[grid]` and `[time].t_final` are required.

use crate::init::{InitialDataSpec, Profile};
use crate::params::{validate_params, ParamError, SimulationParams, Transport};
use crate::verification::mms::{DtRule, MmsOptions};
use crate::verification::sweep::SweepOptions;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Regularized,
    /// `eps = delta = 0`.
    Target,
    Mms,
    SweepEps,
    SweepDelta,
    Verify,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputControls {
    pub record_interval: usize,
    pub snapshot_interval: usize,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmsConfig {
    pub options: MmsOptions,
    /// Velocity amplitude of the manufactured solution.
    pub velocity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub values: Option<Vec<f64>>,
    pub options: SweepOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub mode: Mode,
    pub run_id: String,
    pub params: SimulationParams,
    pub initial: InitialDataSpec,
    pub output: OutputControls,
    pub mms: MmsConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{message}", location(.line, .key))]
pub struct ParseError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

fn location(line: &Option<usize>, key: &Option<String>) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!("line {l}, key `{k}`: "),
        (Some(l), None) => format!("line {l}: "),
        (None, Some(k)) => format!("key `{k}`: "),
        (None, None) => String::new(),
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("invalid parameters: {0}")]
    Validation(#[from] ParamError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    mode: Mode,
    run_id: Option<String>,
    grid: RawGrid,
    time: RawTime,
    #[serde(default)]
    physics: RawPhysics,
    initial: Option<RawInitial>,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    mms: RawMms,
    #[serde(default)]
    sweep: RawSweep,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: usize,
    ny: usize,
    lx: Option<f64>,
    ly: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_final: f64,
    cfl: Option<f64>,
    dt_max: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    a: Option<f64>,
    gamma: Option<f64>,
    mu: Option<f64>,
    lambda: Option<f64>,
    eps: Option<f64>,
    delta: Option<f64>,
    #[serde(rename = "Gamma")]
    big_gamma: Option<f64>,
    transport: Option<Transport>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: Option<String>,
    rho: Option<f64>,
    b: Option<f64>,
    base: Option<f64>,
    amplitude: Option<f64>,
    kx: Option<f64>,
    ky: Option<f64>,
    ratio: Option<f64>,
    rho_base: Option<f64>,
    rho_amp: Option<f64>,
    ratio_lo: Option<f64>,
    ratio_hi: Option<f64>,
    path: Option<PathBuf>,
    lower: Option<f64>,
    upper: Option<f64>,
    swirl: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    record_interval: Option<usize>,
    snapshot_interval: Option<usize>,
    output_dir: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMms {
    resolutions: Option<Vec<usize>>,
    dt_rule: Option<String>,
    dt_coefficient: Option<f64>,
    velocity: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    values: Option<Vec<f64>>,
    frame_dt: Option<f64>,
    defect_exponent: Option<f64>,
    cutoff_k: Option<f64>,
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse(ParseError {
        line: None,
        key: Some(key.to_string()),
        message: message.into(),
    })
}

/// Extracts the offending key from messages such as "duplicate key `nx`".
fn key_from_message(msg: &str) -> Option<String> {
    let start = msg.find('`')?;
    let rest = &msg[start + 1..];
    let end = rest.find('`')?;
    Some(rest[..end].to_string())
}

fn parse_error(text: &str, err: toml::de::Error) -> ParseError {
    let line = err
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let message = err.message().trim().to_string();
    let from_span = err
        .span()
        .and_then(|s| text.get(s))
        .map(str::trim)
        .filter(|k| !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'));
    let key = key_from_message(&message).or_else(|| from_span.map(str::to_string));
    ParseError { line, key, message }
}

fn build_initial(raw: Option<RawInitial>) -> Result<InitialDataSpec, ConfigError> {
    let Some(r) = raw else {
        return Ok(InitialDataSpec::default());
    };
    let kind = r.kind.clone().unwrap_or_else(|| "cosine".to_string());
    let given: Vec<(&str, bool)> = vec![
        ("rho", r.rho.is_some()),
        ("b", r.b.is_some()),
        ("base", r.base.is_some()),
        ("amplitude", r.amplitude.is_some()),
        ("kx", r.kx.is_some()),
        ("ky", r.ky.is_some()),
        ("ratio", r.ratio.is_some()),
        ("rho_base", r.rho_base.is_some()),
        ("rho_amp", r.rho_amp.is_some()),
        ("ratio_lo", r.ratio_lo.is_some()),
        ("ratio_hi", r.ratio_hi.is_some()),
        ("path", r.path.is_some()),
    ];
    let allowed: &[&str] = match kind.as_str() {
        "constant" => &["rho", "b"],
        "cosine" => &["base", "amplitude", "kx", "ky", "ratio"],
        "ratio_profile" => &["rho_base", "rho_amp", "ratio_lo", "ratio_hi"],
        "snapshot" => &["path"],
        other => {
            return Err(invalid(
                "initial.kind",
                format!("unknown kind {other:?}, expected constant, cosine, ratio_profile or snapshot"),
            ))
        }
    };
    if let Some((k, _)) = given.iter().find(|(k, set)| *set && !allowed.contains(k)) {
        return Err(invalid(
            &format!("initial.{k}"),
            format!("not a parameter of kind {kind:?}"),
        ));
    }
    let profile = match kind.as_str() {
        "constant" => Profile::Constant {
            rho: r.rho.unwrap_or(1.0),
            b: r.b.unwrap_or(1.0),
        },
        "cosine" => Profile::Cosine {
            base: r.base.unwrap_or(1.0),
            amplitude: r.amplitude.unwrap_or(0.1),
            kx: r.kx.unwrap_or(1.0),
            ky: r.ky.unwrap_or(1.0),
            ratio: r.ratio.unwrap_or(1.0),
        },
        "ratio_profile" => Profile::RatioProfile {
            rho_base: r.rho_base.unwrap_or(1.0),
            rho_amp: r.rho_amp.unwrap_or(0.1),
            ratio_lo: r.ratio_lo.unwrap_or(0.5),
            ratio_hi: r.ratio_hi.unwrap_or(2.0),
        },
        _ => Profile::Snapshot {
            path: r
                .path
                .ok_or_else(|| invalid("initial.path", "required for kind \"snapshot\""))?,
        },
    };
    Ok(InitialDataSpec {
        profile,
        lower: r.lower,
        upper: r.upper,
        swirl: r.swirl.unwrap_or(0.0),
    })
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.')
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let d = SimulationParams::default();
    let ph = raw.physics;
    let mut params = SimulationParams {
        a: ph.a.unwrap_or(d.a),
        gamma: ph.gamma.unwrap_or(d.gamma),
        mu: ph.mu.unwrap_or(d.mu),
        lambda: ph.lambda.unwrap_or(d.lambda),
        eps: ph.eps.unwrap_or(d.eps),
        delta: ph.delta.unwrap_or(d.delta),
        big_gamma: ph.big_gamma.unwrap_or(d.big_gamma),
        lx: raw.grid.lx.unwrap_or(d.lx),
        ly: raw.grid.ly.unwrap_or(d.ly),
        nx: raw.grid.nx,
        ny: raw.grid.ny,
        cfl: raw.time.cfl.unwrap_or(d.cfl),
        t_final: raw.time.t_final,
        dt_max: raw.time.dt_max,
        transport: ph.transport.unwrap_or(d.transport),
    };
    if raw.mode == Mode::Target {
        params = params.target_system();
    }
    let params = validate_params(params)?;

    let run_id = raw.run_id.unwrap_or_else(|| "run".to_string());
    if !valid_run_id(&run_id) {
        return Err(invalid(
            "run_id",
            format!("{run_id:?} must be non-empty and use only [A-Za-z0-9_.-]"),
        ));
    }
    let record_interval = raw.output.record_interval.unwrap_or(1);
    let snapshot_interval = raw.output.snapshot_interval.unwrap_or(100);
    if record_interval == 0 {
        return Err(invalid("output.record_interval", "must be >= 1"));
    }
    if snapshot_interval == 0 {
        return Err(invalid("output.snapshot_interval", "must be >= 1"));
    }

    let dt_rule = match raw.mms.dt_rule.as_deref() {
        None | Some("cfl") => DtRule::Cfl,
        Some("diffusive") => DtRule::Diffusive(raw.mms.dt_coefficient.unwrap_or(1.0)),
        Some(other) => {
            return Err(invalid(
                "mms.dt_rule",
                format!("unknown rule {other:?}, expected cfl or diffusive"),
            ))
        }
    };
    let resolutions = raw.mms.resolutions.unwrap_or_else(|| vec![32, 64, 128]);
    if resolutions.len() < 2 || resolutions.iter().any(|n| *n < 2) {
        return Err(invalid("mms.resolutions", "need at least two resolutions, each >= 2"));
    }
    let sd = SweepOptions::default();
    let sweep = SweepConfig {
        values: raw.sweep.values,
        options: SweepOptions {
            frame_dt: raw.sweep.frame_dt.unwrap_or(sd.frame_dt),
            defect_exponent: raw.sweep.defect_exponent.unwrap_or(sd.defect_exponent),
            cutoff_k: raw.sweep.cutoff_k.unwrap_or(sd.cutoff_k),
            ratio_tol: sd.ratio_tol,
        },
    };
    if !(sweep.options.frame_dt > 0.0) {
        return Err(invalid("sweep.frame_dt", "must be > 0"));
    }
    if !(sweep.options.defect_exponent > 1.0) {
        return Err(invalid("sweep.defect_exponent", "must be > 1"));
    }
    if !(sweep.options.cutoff_k >= 1.0) {
        return Err(invalid("sweep.cutoff_k", "must be >= 1"));
    }

    Ok(Config {
        mode: raw.mode,
        run_id,
        params,
        initial: build_initial(raw.initial)?,
        output: OutputControls {
            record_interval,
            snapshot_interval,
            output_dir: raw.output.output_dir.unwrap_or_else(|| PathBuf::from("output")),
        },
        mms: MmsConfig {
            options: MmsOptions { resolutions, dt_rule },
            velocity: raw.mms.velocity.unwrap_or(0.5),
        },
        sweep,
    })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
