//! `key=value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Unknown keys and out-of-range values are rejected with the line number.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use crate::analysis::{reference_dark_model, QberMode, SystemParams};
use crate::detector::{DarkCountModel, DetectorParams, DoubleClickPolicy};
use crate::optics::OpticsParams;
use crate::postproc::qber::SampleRule;
use crate::session::{DistillParams, Protocol, SessionConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DarkSetting {
    /// Exponential model calibrated from the published anchors.
    Auto,
    Fixed(f64),
    Model(DarkCountModel),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportSpec {
    Inproc,
    /// Bind address; Alice listens.
    Listen(String),
    /// Peer address; Bob connects.
    Connect(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start_km: f64,
    pub end_km: f64,
    pub step_km: f64,
}

impl Sweep {
    pub fn lengths(&self) -> Vec<f64> {
        let count = ((self.end_km - self.start_km) / self.step_km + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.start_km + i as f64 * self.step_km)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemParams,
    pub dark: DarkSetting,
    pub sweep: Sweep,
    pub length_km: f64,
    /// Zero selects model-only sweeps.
    pub n_clocks: u64,
    pub seed: u64,
    pub transport: TransportSpec,
    pub output: Option<PathBuf>,
    pub distill: DistillParams,
}

impl RunConfig {
    pub fn session_config(&self, length_km: f64, n_clocks: u64, seed: u64) -> SessionConfig {
        SessionConfig {
            system: self.system,
            length_km,
            n_clocks,
            seed,
            distill: self.distill.clone(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

fn number(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v
        .parse()
        .map_err(|_| err(line, format!("{key}: `{v}` is not a number")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(err(line, format!("{key}: `{v}` is not finite")))
    }
}

fn in_range(
    line: usize,
    key: &str,
    v: &str,
    ok: impl Fn(f64) -> bool,
    rule: &str,
) -> Result<f64, ConfigError> {
    let x = number(line, key, v)?;
    if ok(x) {
        Ok(x)
    } else {
        Err(err(line, format!("{key}={v}: must be {rule}")))
    }
}

fn integer<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(line, format!("{key}: `{v}` is not a non-negative integer")))
}

fn numbers<const N: usize>(line: usize, key: &str, v: &str) -> Result<[f64; N], ConfigError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(err(line, format!("{key}: expected {N} comma-separated numbers")));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = number(line, key, p)?;
    }
    Ok(out)
}

/// Parses and validates a configuration. Absent keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut p = SystemParams::noiseless_detector();
    let mut qe = p.qe();
    let mut ap = 0.0;
    let mut policy = DoubleClickPolicy::default();
    let mut dark = DarkSetting::Auto;
    let mut optics: Option<(usize, OpticsParams)> = None;
    let mut sweep = Sweep {
        start_km: 0.0,
        end_km: 150.0,
        step_km: 10.0,
    };
    let mut length_km = 0.0;
    let mut n_clocks = 1_000_000u64;
    let mut seed = 1u64;
    let mut transport = TransportSpec::Inproc;
    let mut output = None;
    let mut distill = DistillParams::default();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(line, format!("expected key=value, got `{content}`")))?;
        if let Some(prev) = seen.insert(key.to_string(), line) {
            return Err(err(line, format!("{key} already set on line {prev}")));
        }
        match key {
            "clock_hz" => p.clock_hz = in_range(line, key, value, |x| x > 0.0, "> 0")?,
            "mu" => p.mu = in_range(line, key, value, |x| x >= 0.0, ">= 0")?,
            "alice_loss_db" => p.alice_loss_db = in_range(line, key, value, |x| x >= 0.0, ">= 0")?,
            "qe" => qe = in_range(line, key, value, |x| x > 0.0 && x <= 1.0, "in (0, 1]")?,
            "dark" => {
                dark = if value == "auto" {
                    DarkSetting::Auto
                } else {
                    DarkSetting::Fixed(in_range(line, key, value, |x| (0.0..1.0).contains(&x), "`auto` or in [0, 1)")?)
                }
            }
            "dark_model" => {
                let [a, b] = numbers::<2>(line, key, value)?;
                if a < 0.0 {
                    return Err(err(line, "dark_model: a must be >= 0"));
                }
                dark = DarkSetting::Model(DarkCountModel { a, b });
            }
            "ap_prob" => ap = in_range(line, key, value, |x| (0.0..1.0).contains(&x), "in [0, 1)")?,
            "double_click" => {
                policy = match value {
                    "random_port" => DoubleClickPolicy::RandomPort,
                    "discard" => DoubleClickPolicy::Discard,
                    _ => return Err(err(line, "double_click must be random_port or discard")),
                }
            }
            "visibility" | "qber_opt" => {
                if let Some((other, _)) = optics {
                    return Err(err(line, format!("optics already set on line {other}")));
                }
                let x = number(line, key, value)?;
                let o = if key == "visibility" {
                    OpticsParams::new(x)
                } else {
                    OpticsParams::from_qber_opt(x)
                };
                optics = Some((line, o.map_err(|e| err(line, e.to_string()))?));
            }
            "alpha" | "alpha_db_per_km" => {
                p.alpha_db_per_km = in_range(line, key, value, |x| x >= 0.0, ">= 0")?
            }
            "protocol" => {
                p.protocol = match value {
                    "bb84" => Protocol::Bb84,
                    "sarg04" => Protocol::Sarg04,
                    _ => return Err(err(line, "protocol must be bb84 or sarg04")),
                }
            }
            "ec_efficiency" => p.ec_efficiency = in_range(line, key, value, |x| x > 0.0, "> 0")?,
            "qber_mode" => {
                p.qber_mode = match value {
                    "lumped" => QberMode::Lumped,
                    "decomposed" => QberMode::Decomposed,
                    _ => return Err(err(line, "qber_mode must be lumped or decomposed")),
                }
            }
            "sweep" => {
                let [start_km, end_km, step_km] = numbers::<3>(line, key, value)?;
                if start_km < 0.0 || start_km > end_km || step_km <= 0.0 {
                    return Err(err(line, "sweep needs 0 <= start <= end and step > 0"));
                }
                sweep = Sweep {
                    start_km,
                    end_km,
                    step_km,
                };
            }
            "length_km" => length_km = in_range(line, key, value, |x| x >= 0.0, ">= 0")?,
            "n_clocks" => n_clocks = integer(line, key, value)?,
            "seed" => seed = integer(line, key, value)?,
            "transport" => {
                transport = match value.split_once(':') {
                    None if value == "inproc" => TransportSpec::Inproc,
                    Some(("listen", addr)) if !addr.is_empty() => TransportSpec::Listen(if addr.contains(':') {
                        addr.to_string()
                    } else {
                        format!("0.0.0.0:{addr}")
                    }),
                    Some(("connect", addr)) if addr.contains(':') => TransportSpec::Connect(addr.to_string()),
                    _ => {
                        return Err(err(
                            line,
                            "transport must be inproc, listen:<port> or connect:<host>:<port>",
                        ))
                    }
                }
            }
            "output" => output = Some(PathBuf::from(value)),
            "cascade_passes" => {
                distill.cascade_passes = integer(line, key, value)?;
                if !(1..=255).contains(&distill.cascade_passes) {
                    return Err(err(line, "cascade_passes must be in 1..=255"));
                }
            }
            "cascade_k1" => distill.k1_coefficient = in_range(line, key, value, |x| x > 0.0, "> 0")?,
            "safety_bits" => distill.safety_bits = integer(line, key, value)?,
            "qber_sample" => {
                distill.sample = if value == "auto" {
                    SampleRule::Auto
                } else {
                    match integer::<usize>(line, key, value)? {
                        0 => return Err(err(line, "qber_sample must be `auto` or positive")),
                        k => SampleRule::Fixed(k),
                    }
                }
            }
            _ => return Err(err(line, format!("unknown key `{key}`"))),
        }
    }

    if let Some((_, o)) = optics {
        p.optics = o;
    }
    let mut detector = DetectorParams::new(qe, 0.0, ap).map_err(|e| ConfigError {
        line: seen.get("qe").or(seen.get("ap_prob")).copied(),
        message: e.to_string(),
    })?;
    detector.double_click_policy = policy;
    p.detector = detector;
    let dark_line = seen.get("dark").or(seen.get("dark_model")).copied();
    p.detector = match dark {
        DarkSetting::Auto => {
            let model = reference_dark_model(&p).map_err(|e| ConfigError {
                line: None,
                message: format!("dark=auto calibration failed: {e}"),
            })?;
            p.detector.with_dark_model(model)
        }
        DarkSetting::Model(m) => p.detector.with_dark_model(m),
        DarkSetting::Fixed(d) => DetectorParams {
            dark_per_gate: d,
            ..p.detector
        },
    };
    p.validate().map_err(|e| ConfigError {
        line: seen.get(e.name).copied().or(dark_line),
        message: e.to_string(),
    })?;

    Ok(RunConfig {
        system: p,
        dark,
        sweep,
        length_km,
        n_clocks,
        seed,
        transport,
        output,
        distill,
    })
}
