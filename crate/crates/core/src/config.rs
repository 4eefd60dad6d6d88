//! Run configuration: flat `section.key = value` lines with SI prefixes and
//! optional unit suffixes (`41mV`, `50aF`, `10MΩ`, `20GHz`). `#` starts a
//! comment. Every key is optional.
//!
//! ```text
//! cell.c            = 50aF
//! sweep.dv_start    = 39mV
//! sweep.dv_stop     = 43mV
//! sweep.dv_step     = 1mV
//! mc.n_paths        = 10000
//! estimators.methods = kish, nobile, siegert, mc-1d, mc-2d
//! output.dir        = out
//! ```

use std::path::PathBuf;

use crate::circuit::CellParams;
use crate::error::{Error, Result};
use crate::estimators::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRange {
    pub dv_start: f64,
    pub dv_stop: f64,
    pub dv_step: f64,
}

impl SweepRange {
    /// `dv_start + k dv_step` up to `dv_stop` (with a `1e-9 dv_step` slack).
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.dv_stop - self.dv_start) / self.dv_step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.dv_start + k as f64 * self.dv_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    /// Reduced-model paths per point.
    pub n_paths: u64,
    /// Two-node paths per point.
    pub n_paths_2d: u64,
    pub base_seed: u64,
    /// Censoring horizon (s); `None` means `1e4 tau` of each point.
    pub t_max: Option<f64>,
    /// Two-node noise bandwidth (Hz); the step is `1 / (2 fmax)`.
    pub fmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Cell parameters; the offsets are set per sweep point.
    pub cell: CellParams,
    pub sweep: SweepRange,
    pub mc: McConfig,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cell: CellParams::default(),
            sweep: SweepRange {
                dv_start: 0.039,
                dv_stop: 0.043,
                dv_step: 0.001,
            },
            mc: McConfig {
                n_paths: 10_000,
                n_paths_2d: 200,
                base_seed: 1,
                t_max: None,
                fmax: 20e9,
            },
            methods: Method::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn prefix_scale(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "a" => 1e-18,
        "f" => 1e-15,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" | "μ" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        "T" => 1e12,
        _ => return None,
    })
}

/// Number with optional SI prefix and optional unit from `units`.
pub fn parse_quantity(text: &str, units: &[&str]) -> std::result::Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .map(|(i, _)| i)
        .chain([text.len()])
        .rev()
        .find(|&i| text[..i].trim_end().parse::<f64>().is_ok())
        .ok_or_else(|| format!("not a number: {text:?}"))?;
    let value: f64 = text[..split].trim_end().parse().expect("checked");
    let suffix = text[split..].trim();
    let prefix = units
        .iter()
        .filter(|u| !u.is_empty())
        .find_map(|u| suffix.strip_suffix(u))
        .unwrap_or(suffix);
    let scale = prefix_scale(prefix).ok_or_else(|| format!("unknown unit suffix {suffix:?}"))?;
    // exact when there is no prefix, so echoed values parse back bit for bit
    let v = if scale == 1.0 { value } else { value * scale };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: {text:?}"))
    }
}

fn parse_count(text: &str) -> std::result::Result<u64, String> {
    let t = text.trim();
    if let Ok(n) = t.parse::<u64>() {
        return Ok(n);
    }
    let v = parse_quantity(t, &[])?;
    if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
        Ok(v as u64)
    } else {
        Err(format!("not a non-negative integer: {t:?}"))
    }
}

pub const VOLT: &[&str] = &["V"];
pub const SECOND: &[&str] = &["s"];
const FARAD: &[&str] = &["F"];
const OHM: &[&str] = &["Ω", "ohm", "Ohm"];
const KELVIN: &[&str] = &["K"];
const HERTZ: &[&str] = &["Hz"];

impl RunConfig {
    /// Parse and validate a configuration document.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected `section.key = value`, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(perr(format!("duplicate key `{key}`")));
            }
            let q = |units: &[&str]| parse_quantity(value, units).map_err(|m| perr(format!("{key}: {m}")));
            let n = || parse_count(value).map_err(|m| perr(format!("{key}: {m}")));
            match key {
                "cell.vdd" => cfg.cell.vdd = q(VOLT)?,
                "cell.vm" => cfg.cell.vm = q(VOLT)?,
                "cell.vs" => cfg.cell.vs = q(VOLT)?,
                "cell.r" => cfg.cell.r = q(OHM)?,
                "cell.c" => cfg.cell.c = q(FARAD)?,
                "cell.temp" => cfg.cell.temp = q(KELVIN)?,
                "cell.noise_scale" => cfg.cell.noise_scale = q(&[])?,
                "sweep.dv_start" => cfg.sweep.dv_start = q(VOLT)?,
                "sweep.dv_stop" => cfg.sweep.dv_stop = q(VOLT)?,
                "sweep.dv_step" => cfg.sweep.dv_step = q(VOLT)?,
                "mc.n_paths" => cfg.mc.n_paths = n()?,
                "mc.n_paths_2d" => cfg.mc.n_paths_2d = n()?,
                "mc.base_seed" => cfg.mc.base_seed = n()?,
                "mc.t_max" => cfg.mc.t_max = Some(q(SECOND)?),
                "mc.fmax" => cfg.mc.fmax = q(HERTZ)?,
                "estimators.methods" => {
                    cfg.methods = value
                        .split(',')
                        .map(|s| s.trim())
                        .filter(|s| !s.is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?;
                }
                "output.dir" => cfg.output_dir = PathBuf::from(value),
                _ => return Err(perr(format!("unknown key `{key}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::Validation {
                field: field.into(),
                reason,
            })
        };
        if let Err(Error::InvalidParams { field, reason }) = self.cell.validate() {
            return bad(&format!("cell.{field}"), reason);
        }
        let s = &self.sweep;
        if !(s.dv_step > 0.0) {
            return bad("sweep.dv_step", format!("must be > 0, got {:e}", s.dv_step));
        }
        if !(s.dv_start <= s.dv_stop) {
            return bad(
                "sweep.dv_start",
                format!("must not exceed sweep.dv_stop ({:e} > {:e})", s.dv_start, s.dv_stop),
            );
        }
        if s.points().len() > 10_000 {
            return bad("sweep.dv_step", "more than 10000 sweep points".into());
        }
        if self.mc.n_paths < 1 {
            return bad("mc.n_paths", "must be >= 1".into());
        }
        if self.methods.contains(&Method::Mc2d) && self.mc.n_paths_2d < 1 {
            return bad("mc.n_paths_2d", "must be >= 1 when mc-2d is requested".into());
        }
        if let Some(t) = self.mc.t_max {
            if !(t > 0.0) {
                return bad("mc.t_max", format!("must be > 0, got {t:e}"));
            }
        }
        if !(self.mc.fmax > 0.0) {
            return bad("mc.fmax", format!("must be > 0, got {:e}", self.mc.fmax));
        }
        if self.methods.is_empty() {
            return bad("estimators.methods", "at least one method is required".into());
        }
        Ok(())
    }

    /// Two-node Euler-Maruyama step `1 / (2 fmax)`.
    pub fn dt_2d(&self) -> f64 {
        0.5 / self.mc.fmax
    }

    /// Every effective value, in a form [`RunConfig::parse`] reads back to
    /// an identical configuration.
    pub fn echo(&self) -> String {
        let c = &self.cell;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("cell.vdd", format!("{:e}", c.vdd));
        line("cell.vm", format!("{:e}", c.vm));
        line("cell.vs", format!("{:e}", c.vs));
        line("cell.r", format!("{:e}", c.r));
        line("cell.c", format!("{:e}", c.c));
        line("cell.temp", format!("{:e}", c.temp));
        line("cell.noise_scale", format!("{:e}", c.noise_scale));
        line("sweep.dv_start", format!("{:e}", self.sweep.dv_start));
        line("sweep.dv_stop", format!("{:e}", self.sweep.dv_stop));
        line("sweep.dv_step", format!("{:e}", self.sweep.dv_step));
        line("mc.n_paths", self.mc.n_paths.to_string());
        line("mc.n_paths_2d", self.mc.n_paths_2d.to_string());
        line("mc.base_seed", self.mc.base_seed.to_string());
        if let Some(t) = self.mc.t_max {
            line("mc.t_max", format!("{t:e}"));
        }
        line("mc.fmax", format!("{:e}", self.mc.fmax));
        line(
            "estimators.methods",
            self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", "),
        );
        line("output.dir", self.output_dir.display().to_string());
        out
    }
}

impl std::str::FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunConfig::parse(s)
    }
}
