use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sramflip::config::{parse_quantity, SECOND, VOLT};
use sramflip::estimators::{kish_mttf, nobile_mttf, siegert_mttf};
use sramflip::sde::{mttf_stats, run_ensemble, Full2d, Reduced1d, SdeModel1D, T_MAX_TAU};
use sramflip::sweep::{compare_report, extract_point, run_sweep, SweepReport};
use sramflip::RunConfig;

/// Noise-induced flip times of a bistable retention cell.
#[derive(Parser)]
#[command(name = "sramflip", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract the drift and quasi-potential tables at one offset.
    Extract {
        #[command(flatten)]
        point: PointArgs,
        /// Output CSV (a `.meta.json` sidecar is written next to it).
        #[arg(long, default_value = "drift.csv")]
        out: PathBuf,
    },
    /// Monte-Carlo ensemble of flip times at one offset.
    Simulate {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, value_enum)]
        mode: SimMode,
        /// Number of paths.
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Censoring horizon, e.g. `2us` (default 1e4 tau).
        #[arg(long, value_parser = seconds)]
        t_max: Option<f64>,
        /// Output CSV (a `.meta.json` sidecar is written next to it).
        #[arg(long, default_value = "ensemble.csv")]
        out: PathBuf,
    },
    /// Closed-form or quadrature MTTF at one offset, printed as JSON.
    Estimate {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, value_enum)]
        method: EstMethod,
    },
    /// Run an offset sweep described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Comparison table and plot data from a report CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for `mttf_vs_dv.csv` (default: next to the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct PointArgs {
    /// Offset dv1 = -dv2, e.g. `41mV`.
    #[arg(long, value_parser = volts)]
    dv: f64,
    /// Config file supplying cell parameters (and fmax for 2D runs).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMode {
    #[value(name = "1d")]
    OneD,
    #[value(name = "2d")]
    TwoD,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstMethod {
    Kish,
    Nobile,
    Siegert,
}

fn volts(s: &str) -> std::result::Result<f64, String> {
    parse_quantity(s, VOLT)
}

fn seconds(s: &str) -> std::result::Result<f64, String> {
    parse_quantity(s, SECOND)
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(RunConfig::parse(&text)?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    sramflip::sde::sidecar_path(path)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Extract { point, out } => {
            let cfg = load_config(point.config.as_deref())?;
            let p = cfg.cell.with_offset(point.dv);
            let m = extract_point(&p)?;
            m.write_drift_csv(&out)?;
            let ext = m.drift.extension.as_ref();
            let meta = serde_json::json!({
                "params_hash": p.params_hash(),
                "dv_V": point.dv,
                "equilibria": m.eq,
                "delta_vv_V": m.delta_vv(),
                "tau_s": m.tau(),
                "sigma_vv_V": m.sigma_vv,
                "sigma_w": m.sigma_w,
                "barrier": m.potential.barrier,
                "parabolic_barrier": m.potential.parabolic_barrier(),
                "extension": ext,
            });
            std::fs::write(sidecar(&out), format!("{meta}\n"))?;
            println!(
                "delta_vv = {:.4} mV, tau = {:.4} ns, U(delta)/parabola = {:.3}, {} rows -> {}",
                m.delta_vv() * 1e3,
                m.tau() * 1e9,
                m.potential.barrier / m.potential.parabolic_barrier(),
                m.potential.vv.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Simulate {
            point,
            mode,
            n,
            seed,
            t_max,
            out,
        } => {
            let cfg = load_config(point.config.as_deref())?;
            let p = cfg.cell.with_offset(point.dv);
            let m = extract_point(&p)?;
            let t_max = t_max.unwrap_or(T_MAX_TAU * m.tau());
            let e = match mode {
                SimMode::OneD => {
                    let model = SdeModel1D::new(&m.drift, m.sigma_w)?;
                    let sim = Reduced1d {
                        dt: model.default_dt(),
                        model,
                        t_max,
                    };
                    run_ensemble(&sim, n, seed)?
                }
                SimMode::TwoD => {
                    let sim = Full2d {
                        params: p,
                        eq: m.eq.clone(),
                        dt: cfg.dt_2d(),
                        t_max,
                    };
                    run_ensemble(&sim, n, seed)?
                }
            };
            e.write_csv(&out, &p.params_hash())?;
            let s = mttf_stats(&e)?;
            println!(
                "{}: mttf = {:.4e} s, 95% CI [{:.4e}, {:.4e}], n = {}, censored = {} -> {}",
                s.method,
                s.mean,
                s.ci95.0,
                s.ci95.1,
                e.len(),
                s.n_censored,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Estimate { point, method } => {
            let cfg = load_config(point.config.as_deref())?;
            let m = extract_point(&cfg.cell.with_offset(point.dv))?;
            let r = match method {
                EstMethod::Kish => kish_mttf(m.delta_vv(), m.sigma_vv, m.tau())?,
                EstMethod::Nobile => nobile_mttf(m.delta_vv(), m.sigma_vv, m.tau())?,
                EstMethod::Siegert => siegert_mttf(&m.potential, m.sigma_w, m.delta_vv())?,
            };
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep { config, out } => {
            let cfg = load_config(Some(&config))?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let report = run_sweep(&cfg)?;
            report.write_outputs(&cfg, &dir)?;
            print!("{}", compare_report(&report)?.table);
            for r in report.rows.iter().filter(|r| !r.message.is_empty()) {
                eprintln!("dv = {:.4} mV: {}: {}", r.dv * 1e3, r.status.as_str(), r.message);
            }
            if report.has_fatal_errors() {
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Report { input, out } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let report = SweepReport::from_csv(&text)?;
            if report.rows.is_empty() {
                bail!("{} has no rows", input.display());
            }
            let cmp = compare_report(&report)?;
            let dir = out.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("mttf_vs_dv.csv"), &cmp.plot_csv)?;
            print!("{}", cmp.table);
            if report.has_fatal_errors() {
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
