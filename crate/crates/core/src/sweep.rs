//! Offset sweeps: run the whole pipeline at each `dv1 = -dv2 = dv`, collect
//! every estimator into one report row and write the report, plot data and
//! per-point drift tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{find_equilibria, node_noise_sigma, CellParams, Equilibria};
use crate::config::RunConfig;
use crate::drift::{
    extend_negative, extract_drift, quasi_potential, relax_trajectory, sigma_vv, write_drift_csv,
    DriftTable, PotentialTable, DEFAULT_DT_FRACTION, DEFAULT_EPSILON_FRACTION, DEFAULT_T_MAX_RC,
};
use crate::error::{Error, Result};
use crate::estimators::{kish_mttf, nobile_mttf, siegert_mttf, EstimatorFlag, Method};
use crate::projection::{make_axis, ProjectionAxis};
use crate::sde::{
    mttf_stats, run_ensemble, Full2d, MttfEstimate, Mode, Reduced1d, SdeModel1D, TtfEnsemble,
    T_MAX_TAU,
};

/// Extracted reduced model of one cell.
#[derive(Debug, Clone)]
pub struct PointModel {
    pub params: CellParams,
    pub eq: Equilibria,
    pub axis: ProjectionAxis,
    /// Drift table extended below the stable point.
    pub drift: DriftTable,
    pub potential: PotentialTable,
    pub sigma_w: f64,
    pub sigma_vv: f64,
}

/// Equilibria, axis, relaxation, drift, negative extension and potential
/// with the default extraction settings.
pub fn extract_point(p: &CellParams) -> Result<PointModel> {
    let eq = find_equilibria(p)?;
    let axis = make_axis(&eq)?;
    let traj = relax_trajectory(
        p,
        &eq,
        DEFAULT_EPSILON_FRACTION * axis.delta_vv,
        DEFAULT_DT_FRACTION * p.rc(),
        DEFAULT_T_MAX_RC * p.rc(),
    )?;
    let base = extract_drift(&traj, &axis)?;
    let drift = extend_negative(&base, p, &eq)?;
    let potential = quasi_potential(&drift);
    let sigma_w = node_noise_sigma(p);
    Ok(PointModel {
        params: *p,
        eq,
        axis,
        sigma_vv: sigma_vv(sigma_w, drift.tau),
        drift,
        potential,
        sigma_w,
    })
}

impl PointModel {
    pub fn delta_vv(&self) -> f64 {
        self.axis.delta_vv
    }

    pub fn tau(&self) -> f64 {
        self.drift.tau
    }

    pub fn write_drift_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_drift_csv(
            &self.potential,
            &self.params.params_hash(),
            self.sigma_vv,
            self.sigma_w,
            std::io::BufWriter::new(f),
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ensemble seed of sweep point `point` for `mode`.
pub fn point_seed(base_seed: u64, point: u64, mode: Mode) -> u64 {
    let tag = 2 * point + matches!(mode, Mode::Full2d) as u64;
    splitmix64(base_seed ^ splitmix64(tag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PointStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "monostable")]
    Monostable,
    #[serde(rename = "error")]
    Error,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::Monostable => "monostable",
            PointStatus::Error => "error",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [PointStatus::Ok, PointStatus::Monostable, PointStatus::Error]
            .into_iter()
            .find(|x| x.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_censored: usize,
}

impl From<&MttfEstimate> for McSummary {
    fn from(e: &MttfEstimate) -> Self {
        McSummary {
            mean: e.mean,
            ci_lo: e.ci95.0,
            ci_hi: e.ci95.1,
            n_censored: e.n_censored,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Offset `dv1 = -dv2` (V).
    pub dv: f64,
    pub status: PointStatus,
    pub delta_vv: Option<f64>,
    pub tau: Option<f64>,
    pub sigma_vv: Option<f64>,
    pub sigma_w: Option<f64>,
    /// `U(delta_vv)` (V²/s).
    pub barrier: Option<f64>,
    /// `delta_vv² / (2 tau)` (V²/s).
    pub parabolic_barrier: Option<f64>,
    pub kish: Option<f64>,
    pub nobile: Option<f64>,
    pub siegert: Option<f64>,
    pub mc1d: Option<McSummary>,
    pub mc2d: Option<McSummary>,
    /// `;`-separated `source:flag` markers.
    pub flags: String,
    pub params_hash: String,
    pub message: String,
}

impl SweepRow {
    fn empty(dv: f64, params_hash: String) -> Self {
        SweepRow {
            dv,
            status: PointStatus::Ok,
            delta_vv: None,
            tau: None,
            sigma_vv: None,
            sigma_w: None,
            barrier: None,
            parabolic_barrier: None,
            kish: None,
            nobile: None,
            siegert: None,
            mc1d: None,
            mc2d: None,
            flags: String::new(),
            params_hash,
            message: String::new(),
        }
    }

    pub fn mttf(&self, m: Method) -> Option<f64> {
        match m {
            Method::Kish => self.kish,
            Method::Nobile => self.nobile,
            Method::Siegert => self.siegert,
            Method::Mc1d => self.mc1d.as_ref().map(|s| s.mean),
            Method::Mc2d => self.mc2d.as_ref().map(|s| s.mean),
        }
    }

    /// Parabolic over extracted barrier.
    pub fn barrier_ratio(&self) -> Option<f64> {
        Some(self.parabolic_barrier? / self.barrier?)
    }

    fn flag(&mut self, source: &str, what: &str) {
        if !self.flags.is_empty() {
            self.flags.push(';');
        }
        self.flags.push_str(source);
        self.flags.push(':');
        self.flags.push_str(what);
    }
}

/// Wall time of each stage of one point (s).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub extract: f64,
    pub estimators: f64,
    pub mc1d: f64,
    pub mc2d: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Extracted model per row, where extraction succeeded.
    pub models: Vec<Option<PointModel>>,
    pub timings: Vec<StageTimings>,
}

/// Result of one sweep point, including the ensembles it ran.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub row: SweepRow,
    pub model: Option<PointModel>,
    pub ensemble_1d: Option<TtfEnsemble>,
    pub ensemble_2d: Option<TtfEnsemble>,
    pub timings: StageTimings,
}

/// Run sweep point `index` at offset `dv`.
pub fn run_point(cfg: &RunConfig, index: u64, dv: f64) -> PointOutcome {
    let p = cfg.cell.with_offset(dv);
    let mut out = PointOutcome {
        row: SweepRow::empty(dv, p.params_hash()),
        model: None,
        ensemble_1d: None,
        ensemble_2d: None,
        timings: StageTimings::default(),
    };
    if let Err(e) = run_point_inner(cfg, index, &p, &mut out) {
        out.row.status = match e {
            Error::Monostable { .. } => PointStatus::Monostable,
            _ => PointStatus::Error,
        };
        out.row.message = e.to_string();
    }
    out
}

fn run_point_inner(cfg: &RunConfig, index: u64, p: &CellParams, out: &mut PointOutcome) -> Result<()> {
    let clock = Instant::now();
    let model = extract_point(p)?;
    out.timings.extract = clock.elapsed().as_secs_f64();
    let row = &mut out.row;
    let (delta, tau, svv) = (model.delta_vv(), model.tau(), model.sigma_vv);
    row.delta_vv = Some(delta);
    row.tau = Some(tau);
    row.sigma_vv = Some(svv);
    row.sigma_w = Some(model.sigma_w);
    row.barrier = Some(model.potential.barrier);
    row.parabolic_barrier = Some(model.potential.parabolic_barrier());
    if let Some(ext) = &model.drift.extension {
        if ext.fallback_reason.is_some() {
            row.flag("extension", "harmonic-fallback");
        }
    }

    let clock = Instant::now();
    let wants = |m| cfg.methods.contains(&m);
    let note = |row: &mut SweepRow, m: Method, flags: &[EstimatorFlag]| {
        for f in flags {
            let what = match f {
                EstimatorFlag::Overflow => "overflow",
                EstimatorFlag::Truncation => "truncation",
            };
            row.flag(m.as_str(), what);
        }
    };
    if wants(Method::Kish) {
        let r = kish_mttf(delta, svv, tau)?;
        note(row, Method::Kish, &r.flags);
        row.kish = Some(r.mttf);
    }
    if wants(Method::Nobile) {
        let r = nobile_mttf(delta, svv, tau)?;
        note(row, Method::Nobile, &r.flags);
        row.nobile = Some(r.mttf);
    }
    if wants(Method::Siegert) {
        let r = siegert_mttf(&model.potential, model.sigma_w, delta)?;
        note(row, Method::Siegert, &r.flags);
        row.siegert = Some(r.mttf);
    }
    out.timings.estimators = clock.elapsed().as_secs_f64();

    let t_max = cfg.mc.t_max.unwrap_or(T_MAX_TAU * tau);
    if wants(Method::Mc1d) {
        let clock = Instant::now();
        let sim = Reduced1d {
            model: SdeModel1D::new(&model.drift, model.sigma_w)?,
            dt: DEFAULT_1D_DT_FRACTION * tau,
            t_max,
        };
        let e = run_ensemble(&sim, cfg.mc.n_paths, point_seed(cfg.mc.base_seed, index, Mode::Reduced1d))?;
        let s = mttf_stats(&e)?;
        if s.censored_warning {
            row.flag(Method::Mc1d.as_str(), "censored");
        }
        row.mc1d = Some(McSummary::from(&s));
        out.ensemble_1d = Some(e);
        out.timings.mc1d = clock.elapsed().as_secs_f64();
    }
    if wants(Method::Mc2d) {
        let clock = Instant::now();
        let sim = Full2d {
            params: *p,
            eq: model.eq.clone(),
            dt: cfg.dt_2d(),
            t_max,
        };
        let e = run_ensemble(&sim, cfg.mc.n_paths_2d, point_seed(cfg.mc.base_seed, index, Mode::Full2d))?;
        let s = mttf_stats(&e)?;
        if s.censored_warning {
            row.flag(Method::Mc2d.as_str(), "censored");
        }
        row.mc2d = Some(McSummary::from(&s));
        out.ensemble_2d = Some(e);
        out.timings.mc2d = clock.elapsed().as_secs_f64();
    }
    out.model = Some(model);
    Ok(())
}

const DEFAULT_1D_DT_FRACTION: f64 = crate::sde::DT_1D_FRACTION;

/// Every sweep point of `cfg`, in parallel; rows come back in sweep order.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let points = cfg.sweep.points();
    let outcomes: Vec<PointOutcome> = points
        .par_iter()
        .enumerate()
        .map(|(i, &dv)| run_point(cfg, i as u64, dv))
        .collect();
    let mut report = SweepReport {
        rows: Vec::with_capacity(outcomes.len()),
        models: Vec::with_capacity(outcomes.len()),
        timings: Vec::with_capacity(outcomes.len()),
    };
    for o in outcomes {
        report.rows.push(o.row);
        report.models.push(o.model);
        report.timings.push(o.timings);
    }
    Ok(report)
}

const REPORT_HEADER: [&str; 23] = [
    "dv_V",
    "status",
    "delta_vv_V",
    "tau_s",
    "sigma_vv_V",
    "sigma_w_V_per_sqrt_s",
    "barrier_V2_per_s",
    "parabolic_barrier_V2_per_s",
    "mttf_kish_s",
    "mttf_nobile_s",
    "mttf_siegert_s",
    "mttf_mc1d_s",
    "ci_lo_mc1d_s",
    "ci_hi_mc1d_s",
    "n_censored_mc1d",
    "mttf_mc2d_s",
    "ci_lo_mc2d_s",
    "ci_hi_mc2d_s",
    "n_censored_mc2d",
    "barrier_ratio",
    "flags",
    "params_hash",
    "message",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn parse_cell(s: &str, line: usize, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        line,
        msg: format!("column {col}: not a number: {s:?}"),
    })
}

impl SweepReport {
    /// Report CSV, one row per sweep point; absent values are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            let mc = |s: &Option<McSummary>| match s {
                Some(s) => [
                    cell(Some(s.mean)),
                    cell(Some(s.ci_lo)),
                    cell(Some(s.ci_hi)),
                    s.n_censored.to_string(),
                ],
                None => Default::default(),
            };
            let mut rec = vec![
                cell(Some(r.dv)),
                r.status.as_str().to_string(),
                cell(r.delta_vv),
                cell(r.tau),
                cell(r.sigma_vv),
                cell(r.sigma_w),
                cell(r.barrier),
                cell(r.parabolic_barrier),
                cell(r.kish),
                cell(r.nobile),
                cell(r.siegert),
            ];
            rec.extend(mc(&r.mc1d));
            rec.extend(mc(&r.mc2d));
            rec.push(cell(r.barrier_ratio()));
            rec.push(r.flags.clone());
            rec.push(r.params_hash.clone());
            rec.push(r.message.clone());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<report csv>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Rows of a report CSV written by [`SweepReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<SweepReport> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers()?.clone();
        let idx: BTreeMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
        for col in REPORT_HEADER {
            if !idx.contains_key(col) {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("missing column {col}"),
                });
            }
        }
        let mut rows = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let get = |c: &str| rec.get(idx[c]).unwrap_or("");
            let num = |c: &str| parse_cell(get(c), line, c);
            let mc = |m: &str, c: &str| -> Result<Option<McSummary>> {
                let Some(mean) = num(&format!("mttf_{m}_s"))? else {
                    return Ok(None);
                };
                Ok(Some(McSummary {
                    mean,
                    ci_lo: num(&format!("ci_lo_{m}_s"))?.unwrap_or(f64::NAN),
                    ci_hi: num(&format!("ci_hi_{m}_s"))?.unwrap_or(f64::NAN),
                    n_censored: get(c).parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("column {c}: not a count"),
                    })?,
                }))
            };
            let status = PointStatus::parse(get("status")).ok_or_else(|| Error::Parse {
                line,
                msg: format!("unknown status {:?}", get("status")),
            })?;
            rows.push(SweepRow {
                dv: num("dv_V")?.ok_or_else(|| Error::Parse {
                    line,
                    msg: "empty dv_V".into(),
                })?,
                status,
                delta_vv: num("delta_vv_V")?,
                tau: num("tau_s")?,
                sigma_vv: num("sigma_vv_V")?,
                sigma_w: num("sigma_w_V_per_sqrt_s")?,
                barrier: num("barrier_V2_per_s")?,
                parabolic_barrier: num("parabolic_barrier_V2_per_s")?,
                kish: num("mttf_kish_s")?,
                nobile: num("mttf_nobile_s")?,
                siegert: num("mttf_siegert_s")?,
                mc1d: mc("mc1d", "n_censored_mc1d")?,
                mc2d: mc("mc2d", "n_censored_mc2d")?,
                flags: get("flags").to_string(),
                params_hash: get("params_hash").to_string(),
                message: get("message").to_string(),
            });
        }
        let n = rows.len();
        Ok(SweepReport {
            rows,
            models: vec![None; n],
            timings: vec![StageTimings::default(); n],
        })
    }

    /// True when some point failed for a reason other than monostability.
    pub fn has_fatal_errors(&self) -> bool {
        self.rows.iter().any(|r| r.status == PointStatus::Error)
    }

    /// Drift table file name of a sweep point.
    pub fn drift_file_name(dv: f64) -> String {
        format!("drift_dv{:.4}mV.csv", dv * 1e3)
    }

    /// Write `report.csv`, `mttf_vs_dv.csv`, `report.txt`, `config.txt`,
    /// `timings.json` and one drift CSV per extracted point into `dir`.
    ///
    /// Everything but `timings.json` is a pure function of the configuration.
    pub fn write_outputs(&self, cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, text: &str| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        let cmp = compare_report(self)?;
        put("report.csv", &self.to_csv()?)?;
        put("mttf_vs_dv.csv", &cmp.plot_csv)?;
        put("report.txt", &cmp.table)?;
        put("config.txt", &cfg.echo())?;
        let timings: Vec<_> = self
            .rows
            .iter()
            .zip(&self.timings)
            .map(|(r, t)| serde_json::json!({ "dv_V": r.dv, "stages_s": t }))
            .collect();
        put(
            "timings.json",
            &serde_json::to_string_pretty(&timings).expect("plain data"),
        )?;
        for (row, model) in self.rows.iter().zip(&self.models) {
            if let Some(m) = model {
                let path = dir.join(Self::drift_file_name(row.dv));
                m.write_drift_csv(&path)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Aligned text table and plot-data CSV of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub table: String,
    /// `dv_mV, mttf_mc2d_s, mttf_mc1d_s, mttf_kish_s, mttf_nobile_s,
    /// mttf_siegert_s, ci_lo_s, ci_hi_s`; the interval is that of MC-2D.
    pub plot_csv: String,
}

pub fn compare_report(report: &SweepReport) -> Result<Comparison> {
    if report.rows.is_empty() {
        return Err(Error::InvalidArgument("empty report".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dv_mV",
        "mttf_mc2d_s",
        "mttf_mc1d_s",
        "mttf_kish_s",
        "mttf_nobile_s",
        "mttf_siegert_s",
        "ci_lo_s",
        "ci_hi_s",
    ])?;
    for r in &report.rows {
        w.write_record([
            cell(Some(r.dv * 1e3)),
            cell(r.mttf(Method::Mc2d)),
            cell(r.mttf(Method::Mc1d)),
            cell(r.kish),
            cell(r.nobile),
            cell(r.siegert),
            cell(r.mc2d.as_ref().map(|s| s.ci_lo)),
            cell(r.mc2d.as_ref().map(|s| s.ci_hi)),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<plot csv>", e.into_error()))?;
    let plot_csv = String::from_utf8(bytes).expect("csv output is utf-8");

    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
    let mut lines: Vec<[String; 11]> = vec![[
        "dv_mV", "status", "dvv_mV", "tau_ns", "mc2d_s", "mc1d_s", "kish_s", "nobile_s",
        "siegert_s", "kish/mc1d", "Upar/U",
    ]
    .map(String::from)];
    for r in &report.rows {
        let ratio = match (r.kish, r.mttf(Method::Mc1d)) {
            (Some(k), Some(m)) => Some(k / m),
            _ => None,
        };
        lines.push([
            format!("{:.3}", r.dv * 1e3),
            r.status.as_str().to_string(),
            r.delta_vv.map(|v| format!("{:.3}", v * 1e3)).unwrap_or_else(|| "-".into()),
            r.tau.map(|v| format!("{:.4}", v * 1e9)).unwrap_or_else(|| "-".into()),
            fmt(r.mttf(Method::Mc2d)),
            fmt(r.mttf(Method::Mc1d)),
            fmt(r.kish),
            fmt(r.nobile),
            fmt(r.siegert),
            ratio.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()),
            r.barrier_ratio().map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()),
        ]);
    }
    let mut widths = [0usize; 11];
    for l in &lines {
        for (w, c) in widths.iter_mut().zip(l) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut table = String::new();
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        writeln!(table, "{}", cells.join("  ").trim_end()).expect("string write");
    }
    Ok(Comparison { table, plot_csv })
}
