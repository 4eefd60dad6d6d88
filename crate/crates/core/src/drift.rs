//! Drift extraction from a noiseless relaxation, the quasi-potential, and
//! the linearised time constant.
//!
//! A trajectory is started just below the saddle on the projection axis and
//! integrated toward the stable point. Along it, `vv(t)` decreases strictly,
//! so the pairs `(vv(t_i), dvv/dt(t_i))` define `h(vv)` on `(0, delta_vv)`.
//! Both ends are equilibria and are pinned to `h = 0`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::circuit::{drift_field, node_noise_sigma, CellParams, Equilibria, StatePoint};
use crate::error::{Error, Result};
use crate::interp::PiecewiseLinear;
use crate::projection::{make_axis, ProjectionAxis};
use crate::quad::cumulative_trapezoid;

/// Initial displacement below the saddle, as a fraction of `delta_vv`.
pub const DEFAULT_EPSILON_FRACTION: f64 = 1e-3;
/// Relaxation step as a fraction of the node time constant `r c`.
pub const DEFAULT_DT_FRACTION: f64 = 1.0 / 200.0;
/// Relaxation horizon in units of `r c`.
pub const DEFAULT_T_MAX_RC: f64 = 1000.0;
/// Stop distance from the stable point, as a fraction of `delta_vv`.
const STOP_FRACTION: f64 = 1e-6;
/// Upper edge of the exponential-tail window used for `tau`.
const TAU_FIT_FRACTION: f64 = 0.1;
/// The negative-side extension reaches `-EXTENSION_SIGMAS * sigma_vv`.
pub const EXTENSION_SIGMAS: f64 = 10.0;
const HARMONIC_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StatePoint>,
    pub epsilon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionMethod {
    /// Second noiseless relaxation started below the stable point.
    Trajectory,
    /// `h(vv) = -vv / tau`.
    Harmonic,
}

impl ExtensionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtensionMethod::Trajectory => "trajectory",
            ExtensionMethod::Harmonic => "harmonic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    pub method: ExtensionMethod,
    /// Lowest tabulated `vv` (V).
    pub lower: f64,
    /// Target lower edge `-10 sigma_vv` (V).
    pub target: f64,
    /// Why the preferred trajectory method was not used, if it was not.
    pub fallback_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftTable {
    /// Ascending sample abscissae (V); contains `0` and `delta_vv` exactly.
    pub vv: Vec<f64>,
    /// Drift (V/s).
    pub h: Vec<f64>,
    /// Linearised time constant at the stable point (s).
    pub tau: f64,
    pub delta_vv: f64,
    /// Initial displacement of the extraction run (V).
    pub epsilon: f64,
    /// Integration step of the extraction run (s).
    pub dt: f64,
    pub extension: Option<Extension>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    pub vv: Vec<f64>,
    pub h: Vec<f64>,
    /// `U(vv) = -∫_0^vv h` (V²/s).
    pub u: Vec<f64>,
    /// `U(delta_vv)`.
    pub barrier: f64,
    pub tau: f64,
    pub delta_vv: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub extension: Option<Extension>,
}

impl DriftTable {
    /// Index of the `vv = 0` sample.
    pub fn zero_index(&self) -> usize {
        self.vv
            .iter()
            .position(|&v| v == 0.0)
            .expect("drift table always carries the pinned vv = 0 sample")
    }

    pub fn interpolant(&self) -> Result<PiecewiseLinear> {
        PiecewiseLinear::new(self.vv.clone(), self.h.clone())
    }

    /// Parabolic (harmonic) barrier `delta_vv^2 / (2 tau)`.
    pub fn parabolic_barrier(&self) -> f64 {
        self.delta_vv * self.delta_vv / (2.0 * self.tau)
    }

    /// Build a table from an analytic drift sampled on `[lower, delta_vv]`;
    /// `0` and `delta_vv` are always included.
    pub fn from_fn(
        h: impl Fn(f64) -> f64,
        lower: f64,
        delta_vv: f64,
        tau: f64,
        n: usize,
    ) -> Result<Self> {
        if !(lower <= 0.0 && delta_vv > 0.0 && tau > 0.0 && n >= 2) {
            return Err(Error::InvalidArgument(
                "from_fn needs lower <= 0 < delta_vv, tau > 0, n >= 2".into(),
            ));
        }
        let mut vv: Vec<f64> = Vec::new();
        if lower < 0.0 {
            let n_neg = ((n as f64) * (-lower / delta_vv)).ceil().max(2.0) as usize;
            vv.extend((0..n_neg).map(|k| lower * (1.0 - k as f64 / n_neg as f64)));
        }
        vv.extend((0..n).map(|k| delta_vv * k as f64 / n as f64));
        vv.push(delta_vv);
        let hv = vv.iter().map(|&v| h(v)).collect();
        let extension = (lower < 0.0).then(|| Extension {
            method: ExtensionMethod::Harmonic,
            lower,
            target: lower,
            fallback_reason: None,
        });
        Ok(DriftTable {
            vv,
            h: hv,
            tau,
            delta_vv,
            epsilon: 0.0,
            dt: 0.0,
            extension,
        })
    }
}

impl PotentialTable {
    pub fn parabolic_barrier(&self) -> f64 {
        self.delta_vv * self.delta_vv / (2.0 * self.tau)
    }

    pub fn drift_table(&self) -> DriftTable {
        DriftTable {
            vv: self.vv.clone(),
            h: self.h.clone(),
            tau: self.tau,
            delta_vv: self.delta_vv,
            epsilon: self.epsilon,
            dt: self.dt,
            extension: self.extension.clone(),
        }
    }

    /// `U` at `v` using the exact quadratic of the piecewise-linear drift on
    /// each table interval.
    pub fn potential_at(&self, v: f64) -> Option<f64> {
        let n = self.vv.len();
        if !(v >= self.vv[0] && v <= self.vv[n - 1]) {
            return None;
        }
        let i = self.vv.partition_point(|&x| x <= v).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.vv[i], self.vv[i + 1]);
        let (h0, h1) = (self.h[i], self.h[i + 1]);
        let s = v - x0;
        let slope = (h1 - h0) / (x1 - x0);
        Some(self.u[i] - (h0 * s + 0.5 * slope * s * s))
    }
}

fn rk4_step(s: StatePoint, p: &CellParams, dt: f64) -> StatePoint {
    let f = |s: StatePoint| {
        let d = drift_field(s, p);
        StatePoint::new(d[0], d[1])
    };
    let k1 = f(s);
    let k2 = f(s + k1 * (0.5 * dt));
    let k3 = f(s + k2 * (0.5 * dt));
    let k4 = f(s + k3 * dt);
    s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn relax_from(
    p: &CellParams,
    start: StatePoint,
    target: StatePoint,
    stop: f64,
    epsilon: f64,
    dt: f64,
    t_max: f64,
) -> Result<Trajectory> {
    let max_steps = (t_max / dt).ceil() as usize;
    let mut times = vec![0.0];
    let mut states = vec![start];
    let mut s = start;
    let mut k = 0;
    while (s - target).norm() >= stop {
        if k >= max_steps {
            return Err(Error::NotConverged {
                t_max,
                distance: (s - target).norm(),
                trajectory: Box::new(Trajectory {
                    times,
                    states,
                    epsilon,
                    dt,
                }),
            });
        }
        s = rk4_step(s, p, dt);
        k += 1;
        times.push(k as f64 * dt);
        states.push(s);
    }
    Ok(Trajectory {
        times,
        states,
        epsilon,
        dt,
    })
}

/// Noiseless relaxation from `embed(delta_vv - epsilon)` to `stable0`.
///
/// With `epsilon == 0` the run starts exactly at the saddle. The run stops
/// once within `1e-6 delta_vv` of the stable point; reaching `t_max` first
/// yields [`Error::NotConverged`] carrying the partial trajectory.
pub fn relax_trajectory(
    p: &CellParams,
    eq: &Equilibria,
    epsilon: f64,
    dt: f64,
    t_max: f64,
) -> Result<Trajectory> {
    let axis = make_axis(eq)?;
    if !(epsilon >= 0.0 && epsilon < axis.delta_vv) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [0, delta_vv), got {epsilon:e}"
        )));
    }
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::InvalidArgument("dt and t_max must be > 0".into()));
    }
    let start = if epsilon == 0.0 {
        eq.saddle
    } else {
        axis.embed(axis.delta_vv - epsilon)
    };
    relax_from(
        p,
        start,
        eq.stable0,
        STOP_FRACTION * axis.delta_vv,
        epsilon,
        dt,
        t_max,
    )
}

/// Central-difference rates at interior samples, in trajectory order.
/// `descending` selects the required direction of `vv(t)`.
fn differentiate(
    traj: &Trajectory,
    axis: &ProjectionAxis,
    descending: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = traj.states.len();
    if n < 3 || traj.times.len() != n {
        return Err(Error::InvalidArgument(format!(
            "trajectory needs >= 3 samples, got {n}"
        )));
    }
    if let Some(i) = traj.times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "trajectory times not increasing at sample {}",
            i + 1
        )));
    }
    let vv: Vec<f64> = traj.states.iter().map(|&s| axis.project(s)).collect();
    for (i, w) in vv.windows(2).enumerate() {
        let ok = if descending { w[1] < w[0] } else { w[1] > w[0] };
        if !ok {
            return Err(Error::NonMonotone { index: i + 1 });
        }
    }
    let mut xs = Vec::with_capacity(n - 2);
    let mut rates = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        xs.push(vv[i]);
        rates.push((vv[i + 1] - vv[i - 1]) / (traj.times[i + 1] - traj.times[i - 1]));
    }
    Ok((xs, rates))
}

/// Least-squares slope of `ln vv` against `t` on `0 < vv < 0.1 delta_vv`.
fn fit_tau(traj: &Trajectory, axis: &ProjectionAxis) -> Result<f64> {
    let limit = TAU_FIT_FRACTION * axis.delta_vv;
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, &s)| (t, axis.project(s)))
        .filter(|&(_, v)| v > 0.0 && v < limit)
        .map(|(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "only {} samples in the tau fit window",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "relaxation tail does not decay (slope {slope:e})"
        )));
    }
    Ok(-1.0 / slope)
}

/// Tabulate `h(vv)` on `[0, delta_vv]` from a relaxation trajectory.
pub fn extract_drift(traj: &Trajectory, axis: &ProjectionAxis) -> Result<DriftTable> {
    if traj.states.len() < 50 {
        return Err(Error::InvalidArgument(format!(
            "extraction needs >= 50 trajectory samples, got {}",
            traj.states.len()
        )));
    }
    let (mut xs, mut rates) = differentiate(traj, axis, true)?;
    let delta = axis.delta_vv;
    if let Some(i) = xs.iter().position(|&v| !(v > 0.0 && v < delta)) {
        return Err(Error::InvalidArgument(format!(
            "trajectory sample {} at vv = {:e} V leaves (0, delta_vv)",
            i + 1,
            xs[i]
        )));
    }
    xs.reverse();
    rates.reverse();
    let mut vv = Vec::with_capacity(xs.len() + 2);
    let mut h = Vec::with_capacity(xs.len() + 2);
    vv.push(0.0);
    h.push(0.0);
    vv.extend(xs);
    h.extend(rates);
    vv.push(delta);
    h.push(0.0);
    let tau = fit_tau(traj, axis)?;
    Ok(DriftTable {
        vv,
        h,
        tau,
        delta_vv: delta,
        epsilon: traj.epsilon,
        dt: traj.dt,
        extension: None,
    })
}

/// Cumulative trapezoid of `-h`, anchored at `vv = 0`.
pub fn quasi_potential(d: &DriftTable) -> PotentialTable {
    let minus_h: Vec<f64> = d.h.iter().map(|v| -v).collect();
    let u = cumulative_trapezoid(&d.vv, &minus_h, d.zero_index());
    let barrier = *u.last().expect("non-empty table");
    PotentialTable {
        vv: d.vv.clone(),
        h: d.h.clone(),
        u,
        barrier,
        tau: d.tau,
        delta_vv: d.delta_vv,
        epsilon: d.epsilon,
        dt: d.dt,
        extension: d.extension.clone(),
    }
}

/// Stationary spread of the reduced coordinate, `sigma_w sqrt(tau / 2)`.
pub fn sigma_vv(sigma_w: f64, tau: f64) -> f64 {
    sigma_w * (0.5 * tau).sqrt()
}

/// Extend the table below the stable point down to `-10 sigma_vv`, from a
/// second relaxation started below the stable point on the axis, falling
/// back to the harmonic branch `-vv / tau` when that run is unusable.
pub fn extend_negative(d: &DriftTable, p: &CellParams, eq: &Equilibria) -> Result<DriftTable> {
    match extend_negative_with(d, p, eq, ExtensionMethod::Trajectory) {
        Ok(t) => Ok(t),
        Err(Error::NonMonotone { .. })
        | Err(Error::NotConverged { .. })
        | Err(Error::InvalidArgument(_)) => {
            let mut t = extend_negative_with(d, p, eq, ExtensionMethod::Harmonic)?;
            if let Some(ext) = t.extension.as_mut() {
                ext.fallback_reason = Some("trajectory extension unusable".into());
            }
            Ok(t)
        }
        Err(e) => Err(e),
    }
}

pub fn extend_negative_with(
    d: &DriftTable,
    p: &CellParams,
    eq: &Equilibria,
    method: ExtensionMethod,
) -> Result<DriftTable> {
    if d.extension.is_some() || d.vv[0] < 0.0 {
        return Err(Error::InvalidArgument("drift table is already extended".into()));
    }
    let sigma = sigma_vv(node_noise_sigma(p), d.tau);
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(
            "noise-free cell: the extension range -10 sigma_vv is empty".into(),
        ));
    }
    let target = -EXTENSION_SIGMAS * sigma;
    let (neg_vv, neg_h) = match method {
        ExtensionMethod::Harmonic => {
            let vv: Vec<f64> = (0..HARMONIC_POINTS)
                .map(|k| target * (1.0 - k as f64 / HARMONIC_POINTS as f64))
                .collect();
            let h = vv.iter().map(|&v| -v / d.tau).collect();
            (vv, h)
        }
        ExtensionMethod::Trajectory => {
            let axis = make_axis(eq)?;
            // Start a little beyond the target so interior samples cover it.
            let start = axis.embed(1.1 * target);
            let dt = if d.dt > 0.0 { d.dt } else { DEFAULT_DT_FRACTION * p.rc() };
            let traj = relax_from(
                p,
                start,
                eq.stable0,
                STOP_FRACTION * axis.delta_vv,
                0.0,
                dt,
                DEFAULT_T_MAX_RC * p.rc(),
            )?;
            let (vv, h) = differentiate(&traj, &axis, false)?;
            if let Some(&last) = vv.last() {
                if !(last < 0.0) {
                    return Err(Error::InvalidArgument(
                        "negative-side relaxation overshoots the stable point".into(),
                    ));
                }
            }
            if vv[0] > target {
                return Err(Error::InvalidArgument(
                    "negative-side relaxation does not cover -10 sigma_vv".into(),
                ));
            }
            (vv, h)
        }
    };
    let lower = neg_vv[0];
    let mut vv = neg_vv;
    let mut h = neg_h;
    vv.extend_from_slice(&d.vv);
    h.extend_from_slice(&d.h);
    Ok(DriftTable {
        vv,
        h,
        extension: Some(Extension {
            method,
            lower,
            target,
            fallback_reason: None,
        }),
        ..d.clone()
    })
}

/// Provenance carried in the one-line header of a drift CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCsvHeader {
    pub fields: BTreeMap<String, String>,
}

impl DriftCsvHeader {
    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.fields.get(key).and_then(|v| v.parse().ok())
    }
}

/// Write `vv_mV, h_mV_per_us, U_V2_per_s` with a `#` provenance header.
pub fn write_drift_csv<W: Write>(
    table: &PotentialTable,
    params_hash: &str,
    sigma_vv: f64,
    sigma_w: f64,
    mut out: W,
) -> Result<()> {
    let ext = table
        .extension
        .as_ref()
        .map(|e| e.method.as_str())
        .unwrap_or("none");
    writeln!(
        out,
        "# params_hash={params_hash} epsilon={:e} dt={:e} delta_vv={:e} tau={:e} sigma_vv={:e} sigma_w={:e} barrier={:e} extension={ext}",
        table.epsilon, table.dt, table.delta_vv, table.tau, sigma_vv, sigma_w, table.barrier
    )
    .map_err(|e| Error::io("<drift csv>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vv_mV", "h_mV_per_us", "U_V2_per_s"])?;
    for i in 0..table.vv.len() {
        w.write_record([
            format!("{:e}", table.vv[i] * 1e3),
            format!("{:e}", table.h[i] * 1e-3),
            format!("{:e}", table.u[i]),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<drift csv>", e))?;
    Ok(())
}

/// Parse the `#` header line of a drift CSV.
pub fn read_drift_header<R: BufRead>(mut input: R) -> Result<DriftCsvHeader> {
    let mut line = String::new();
    input
        .read_line(&mut line)
        .map_err(|e| Error::io("<drift csv>", e))?;
    let body = line.trim().strip_prefix('#').ok_or(Error::Parse {
        line: 1,
        msg: "missing `#` provenance header".into(),
    })?;
    let fields = body
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(DriftCsvHeader { fields })
}
