//! Euler-Maruyama Monte Carlo of the reduced 1D equation
//! `dvv/dt = h(vv) + sigma_w w(t)` and of the full two-node cell, with
//! first-passage detection and ensemble statistics.
//!
//! Every path draws from its own ChaCha8 stream selected by the path index,
//! so an ensemble is a pure function of `(model, dt, t_max, base_seed, n)`
//! whatever the thread count.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{drift_field, node_noise_sigma, CellParams, Equilibria, StatePoint};
use crate::drift::{sigma_vv, DriftTable, EXTENSION_SIGMAS};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::interp::PiecewiseLinear;

/// Per-path random stream.
pub type PathRng = ChaCha8Rng;

/// Stream `index` of the generator keyed by `base_seed`.
pub fn path_stream(base_seed: u64, index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Reduced-model step as a fraction of the linearised time constant.
pub const DT_1D_FRACTION: f64 = 1.0 / 200.0;
/// Default censoring horizon in units of the linearised time constant.
pub const T_MAX_TAU: f64 = 1e4;
/// Bridge-crossing probabilities below `exp(-BRIDGE_CUTOFF)` are treated as 0.
const BRIDGE_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "reduced-1d")]
    Reduced1d,
    #[serde(rename = "full-2d")]
    Full2d,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Reduced1d => "reduced-1d",
            Mode::Full2d => "full-2d",
        }
    }

    pub fn method(self) -> Method {
        match self {
            Mode::Reduced1d => Method::Mc1d,
            Mode::Full2d => Method::Mc2d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathOutcome {
    /// `ttf` is the reported time to failure; `first_passage` the raw
    /// hitting time (equal to `ttf` for the two-node cell).
    Flipped { ttf: f64, first_passage: f64 },
    Censored,
}

impl PathOutcome {
    pub fn ttf(&self) -> Option<f64> {
        match self {
            PathOutcome::Flipped { ttf, .. } => Some(*ttf),
            PathOutcome::Censored => None,
        }
    }
}

/// Everything the reduced equation needs.
#[derive(Debug, Clone)]
pub struct SdeModel1D {
    drift: PiecewiseLinear,
    pub sigma_w: f64,
    pub delta_vv: f64,
    pub tau: f64,
}

impl SdeModel1D {
    /// Model over an extended drift table; the table must reach
    /// `-10 sigma_vv` below the stable point and exactly `delta_vv` above.
    pub fn new(table: &DriftTable, sigma_w: f64) -> Result<Self> {
        if !(sigma_w >= 0.0 && sigma_w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_w must be finite and >= 0, got {sigma_w:e}"
            )));
        }
        let drift = table.interpolant()?;
        let (lo, hi) = drift.range();
        if hi != table.delta_vv {
            return Err(Error::InvalidArgument(
                "drift table must end exactly at delta_vv".into(),
            ));
        }
        let need = -EXTENSION_SIGMAS * sigma_vv(sigma_w, table.tau);
        if lo > need * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "drift table starts at {lo:e} V, must reach {need:e} V (extend it first)"
            )));
        }
        Ok(SdeModel1D {
            drift,
            sigma_w,
            delta_vv: table.delta_vv,
            tau: table.tau,
        })
    }

    /// Ornstein-Uhlenbeck model `h = -vv / tau`.
    pub fn linear(tau: f64, sigma_w: f64, delta_vv: f64) -> Result<Self> {
        let lower = -1.2 * EXTENSION_SIGMAS * sigma_vv(sigma_w, tau);
        let table = DriftTable::from_fn(|v| -v / tau, lower.min(-delta_vv), delta_vv, tau, 16)?;
        SdeModel1D::new(&table, sigma_w)
    }

    pub fn sigma_vv(&self) -> f64 {
        sigma_vv(self.sigma_w, self.tau)
    }

    pub fn drift_at(&self, v: f64) -> Option<f64> {
        self.drift.eval(v)
    }

    pub fn default_dt(&self) -> f64 {
        DT_1D_FRACTION * self.tau
    }

    pub fn default_t_max(&self) -> f64 {
        T_MAX_TAU * self.tau
    }
}

/// One reduced-model path from `vv = 0`.
///
/// Absorption is checked at `delta_vv` after every step, both on the grid
/// value and on the Brownian bridge between consecutive grid values; the
/// hitting time is the end of the step. The reported TTF is twice the
/// hitting time: at the barrier top the state falls either way with equal
/// probability.
pub fn simulate_path_1d<R: Rng + ?Sized>(
    m: &SdeModel1D,
    dt: f64,
    t_max: f64,
    rng: &mut R,
) -> Result<PathOutcome> {
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::InvalidArgument("dt and t_max must be > 0".into()));
    }
    if dt > m.tau / 100.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "reduced-model step {dt:e} s exceeds tau / 100 = {:e} s",
            m.tau / 100.0
        )));
    }
    if m.sigma_w == 0.0 {
        // h(0) = 0 and h < 0 inside: the noiseless walker never moves.
        return Ok(PathOutcome::Censored);
    }
    let max_steps = (t_max / dt).floor() as u64;
    let delta = m.delta_vv;
    let noise = m.sigma_w * dt.sqrt();
    let bridge_scale = 2.0 / (m.sigma_w * m.sigma_w * dt);
    let (lo, hi) = m.drift.range();
    let mut v = 0.0;
    for k in 1..=max_steps {
        let h = m.drift.eval(v).ok_or(Error::Domain { value: v, lo, hi })?;
        let z: f64 = rng.sample(StandardNormal);
        let next = v + h * dt + noise * z;
        let hit = if next >= delta {
            true
        } else {
            let exponent = (delta - v) * (delta - next) * bridge_scale;
            exponent < BRIDGE_CUTOFF && rng.random::<f64>() < (-exponent).exp()
        };
        if hit {
            let t = k as f64 * dt;
            return Ok(PathOutcome::Flipped {
                ttf: 2.0 * t,
                first_passage: t,
            });
        }
        if !next.is_finite() {
            return Err(Error::Domain { value: next, lo, hi });
        }
        v = next;
    }
    Ok(PathOutcome::Censored)
}

/// Euler-Maruyama on both nodes from `start` until the node voltages cross.
///
/// `normals` yields the two standard-normal increments `(z_v2, z_v1)` of a
/// step. The flip is the first step at which the sign of `v1 - v2` differs
/// from its sign at `start` (or reaches zero).
pub(crate) fn integrate_2d(
    p: &CellParams,
    start: StatePoint,
    sigma: f64,
    dt: f64,
    t_max: f64,
    mut normals: impl FnMut() -> (f64, f64),
) -> PathOutcome {
    let above = start.v1 > start.v2;
    let crossed = |s: StatePoint| if above { s.v1 <= s.v2 } else { s.v2 <= s.v1 };
    let max_steps = (t_max / dt).floor() as u64;
    let noise = sigma * dt.sqrt();
    let mut s = start;
    for k in 1..=max_steps {
        let f = drift_field(s, p);
        let (z2, z1) = normals();
        s = StatePoint::new(s.v2 + f[0] * dt + noise * z2, s.v1 + f[1] * dt + noise * z1);
        if crossed(s) {
            let t = k as f64 * dt;
            return PathOutcome::Flipped {
                ttf: t,
                first_passage: t,
            };
        }
    }
    PathOutcome::Censored
}

/// Largest admissible two-node step, `r c / 20`.
pub fn max_dt_2d(p: &CellParams) -> f64 {
    p.rc() / 20.0
}

/// One two-node path from `eq.stable0`, with TTF the first crossing of the
/// two node voltages.
pub fn simulate_path_2d<R: Rng + ?Sized>(
    p: &CellParams,
    eq: &Equilibria,
    dt: f64,
    t_max: f64,
    rng: &mut R,
) -> Result<PathOutcome> {
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::InvalidArgument("dt and t_max must be > 0".into()));
    }
    if dt > max_dt_2d(p) * (1.0 + 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "two-node step {dt:e} s exceeds r c / 20 = {:e} s",
            max_dt_2d(p)
        )));
    }
    let sigma = node_noise_sigma(p);
    if sigma == 0.0 {
        return Ok(PathOutcome::Censored);
    }
    Ok(integrate_2d(p, eq.stable0, sigma, dt, t_max, || {
        let z2: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        (z2, z1)
    }))
}

/// A path simulator usable by [`run_ensemble`].
pub trait PathSimulator: Sync {
    fn mode(&self) -> Mode;
    fn dt(&self) -> f64;
    fn t_max(&self) -> f64;
    fn simulate(&self, rng: &mut PathRng) -> Result<PathOutcome>;
}

#[derive(Debug, Clone)]
pub struct Reduced1d {
    pub model: SdeModel1D,
    pub dt: f64,
    pub t_max: f64,
}

impl Reduced1d {
    /// `dt = tau / 200`, `t_max = 1e4 tau`.
    pub fn with_defaults(model: SdeModel1D) -> Self {
        let dt = model.default_dt();
        let t_max = model.default_t_max();
        Reduced1d { model, dt, t_max }
    }
}

impl PathSimulator for Reduced1d {
    fn mode(&self) -> Mode {
        Mode::Reduced1d
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn t_max(&self) -> f64 {
        self.t_max
    }
    fn simulate(&self, rng: &mut PathRng) -> Result<PathOutcome> {
        simulate_path_1d(&self.model, self.dt, self.t_max, rng)
    }
}

#[derive(Debug, Clone)]
pub struct Full2d {
    pub params: CellParams,
    pub eq: Equilibria,
    pub dt: f64,
    pub t_max: f64,
}

impl PathSimulator for Full2d {
    fn mode(&self) -> Mode {
        Mode::Full2d
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn t_max(&self) -> f64 {
        self.t_max
    }
    fn simulate(&self, rng: &mut PathRng) -> Result<PathOutcome> {
        simulate_path_2d(&self.params, &self.eq, self.dt, self.t_max, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRecord {
    pub index: u64,
    pub outcome: PathOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtfEnsemble {
    /// Per-path outcomes in index order.
    pub paths: Vec<PathRecord>,
    /// Sorted TTF of the flipped paths (s).
    pub samples: Vec<f64>,
    /// Sorted raw first-passage times of the flipped paths (s).
    pub first_passage: Vec<f64>,
    pub n_censored: usize,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl TtfEnsemble {
    fn from_paths(paths: Vec<PathRecord>, dt: f64, t_max: f64, seed: u64, mode: Mode) -> Self {
        let mut samples = Vec::with_capacity(paths.len());
        let mut first_passage = Vec::with_capacity(paths.len());
        let mut n_censored = 0;
        for rec in &paths {
            match rec.outcome {
                PathOutcome::Flipped { ttf, first_passage: fp } => {
                    samples.push(ttf);
                    first_passage.push(fp);
                }
                PathOutcome::Censored => n_censored += 1,
            }
        }
        samples.sort_by(f64::total_cmp);
        first_passage.sort_by(f64::total_cmp);
        TtfEnsemble {
            paths,
            samples,
            first_passage,
            n_censored,
            dt,
            t_max,
            seed,
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Union of two runs of the same simulator over disjoint index ranges.
    pub fn merge(self, other: TtfEnsemble) -> Result<TtfEnsemble> {
        if self.seed != other.seed
            || self.mode != other.mode
            || self.dt != other.dt
            || self.t_max != other.t_max
        {
            return Err(Error::InvalidArgument(
                "can only merge ensembles of the same run configuration".into(),
            ));
        }
        let mut paths = self.paths;
        paths.extend(other.paths);
        paths.sort_by_key(|r| r.index);
        if paths.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(Error::InvalidArgument("overlapping path indices".into()));
        }
        Ok(TtfEnsemble::from_paths(
            paths, self.dt, self.t_max, self.seed, self.mode,
        ))
    }

    /// Write `path_index,ttf_s,censored` to `path` and a one-line JSON
    /// metadata sidecar to `<path>.meta.json`.
    pub fn write_csv(&self, path: &Path, params_hash: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["path_index", "ttf_s", "censored"])?;
        for rec in &self.paths {
            let (ttf, censored) = match rec.outcome {
                PathOutcome::Flipped { ttf, .. } => (format!("{ttf:e}"), "0"),
                PathOutcome::Censored => (String::new(), "1"),
            };
            w.write_record([rec.index.to_string(), ttf, censored.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta_path = sidecar_path(path);
        let meta = serde_json::json!({
            "seed": self.seed,
            "dt": self.dt,
            "t_max": self.t_max,
            "mode": self.mode.as_str(),
            "params_hash": params_hash,
            "n": self.paths.len(),
            "n_censored": self.n_censored,
        });
        let mut f = std::fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        writeln!(f, "{meta}").map_err(|e| Error::io(&meta_path, e))?;
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// `n` independent paths; path `i` uses stream `i` of `base_seed`.
pub fn run_ensemble<S: PathSimulator + ?Sized>(
    sim: &S,
    n: u64,
    base_seed: u64,
) -> Result<TtfEnsemble> {
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble size must be >= 1".into()));
    }
    run_ensemble_range(sim, 0..n, base_seed)
}

/// Paths with indices in `range` only.
pub fn run_ensemble_range<S: PathSimulator + ?Sized>(
    sim: &S,
    range: Range<u64>,
    base_seed: u64,
) -> Result<TtfEnsemble> {
    let results: Vec<(u64, Result<PathOutcome>)> = range
        .into_par_iter()
        .map(|i| {
            let mut rng = path_stream(base_seed, i);
            (i, sim.simulate(&mut rng))
        })
        .collect();
    let mut paths = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (index, r) in results {
        match r {
            Ok(outcome) => paths.push(PathRecord { index, outcome }),
            Err(e) => failures.push((index, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Ensemble { failures });
    }
    Ok(TtfEnsemble::from_paths(
        paths,
        sim.dt(),
        sim.t_max(),
        base_seed,
        sim.mode(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MttfEstimate {
    pub mean: f64,
    /// `mean ± 1.96 sd / sqrt(n)`.
    pub ci95: (f64, f64),
    /// Number of flipped paths entering the mean.
    pub n: usize,
    pub n_censored: usize,
    /// Set when some paths were censored: the mean is then a lower bound.
    /// With every path censored, `mean` is `t_max` and `n` is 0.
    pub censored_warning: bool,
    pub method: Method,
}

impl MttfEstimate {
    pub fn std_error(&self) -> f64 {
        (self.ci95.1 - self.ci95.0) / (2.0 * 1.96)
    }
}

pub fn mttf_stats(e: &TtfEnsemble) -> Result<MttfEstimate> {
    let method = e.mode.method();
    if e.samples.is_empty() {
        if e.n_censored == 0 {
            return Err(Error::EmptyEnsemble);
        }
        return Ok(MttfEstimate {
            mean: e.t_max,
            ci95: (e.t_max, f64::INFINITY),
            n: 0,
            n_censored: e.n_censored,
            censored_warning: true,
            method,
        });
    }
    let n = e.samples.len();
    let mean = e.samples.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let ss: f64 = e.samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / (n as f64).sqrt();
    Ok(MttfEstimate {
        mean,
        ci95: (mean - half, mean + half),
        n,
        n_censored: e.n_censored,
        censored_warning: e.n_censored > 0,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::find_equilibria;
    use crate::drift::{extend_negative, extract_drift, relax_trajectory};
    use crate::projection::make_axis;
    use rand_distr::{Distribution, Exp};

    /// OU mean first-passage time from 0 to `delta`, times two, by composite
    /// Simpson on a fine grid (independent of the library quadrature).
    fn ou_oracle(tau: f64, sigma_vv: f64, delta: f64) -> f64 {
        let upper = delta / (sigma_vv * std::f64::consts::SQRT_2);
        let n = 20_000;
        let h = upper / n as f64;
        let f = |u: f64| (u * u).exp() * (1.0 + libm::erf(u));
        let mut s = f(0.0) + f(upper);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        2.0 * tau * std::f64::consts::PI.sqrt() * s * h / 3.0
    }

    fn ou_model(ratio: f64) -> SdeModel1D {
        let tau = 1e-6;
        let sigma_w = 1.0;
        let svv = sigma_vv(sigma_w, tau);
        SdeModel1D::linear(tau, sigma_w, ratio * svv).unwrap()
    }

    #[test]
    fn oracle_value_for_unit_ratio() {
        let t = ou_oracle(1e-6, 1.0, 1.0);
        assert!((t / 1e-6 - 4.186_813_299).abs() < 1e-6, "{t}");
    }

    #[test]
    fn noiseless_paths_are_censored() {
        let m = SdeModel1D::linear(1e-6, 0.0, 0.01).unwrap();
        let mut rng = path_stream(1, 0);
        assert_eq!(
            simulate_path_1d(&m, 5e-9, 1e-3, &mut rng).unwrap(),
            PathOutcome::Censored
        );
        let p = CellParams::default().with_offset(0.04).with_noise_scale(0.0);
        let eq = find_equilibria(&p).unwrap();
        assert_eq!(
            simulate_path_2d(&p, &eq, p.rc() / 20.0, 1e-6, &mut rng).unwrap(),
            PathOutcome::Censored
        );
    }

    #[test]
    fn same_stream_same_path() {
        let m = ou_model(1.0);
        let a = simulate_path_1d(&m, m.default_dt(), 1.0, &mut path_stream(7, 3)).unwrap();
        let b = simulate_path_1d(&m, m.default_dt(), 1.0, &mut path_stream(7, 3)).unwrap();
        let c = simulate_path_1d(&m, m.default_dt(), 1.0, &mut path_stream(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ou_mean_matches_oracle() {
        let m = ou_model(1.0);
        let sim = Reduced1d::with_defaults(m.clone());
        let e = run_ensemble(&sim, 10_000, 11).unwrap();
        let est = mttf_stats(&e).unwrap();
        let oracle = ou_oracle(m.tau, m.sigma_vv(), m.delta_vv);
        let z = (est.mean - oracle) / est.std_error();
        assert!(z.abs() < 3.0, "mean {} oracle {} z {}", est.mean, oracle, z);
        assert_eq!(e.n_censored, 0);
    }

    #[test]
    fn doubling_is_exact_on_stored_values() {
        let sim = Reduced1d::with_defaults(ou_model(1.5));
        let e = run_ensemble(&sim, 500, 5).unwrap();
        assert_eq!(e.samples.len(), e.first_passage.len());
        for (t, fp) in e.samples.iter().zip(&e.first_passage) {
            assert_eq!(*t, 2.0 * fp);
        }
        let raw_mean = e.first_passage.iter().sum::<f64>() / e.first_passage.len() as f64;
        let est = mttf_stats(&e).unwrap();
        assert!((est.mean - 2.0 * raw_mean).abs() <= 1e-15 * est.mean);
    }

    #[test]
    fn domain_error_when_leaving_the_table() {
        let table = DriftTable::from_fn(|v| -v / 1e-6, -1e-3, 0.05, 1e-6, 20).unwrap();
        // bypass the coverage check to provoke an excursion
        let m = SdeModel1D {
            drift: table.interpolant().unwrap(),
            sigma_w: 50.0,
            delta_vv: 0.05,
            tau: 1e-6,
        };
        let err = simulate_path_1d(&m, 5e-9, 1e-3, &mut path_stream(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Domain { value, .. } if value < -1e-3));
        assert!(simulate_path_1d(&m, 2e-8, 1e-3, &mut path_stream(1, 0)).is_err());
    }

    #[test]
    fn model_requires_extended_table() {
        let table = DriftTable::from_fn(|v| -v / 1e-6, 0.0, 0.05, 1e-6, 20).unwrap();
        assert!(SdeModel1D::new(&table, 1.0).is_err());
        assert!(SdeModel1D::new(&table, 0.0).is_ok());
    }

    #[test]
    fn ensemble_basics_and_merge() {
        let sim = Reduced1d::with_defaults(ou_model(1.0));
        let one = run_ensemble(&sim, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        let full = run_ensemble(&sim, 100, 3).unwrap();
        let a = run_ensemble_range(&sim, 0..40, 3).unwrap();
        let b = run_ensemble_range(&sim, 40..100, 3).unwrap();
        assert_eq!(b.merge(a).unwrap(), full);
        assert!(run_ensemble(&sim, 0, 3).is_err());
        assert!(full.samples.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let sim = Reduced1d::with_defaults(ou_model(1.0));
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&sim, 300, 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn stats_of_constant_and_censored_ensembles() {
        let rec = |i, t: Option<f64>| PathRecord {
            index: i,
            outcome: t.map_or(PathOutcome::Censored, |t| PathOutcome::Flipped {
                ttf: t,
                first_passage: t,
            }),
        };
        let e = TtfEnsemble::from_paths(
            vec![rec(0, Some(2.0)), rec(1, Some(2.0)), rec(2, Some(2.0))],
            0.1,
            10.0,
            0,
            Mode::Full2d,
        );
        let s = mttf_stats(&e).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.ci95, (2.0, 2.0));
        assert!(!s.censored_warning);

        let e = TtfEnsemble::from_paths(vec![rec(0, None), rec(1, None)], 0.1, 10.0, 0, Mode::Full2d);
        let s = mttf_stats(&e).unwrap();
        assert!(s.censored_warning);
        assert_eq!(s.mean, 10.0);
        assert_eq!(s.n_censored, 2);

        let e = TtfEnsemble::from_paths(vec![], 0.1, 10.0, 0, Mode::Full2d);
        assert!(matches!(mttf_stats(&e), Err(Error::EmptyEnsemble)));

        let e = TtfEnsemble::from_paths(vec![rec(0, Some(3.0)), rec(1, None)], 0.1, 10.0, 0, Mode::Full2d);
        let s = mttf_stats(&e).unwrap();
        assert!(s.censored_warning);
        assert_eq!(s.mean, 3.0);
    }

    #[test]
    fn stats_of_exponential_samples() {
        let exp = Exp::new(1.0).unwrap();
        let mut rng = path_stream(42, 0);
        let paths = (0..10_000)
            .map(|i| {
                let t = exp.sample(&mut rng);
                PathRecord {
                    index: i,
                    outcome: PathOutcome::Flipped {
                        ttf: t,
                        first_passage: t,
                    },
                }
            })
            .collect();
        let e = TtfEnsemble::from_paths(paths, 1.0, 1e9, 42, Mode::Reduced1d);
        let s = mttf_stats(&e).unwrap();
        assert!((s.mean - 1.0).abs() < 3.0 * s.std_error());
        assert!(s.ci95.0 <= s.mean && s.mean <= s.ci95.1);
    }

    #[test]
    fn two_node_mirror_symmetry_is_exact() {
        let p = CellParams::default().with_offset(0.042);
        let eq = find_equilibria(&p).unwrap();
        let mirrored = CellParams {
            dv1: p.dv2,
            dv2: p.dv1,
            ..p
        };
        let meq = find_equilibria(&mirrored).unwrap();
        let sigma = node_noise_sigma(&p);
        let dt = p.rc() / 20.0;
        for stream in 0..20 {
            let mut r1 = path_stream(5, stream);
            let mut r2 = path_stream(5, stream);
            let a = integrate_2d(&p, eq.stable0, sigma, dt, 1e-5, || {
                (r1.sample(StandardNormal), r1.sample(StandardNormal))
            });
            let b = integrate_2d(&mirrored, eq.stable0.mirrored(), sigma, dt, 1e-5, || {
                let z2: f64 = r2.sample(StandardNormal);
                let z1: f64 = r2.sample(StandardNormal);
                (z1, z2)
            });
            assert_eq!(a, b);
            assert!(a.ttf().is_some());
        }
        // the mirrored start is the stable1 point of the mirrored cell
        assert!((meq.stable1 - eq.stable0.mirrored()).norm() < 1e-13);
    }

    #[test]
    fn two_node_step_limit() {
        let p = CellParams::default().with_offset(0.04);
        let eq = find_equilibria(&p).unwrap();
        let err = simulate_path_2d(&p, &eq, p.rc() / 10.0, 1e-6, &mut path_stream(0, 0));
        assert!(err.is_err());
    }

    /// Kolmogorov distribution tail `P(K > x)`.
    fn kolmogorov_sf(x: f64) -> f64 {
        if x < 0.2 {
            return 1.0;
        }
        let mut s = 0.0;
        for k in 1..100 {
            let k = k as f64;
            s += (-1f64).powi(k as i32 - 1) * (-2.0 * k * k * x * x).exp();
        }
        (2.0 * s).clamp(0.0, 1.0)
    }

    #[test]
    fn escape_times_have_exponential_tail() {
        let p = CellParams::default().with_offset(0.041);
        let eq = find_equilibria(&p).unwrap();
        let axis = make_axis(&eq).unwrap();
        let traj =
            relax_trajectory(&p, &eq, 1e-3 * eq.delta_vv, p.rc() / 200.0, 1000.0 * p.rc()).unwrap();
        let d = extend_negative(&extract_drift(&traj, &axis).unwrap(), &p, &eq).unwrap();
        let m = SdeModel1D::new(&d, node_noise_sigma(&p)).unwrap();
        let e = run_ensemble(&Reduced1d::with_defaults(m), 1000, 77).unwrap();
        let q20 = e.samples[e.samples.len() / 5];
        let tail: Vec<f64> = e.samples.iter().filter(|&&t| t > q20).map(|t| t - q20).collect();
        let n = tail.len() as f64;
        let mean = tail.iter().sum::<f64>() / n;
        let mut d_stat: f64 = 0.0;
        for (i, t) in tail.iter().enumerate() {
            let cdf = 1.0 - (-t / mean).exp();
            d_stat = d_stat
                .max((cdf - i as f64 / n).abs())
                .max(((i + 1) as f64 / n - cdf).abs());
        }
        let p_value = kolmogorov_sf(d_stat * n.sqrt());
        assert!(p_value > 0.01, "KS D = {d_stat}, p = {p_value}");
    }
}
