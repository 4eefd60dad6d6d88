//! MTTF estimators: the Kish closed form, the Ornstein-Uhlenbeck mean first
//! passage time (Nobile), and the exact 1D first-passage double integral
//! (Siegert) over a tabulated quasi-potential.
//!
//! All three report twice the first-passage time to the barrier top, like the
//! reduced Monte Carlo. The three noise parameters are tied by
//! `sigma_w^2 = 2 sigma_vv^2 / tau`; each result records which two were given.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::drift::{sigma_vv, PotentialTable, EXTENSION_SIGMAS};
use crate::error::{Error, Result};
use crate::quad::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "kish")]
    Kish,
    #[serde(rename = "nobile")]
    Nobile,
    #[serde(rename = "siegert")]
    Siegert,
    #[serde(rename = "mc-1d")]
    Mc1d,
    #[serde(rename = "mc-2d")]
    Mc2d,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Kish,
        Method::Nobile,
        Method::Siegert,
        Method::Mc1d,
        Method::Mc2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kish => "kish",
            Method::Nobile => "nobile",
            Method::Siegert => "siegert",
            Method::Mc1d => "mc-1d",
            Method::Mc2d => "mc-2d",
        }
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Method::Mc1d | Method::Mc2d)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Validation {
                field: "estimators.methods".into(),
                reason: format!(
                    "unknown method {s:?}; valid tags: {}",
                    Method::ALL.map(Method::as_str).join(", ")
                ),
            })
    }
}

/// Which pair of `(sigma_vv, tau, sigma_w)` the caller supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimaryInputs {
    #[serde(rename = "sigma_vv,tau")]
    SigmaVvTau,
    #[serde(rename = "sigma_w,tau")]
    SigmaWTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorInputs {
    pub delta_vv: f64,
    pub sigma_vv: f64,
    pub tau: f64,
    pub sigma_w: f64,
    pub primary: PrimaryInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorFlag {
    /// The exponential left the floating-point range; `mttf` is `+inf`.
    Overflow,
    /// The inner Siegert integrand at the lower cutoff exceeds `1e-8` of its
    /// peak, so the cutoff is too tight.
    Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mttf: f64,
    pub method: Method,
    pub inputs: EstimatorInputs,
    pub flags: Vec<EstimatorFlag>,
}

impl EstimatorResult {
    pub fn has_flag(&self, f: EstimatorFlag) -> bool {
        self.flags.contains(&f)
    }
}

/// Relative tolerance of the Nobile quadrature.
pub const NOBILE_REL_TOL: f64 = 1e-10;
/// Relative level of the inner Siegert integrand at the cutoff that raises
/// [`EstimatorFlag::Truncation`].
pub const TRUNCATION_LEVEL: f64 = 1e-8;
/// Target number of sub-intervals of the Siegert grid over `[y_lo, delta_vv]`.
const SIEGERT_POINTS: f64 = 40_000.0;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {v:e}")))
    }
}

fn sv_inputs(delta_vv: f64, sigma_vv: f64, tau: f64) -> EstimatorInputs {
    EstimatorInputs {
        delta_vv,
        sigma_vv,
        tau,
        sigma_w: sigma_vv * (2.0 / tau).sqrt(),
        primary: PrimaryInputs::SigmaVvTau,
    }
}

/// `1 / ((2/sqrt 3) exp(-delta^2 / (2 sigma^2)) fp)` with `fp = 1 / (2 pi tau)`.
pub fn kish_mttf(delta_vv: f64, sigma_vv: f64, tau: f64) -> Result<EstimatorResult> {
    if !(delta_vv >= 0.0 && delta_vv.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta_vv must be finite and >= 0, got {delta_vv:e}"
        )));
    }
    check_positive("sigma_vv", sigma_vv)?;
    check_positive("tau", tau)?;
    let x = delta_vv / sigma_vv;
    let rate = (2.0 / 3f64.sqrt()) * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI * tau);
    let (mttf, flags) = if rate > 0.0 {
        let m = 1.0 / rate;
        (m, if m.is_finite() { vec![] } else { vec![EstimatorFlag::Overflow] })
    } else {
        (f64::INFINITY, vec![EstimatorFlag::Overflow])
    };
    Ok(EstimatorResult {
        mttf,
        method: Method::Kish,
        inputs: sv_inputs(delta_vv, sigma_vv, tau),
        flags,
    })
}

/// Twice the OU mean first-passage time from 0 to `delta_vv`,
/// `2 tau sqrt(pi) int_0^{delta/(sigma sqrt 2)} e^{u^2} (1 + erf u) du`.
pub fn nobile_mttf(delta_vv: f64, sigma_vv: f64, tau: f64) -> Result<EstimatorResult> {
    check_positive("delta_vv", delta_vv)?;
    check_positive("sigma_vv", sigma_vv)?;
    check_positive("tau", tau)?;
    let upper = delta_vv / (sigma_vv * std::f64::consts::SQRT_2);
    let integral = integrate(
        |u| (u * u).exp() * (1.0 + libm::erf(u)),
        0.0,
        upper,
        NOBILE_REL_TOL,
    )?;
    let mttf = 2.0 * tau * std::f64::consts::PI.sqrt() * integral;
    let flags = if mttf.is_finite() { vec![] } else { vec![EstimatorFlag::Overflow] };
    Ok(EstimatorResult {
        mttf,
        method: Method::Nobile,
        inputs: sv_inputs(delta_vv, sigma_vv, tau),
        flags,
    })
}

/// Twice the exact mean first-passage time of `dvv = h dt + sigma_w dW` from
/// `0` to `delta_vv`, reflecting at `y_lo = -10 sigma_vv`:
///
/// ```text
/// (4 / sigma_w^2) int_0^delta e^{k U(y)} int_{y_lo}^y e^{-k U(z)} dz dy,  k = 2 / sigma_w^2
/// ```
///
/// Both integrals use the trapezoid rule on the table knots refined into
/// sub-intervals no wider than `(delta - y_lo) / 40000`, with `U` evaluated
/// exactly for the piecewise-linear drift. Sums run in the log domain.
pub fn siegert_mttf(u: &PotentialTable, sigma_w: f64, delta_vv: f64) -> Result<EstimatorResult> {
    check_positive("sigma_w", sigma_w)?;
    check_positive("delta_vv", delta_vv)?;
    if (delta_vv - u.delta_vv).abs() > 1e-12 * delta_vv {
        return Err(Error::InvalidArgument(format!(
            "delta_vv {delta_vv:e} does not match the potential table ({:e})",
            u.delta_vv
        )));
    }
    let svv = sigma_vv(sigma_w, u.tau);
    let y_lo = -EXTENSION_SIGMAS * svv;
    let lower = u.vv[0];
    if lower > y_lo * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "potential table starts at {lower:e} V, must reach {y_lo:e} V (extend it first)"
        )));
    }
    let top = *u.vv.last().expect("non-empty table");

    // Grid over [y_lo, top] built from the knots inside it.
    let h_max = (top - y_lo) / SIEGERT_POINTS;
    let mut knots = vec![y_lo];
    knots.extend(u.vv.iter().copied().filter(|&v| v > y_lo && v < top));
    knots.push(top);
    let mut grid = Vec::with_capacity(SIEGERT_POINTS as usize + knots.len());
    for w in knots.windows(2) {
        let m = ((w[1] - w[0]) / h_max).ceil().max(1.0) as usize;
        grid.extend((0..m).map(|j| w[0] + (w[1] - w[0]) * j as f64 / m as f64));
    }
    grid.push(top);

    let k = 2.0 / (sigma_w * sigma_w);
    let ku: Vec<f64> = grid
        .iter()
        .map(|&y| k * u.potential_at(y).expect("grid inside table"))
        .collect();

    // Inner integrand e^{-kU}, scaled by its peak e^{-kU_min}.
    let ku_min = ku.iter().copied().fold(f64::INFINITY, f64::min);
    let inner: Vec<f64> = ku.iter().map(|&x| (ku_min - x).exp()).collect();
    let mut flags = Vec::new();
    if inner[0] > TRUNCATION_LEVEL {
        flags.push(EstimatorFlag::Truncation);
    }

    // ln of the outer integrand kU(y) + ln I(y) - ku_min, for y >= 0.
    let mut cum = 0.0;
    let mut log_outer = Vec::new();
    let mut outer_x = Vec::new();
    for i in 0..grid.len() {
        if i > 0 {
            cum += 0.5 * (inner[i] + inner[i - 1]) * (grid[i] - grid[i - 1]);
        }
        if grid[i] >= 0.0 {
            outer_x.push(grid[i]);
            log_outer.push(ku[i] + cum.ln());
        }
    }
    let peak = log_outer.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for i in 1..outer_x.len() {
        let a = (log_outer[i - 1] - peak).exp();
        let b = (log_outer[i] - peak).exp();
        sum += 0.5 * (a + b) * (outer_x[i] - outer_x[i - 1]);
    }
    let ln_mttf = (2.0 * k * sum).ln() + peak - ku_min;
    let mttf = ln_mttf.exp();
    if !mttf.is_finite() {
        flags.push(EstimatorFlag::Overflow);
    }
    Ok(EstimatorResult {
        mttf,
        method: Method::Siegert,
        inputs: EstimatorInputs {
            delta_vv,
            sigma_vv: svv,
            tau: u.tau,
            sigma_w,
            primary: PrimaryInputs::SigmaWTau,
        },
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{quasi_potential, DriftTable};

    #[test]
    fn kish_reference_value() {
        let r = kish_mttf(4.0, 1.0, 1e-6).unwrap();
        // 1 / (1.1547005 * 3.3546263e-4 * 1.5915494e5)
        assert!((r.mttf - 1.622_057_9e-2).abs() < 1e-9, "{}", r.mttf);
        assert!(r.flags.is_empty());
        assert_eq!(r.method, Method::Kish);
        assert_eq!(r.inputs.delta_vv, 4.0);
        assert_eq!(r.inputs.sigma_vv, 1.0);
        assert_eq!(r.inputs.tau, 1e-6);
    }

    #[test]
    fn kish_prefactor_scaling_and_sensitivity() {
        let tau = 3e-9;
        let r = kish_mttf(0.0, 0.01, tau).unwrap();
        let want = 3f64.sqrt() / 2.0 * 2.0 * std::f64::consts::PI * tau;
        assert!((r.mttf / want - 1.0).abs() < 1e-15);
        let a = kish_mttf(0.03, 0.01, tau).unwrap().mttf;
        let b = kish_mttf(0.03, 0.01, 10.0 * tau).unwrap().mttf;
        assert!((b / a - 10.0).abs() < 1e-12);
        let (d1, d2, s) = (0.02, 0.035, 0.01);
        let m1 = kish_mttf(d1, s, tau).unwrap().mttf;
        let m2 = kish_mttf(d2, s, tau).unwrap().mttf;
        let slope = (m2.ln() - m1.ln()) / ((d2 * d2 - d1 * d1) / (2.0 * s * s));
        assert!((slope - 1.0).abs() < 1e-12, "{slope}");
    }

    #[test]
    fn kish_overflow_is_flagged() {
        let r = kish_mttf(40.0, 1.0, 1e-6).unwrap();
        assert_eq!(r.mttf, f64::INFINITY);
        assert!(r.has_flag(EstimatorFlag::Overflow));
        assert!(kish_mttf(1.0, 0.0, 1.0).is_err());
        assert!(kish_mttf(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn nobile_reference_values() {
        // independent values of 2 tau sqrt(pi) int e^{u^2}(1 + erf u)
        for (ratio, want) in [(1.0, 4.186_813_3), (2.0, 20.857_4), (3.0, 173.86)] {
            let r = nobile_mttf(ratio, 1.0, 1.0).unwrap();
            assert!((r.mttf / want - 1.0).abs() < 1e-4, "{ratio}: {}", r.mttf);
        }
        let small = nobile_mttf(1e-6, 1.0, 1.0).unwrap().mttf;
        assert!(small > 0.0 && small < 1e-5);
        assert!(nobile_mttf(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn nobile_and_kish_differ_by_a_prefactor_only() {
        // For large x = delta/sigma both grow like e^{x^2/2}; the ratio tends
        // to (sqrt 3 / 2) sqrt(pi) x / sqrt 2.
        for x in [5.0, 8.0, 12.0] {
            let k = kish_mttf(x, 1.0, 1e-6).unwrap().mttf;
            let n = nobile_mttf(x, 1.0, 1e-6).unwrap().mttf;
            let asym = 3f64.sqrt() / 2.0 * std::f64::consts::PI.sqrt() * x / std::f64::consts::SQRT_2;
            assert!((k / n / asym - 1.0).abs() < 0.1, "{x}: {} vs {asym}", k / n);
        }
        let r5 = kish_mttf(5.0, 1.0, 1.0).unwrap().mttf / nobile_mttf(5.0, 1.0, 1.0).unwrap().mttf;
        assert!(r5 > 3.0 && r5 < 6.0, "{r5}");
    }

    #[test]
    fn sigma_w_echo_is_consistent() {
        let r = nobile_mttf(0.02, 0.005, 2e-9).unwrap();
        let i = r.inputs;
        assert!((i.sigma_w * i.sigma_w - 2.0 * i.sigma_vv * i.sigma_vv / i.tau).abs() < 1e-9 * i.sigma_w * i.sigma_w);
        assert_eq!(i.primary, PrimaryInputs::SigmaVvTau);
    }

    fn ou_potential(tau: f64, sigma_w: f64, ratio: f64) -> (PotentialTable, f64) {
        let svv = sigma_vv(sigma_w, tau);
        let delta = ratio * svv;
        let d = DriftTable::from_fn(|v| -v / tau, -11.0 * svv, delta, tau, 2000).unwrap();
        (quasi_potential(&d), delta)
    }

    #[test]
    fn siegert_on_parabola_matches_nobile() {
        let (tau, sigma_w) = (1.5e-9, 0.3);
        for ratio in [1.0, 2.0, 3.0, 4.5] {
            let (u, delta) = ou_potential(tau, sigma_w, ratio);
            let s = siegert_mttf(&u, sigma_w, delta).unwrap();
            let n = nobile_mttf(delta, sigma_vv(sigma_w, tau), tau).unwrap();
            assert!((s.mttf / n.mttf - 1.0).abs() < 5e-3, "{ratio}: {} vs {}", s.mttf, n.mttf);
            assert!(s.flags.is_empty());
            assert_eq!(s.inputs.primary, PrimaryInputs::SigmaWTau);
        }
    }

    #[test]
    fn siegert_flat_potential_is_exact() {
        let (tau, sigma_w, delta) = (1e-9, 0.2, 0.01);
        let y_lo = -EXTENSION_SIGMAS * sigma_vv(sigma_w, tau);
        let d = DriftTable::from_fn(|_| 0.0, y_lo * 1.5, delta, tau, 50).unwrap();
        let r = siegert_mttf(&quasi_potential(&d), sigma_w, delta).unwrap();
        let want = 2.0 * (delta * delta + 2.0 * y_lo.abs() * delta) / (sigma_w * sigma_w);
        assert!((r.mttf / want - 1.0).abs() < 1e-12, "{} vs {want}", r.mttf);
        // with no confinement the cutoff carries full weight
        assert!(r.has_flag(EstimatorFlag::Truncation));
    }

    #[test]
    fn siegert_preconditions() {
        let (tau, sigma_w) = (1e-9, 0.2);
        let svv = sigma_vv(sigma_w, tau);
        let d = DriftTable::from_fn(|v| -v / tau, -5.0 * svv, 3.0 * svv, tau, 100).unwrap();
        let u = quasi_potential(&d);
        assert!(siegert_mttf(&u, sigma_w, 3.0 * svv).is_err());
        let (u, delta) = ou_potential(tau, sigma_w, 2.0);
        assert!(siegert_mttf(&u, 0.0, delta).is_err());
        assert!(siegert_mttf(&u, sigma_w, 1.01 * delta).is_err());
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        let err = "kramers2".parse::<Method>().unwrap_err().to_string();
        for m in Method::ALL {
            assert!(err.contains(m.as_str()), "{err}");
        }
    }
}
