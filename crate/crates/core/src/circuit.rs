//! Surrogate cross-coupled inverter cell.
//!
//! Each inverter is a tanh-shaped voltage transfer characteristic with an
//! input-referred series offset. Each output node is an RC node relaxing
//! toward the VTC of the opposite node, so the noiseless dynamics are
//!
//! ```text
//! dv1/dt = (vtc(v2 + dv1) - v1) / (r c)
//! dv2/dt = (vtc(v1 + dv2) - v2) / (r c)
//! ```
//!
//! and each node receives independent Johnson-Nyquist white noise of
//! intensity `sqrt(2 kB T / (r c^2))`.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::projection::{make_axis, ProjectionAxis};

/// Boltzmann constant, J/K (exact SI value).
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Number of intervals of the scan that brackets roots of the composed map.
const SCAN_INTERVALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Supply voltage (V).
    pub vdd: f64,
    /// VTC midpoint (V).
    pub vm: f64,
    /// VTC slope voltage (V); the midpoint gain is `vdd / (2 vs)`.
    pub vs: f64,
    /// Node resistance (Ω).
    pub r: f64,
    /// Node capacitance (F).
    pub c: f64,
    /// Temperature (K).
    pub temp: f64,
    /// Series offset at the input of inverter 1 (drives `v1`), V.
    pub dv1: f64,
    /// Series offset at the input of inverter 2 (drives `v2`), V.
    pub dv2: f64,
    /// Dimensionless multiplier on the node noise intensity.
    pub noise_scale: f64,
}

impl Default for CellParams {
    /// Desk-scale surrogate: 200 mV supply at 300 K with a 50 aF node, which
    /// puts the thermal voltage spread near 9 mV.
    fn default() -> Self {
        CellParams {
            vdd: 0.2,
            vm: 0.1,
            vs: 0.03,
            r: 10e6,
            c: 50e-18,
            temp: 300.0,
            dv1: 0.0,
            dv2: 0.0,
            noise_scale: 1.0,
        }
    }
}

impl CellParams {
    /// Validated constructor; offsets and noise scale start at `0` and `1`.
    pub fn new(vdd: f64, vm: f64, vs: f64, r: f64, c: f64, temp: f64) -> Result<Self> {
        let p = CellParams {
            vdd,
            vm,
            vs,
            r,
            c,
            temp,
            ..CellParams::default()
        };
        p.validate()?;
        Ok(p)
    }

    /// Worst-case offset convention `dv1 = -dv2 = dv`.
    pub fn with_offset(self, dv: f64) -> Self {
        CellParams {
            dv1: dv,
            dv2: -dv,
            ..self
        }
    }

    pub fn with_noise_scale(self, noise_scale: f64) -> Self {
        CellParams {
            noise_scale,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 5] = [
            ("vdd", self.vdd),
            ("vs", self.vs),
            ("r", self.r),
            ("c", self.c),
            ("temp", self.temp),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams {
                    field,
                    reason: format!("must be finite and > 0, got {value:e}"),
                });
            }
        }
        for (field, value) in [("vm", self.vm), ("dv1", self.dv1), ("dv2", self.dv2)] {
            if !value.is_finite() {
                return Err(Error::InvalidParams {
                    field,
                    reason: "must be finite".into(),
                });
            }
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::InvalidParams {
                field: "noise_scale",
                reason: format!("must be finite and >= 0, got {}", self.noise_scale),
            });
        }
        let gain = self.midpoint_gain();
        if gain <= 1.0 {
            return Err(Error::InvalidParams {
                field: "vs",
                reason: format!("midpoint gain vdd/(2 vs) = {gain} must exceed 1 for bistability"),
            });
        }
        Ok(())
    }

    pub fn midpoint_gain(&self) -> f64 {
        self.vdd / (2.0 * self.vs)
    }

    /// Node time constant `r c` (s).
    pub fn rc(&self) -> f64 {
        self.r * self.c
    }

    /// Equilibrium voltage spread of one RC node, `sqrt(kB T / c)` scaled by
    /// `noise_scale`.
    pub fn node_sigma_v(&self) -> f64 {
        self.noise_scale * (BOLTZMANN * self.temp / self.c).sqrt()
    }

    /// Short stable digest of every parameter, used to tag output files.
    pub fn params_hash(&self) -> String {
        let canonical = format!(
            "vdd={:e};vm={:e};vs={:e};r={:e};c={:e};temp={:e};dv1={:e};dv2={:e};noise_scale={:e}",
            self.vdd,
            self.vm,
            self.vs,
            self.r,
            self.c,
            self.temp,
            self.dv1,
            self.dv2,
            self.noise_scale
        );
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A point of the state space `(vOUT2, vOUT1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatePoint {
    pub v2: f64,
    pub v1: f64,
}

impl StatePoint {
    pub const fn new(v2: f64, v1: f64) -> Self {
        StatePoint { v2, v1 }
    }

    pub fn norm(self) -> f64 {
        self.v2.hypot(self.v1)
    }

    /// Reflection about the diagonal `v1 = v2`.
    pub fn mirrored(self) -> Self {
        StatePoint {
            v2: self.v1,
            v1: self.v2,
        }
    }
}

impl Add for StatePoint {
    type Output = StatePoint;
    fn add(self, o: StatePoint) -> StatePoint {
        StatePoint::new(self.v2 + o.v2, self.v1 + o.v1)
    }
}

impl Sub for StatePoint {
    type Output = StatePoint;
    fn sub(self, o: StatePoint) -> StatePoint {
        StatePoint::new(self.v2 - o.v2, self.v1 - o.v1)
    }
}

impl Mul<f64> for StatePoint {
    type Output = StatePoint;
    fn mul(self, k: f64) -> StatePoint {
        StatePoint::new(self.v2 * k, self.v1 * k)
    }
}

/// The three fixed points of a bistable cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibria {
    /// Threatened state (low `v2`, high `v1` under `dv1 = -dv2 > 0`).
    pub stable0: StatePoint,
    pub saddle: StatePoint,
    pub stable1: StatePoint,
    /// Unit vector from `stable0` toward the saddle, `(a, b)` in `(v2, v1)`.
    pub axis: (f64, f64),
    /// Distance between `stable0` and the saddle (V).
    pub delta_vv: f64,
    /// Supply of the cell the points belong to; sets absolute tolerances.
    pub vdd: f64,
}

impl Equilibria {
    pub fn from_points(stable0: StatePoint, saddle: StatePoint, stable1: StatePoint, vdd: f64) -> Self {
        let d = saddle - stable0;
        let delta_vv = d.v2.hypot(d.v1);
        let axis = if delta_vv > 0.0 {
            (d.v2 / delta_vv, d.v1 / delta_vv)
        } else {
            (f64::NAN, f64::NAN)
        };
        Equilibria {
            stable0,
            saddle,
            stable1,
            axis,
            delta_vv,
            vdd,
        }
    }

    pub fn projection_axis(&self) -> Result<ProjectionAxis> {
        make_axis(self)
    }

    pub fn points(&self) -> [StatePoint; 3] {
        [self.stable0, self.saddle, self.stable1]
    }
}

/// Output of one inverter for input `vin` shifted by the series offset `dv`.
pub fn inverter_vtc(vin: f64, p: &CellParams, dv: f64) -> f64 {
    0.5 * p.vdd * (1.0 - ((vin + dv - p.vm) / p.vs).tanh())
}

/// Noiseless vector field `[dv2/dt, dv1/dt]` (V/s).
pub fn drift_field(s: StatePoint, p: &CellParams) -> [f64; 2] {
    let rc = p.rc();
    [
        (inverter_vtc(s.v1, p, p.dv2) - s.v2) / rc,
        (inverter_vtc(s.v2, p, p.dv1) - s.v1) / rc,
    ]
}

/// Per-node white-noise intensity `sqrt(2 kB T / (r c^2))` (V/√s).
pub fn node_noise_sigma(p: &CellParams) -> f64 {
    p.noise_scale * (2.0 * BOLTZMANN * p.temp / (p.r * p.c * p.c)).sqrt()
}

/// Residual of the composed map `x -> vtc2(vtc1(x)) - x`, `x` being `v2`.
pub(crate) fn composed_residual(x: f64, p: &CellParams) -> f64 {
    inverter_vtc(inverter_vtc(x, p, p.dv1), p, p.dv2) - x
}

/// Absolute residual tolerance on equilibria.
pub fn equilibrium_tolerance(p: &CellParams) -> f64 {
    1e-12 * p.vdd
}

/// Locate the three fixed points.
///
/// The scalar map in `v2` is scanned on `[-0.5 vdd, 1.5 vdd]` and every sign
/// change is refined by bisection; grid points where the residual is exactly
/// zero are taken as roots directly.
pub fn find_equilibria(p: &CellParams) -> Result<Equilibria> {
    p.validate()?;
    let roots = composed_map_roots(p)?;
    if roots.len() < 3 {
        return Err(Error::Monostable { found: roots.len() });
    }
    if roots.len() > 3 {
        return Err(Error::Convergence(format!(
            "expected 3 fixed points, found {}",
            roots.len()
        )));
    }
    let tol = equilibrium_tolerance(p);
    let points: Vec<StatePoint> = roots
        .iter()
        .map(|&x| StatePoint::new(x, inverter_vtc(x, p, p.dv1)))
        .collect();
    for pt in &points {
        let f = drift_field(*pt, p);
        let residual = f[0].hypot(f[1]) * p.rc();
        if residual > tol {
            return Err(Error::Convergence(format!(
                "equilibrium residual {residual:e} V exceeds {tol:e} V"
            )));
        }
    }
    let eq = Equilibria::from_points(points[0], points[1], points[2], p.vdd);
    // Rejects the degenerate case where stable0 has merged with the saddle.
    let axis = make_axis(&eq)?;
    if axis.project(eq.stable1) <= eq.delta_vv {
        return Err(Error::Convergence(
            "stable1 does not project beyond the saddle".into(),
        ));
    }
    Ok(eq)
}

fn composed_map_roots(p: &CellParams) -> Result<Vec<f64>> {
    let lo = -0.5 * p.vdd;
    let hi = 1.5 * p.vdd;
    let span = hi - lo;
    let grid = |i: usize| lo + span * (i as f64) / (SCAN_INTERVALS as f64);
    let tol = 1e-14 * p.vdd;

    let mut roots = Vec::new();
    let mut x_prev = grid(0);
    let mut g_prev = composed_residual(x_prev, p);
    if g_prev == 0.0 {
        roots.push(x_prev);
    }
    for i in 1..=SCAN_INTERVALS {
        let x = grid(i);
        let g = composed_residual(x, p);
        if !g.is_finite() {
            return Err(Error::Convergence(format!("non-finite residual at v2 = {x:e}")));
        }
        if g == 0.0 {
            roots.push(x);
        } else if g_prev != 0.0 && (g < 0.0) != (g_prev < 0.0) {
            roots.push(bisect(x_prev, g_prev, x, tol, p)?);
        }
        x_prev = x;
        g_prev = g;
    }
    Ok(roots)
}

fn bisect(mut a: f64, mut ga: f64, mut b: f64, tol: f64, p: &CellParams) -> Result<f64> {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a) <= tol || m == a || m == b {
            return Ok(m);
        }
        let gm = composed_residual(m, p);
        if gm == 0.0 {
            return Ok(m);
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Err(Error::Convergence(format!(
        "bisection did not reach {tol:e} V on [{a:e}, {b:e}]"
    )))
}

/// Smallest offset `dv = dv1 = -dv2 >= 0` at which the cell loses
/// bistability, to within `tol` volts.
pub fn critical_offset(p: &CellParams, tol: f64) -> Result<f64> {
    let bistable = |dv: f64| find_equilibria(&p.with_offset(dv)).is_ok();
    if !bistable(0.0) {
        return Err(Error::Monostable { found: 1 });
    }
    let (mut lo, mut hi) = (0.0, p.vdd);
    if bistable(hi) {
        return Err(Error::Convergence(
            "cell stays bistable up to dv = vdd".into(),
        ));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if bistable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> CellParams {
        CellParams::default()
    }

    /// Independent scalar oracle: plain fixed-point iteration of the composed
    /// map converges to the outer (stable) roots.
    fn iterate_composed(mut x: f64, p: &CellParams) -> f64 {
        for _ in 0..10_000 {
            x = inverter_vtc(inverter_vtc(x, p, p.dv1), p, p.dv2);
        }
        x
    }

    #[test]
    fn vtc_midpoint_and_saturation() {
        let p = desk();
        assert_eq!(inverter_vtc(p.vm, &p, 0.0), 0.1);
        assert!(inverter_vtc(1e3, &p, 0.0).abs() < 1e-15);
        assert!((inverter_vtc(-1e3, &p, 0.0) - p.vdd).abs() < 1e-15);
        // 100 mV * (1 - tanh 1) = 23.8405844 mV
        let v = inverter_vtc(p.vm + p.vs, &p, 0.0);
        assert!((v - 0.023_840_584_404_423_5).abs() < 1e-15, "{v}");
    }

    #[test]
    fn vtc_strictly_decreasing_and_bounded() {
        let p = desk();
        let mut prev = f64::INFINITY;
        for i in 0..=400 {
            let vin = -0.1 + 0.4 * i as f64 / 400.0;
            let v = inverter_vtc(vin, &p, 0.0);
            assert!(v > 0.0 && v < p.vdd);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn drift_vanishes_at_symmetric_midpoint() {
        let p = desk();
        assert_eq!(drift_field(StatePoint::new(0.1, 0.1), &p), [0.0, 0.0]);
    }

    #[test]
    fn drift_at_rail_corner_points_back_inward() {
        let p = CellParams {
            r: 10e6,
            c: 1e-15,
            ..desk()
        };
        let s = StatePoint::new(0.0, p.vdd);
        let f = drift_field(s, &p);
        let rc = 1e-8;
        let expect_v2 = (inverter_vtc(p.vdd, &p, 0.0) - 0.0) / rc;
        let expect_v1 = (inverter_vtc(0.0, &p, 0.0) - p.vdd) / rc;
        assert!((f[0] - expect_v2).abs() <= 1e-9 * expect_v2.abs());
        assert!((f[1] - expect_v1).abs() <= 1e-9 * expect_v1.abs());
        // nearest stable point sits just inside the corner
        assert!(f[0] > 0.0 && f[1] < 0.0);
    }

    #[test]
    fn symmetric_cell_equilibria() {
        let p = desk();
        let eq = find_equilibria(&p).unwrap();
        assert_eq!(eq.saddle, StatePoint::new(0.1, 0.1));
        let m = eq.stable1.mirrored();
        assert!((m.v2 - eq.stable0.v2).abs() < 1e-13 * p.vdd);
        assert!((m.v1 - eq.stable0.v1).abs() < 1e-13 * p.vdd);
        let x_star = iterate_composed(0.0, &p);
        assert!((eq.stable0.v2 - x_star).abs() < 1e-13 * p.vdd);
        assert!((eq.stable0.v1 - (p.vdd - x_star)).abs() < 1e-13 * p.vdd);
    }

    #[test]
    fn offset_cell_equilibria_match_fixed_point_oracle() {
        let p = desk().with_offset(0.03);
        let eq = find_equilibria(&p).unwrap();
        let low = iterate_composed(-0.05, &p);
        let high = iterate_composed(0.25, &p);
        assert!((eq.stable0.v2 - low).abs() < 1e-13);
        assert!((eq.stable1.v2 - high).abs() < 1e-13);
        assert!(eq.stable0.v1 > eq.saddle.v1 && eq.saddle.v1 > eq.stable1.v1);
        for pt in eq.points() {
            assert!(composed_residual(pt.v2, &p).abs() < equilibrium_tolerance(&p));
        }
    }

    #[test]
    fn axis_is_unit_and_points_down_right() {
        let eq = find_equilibria(&desk().with_offset(0.02)).unwrap();
        let (a, b) = eq.axis;
        assert!((a * a + b * b - 1.0).abs() < 1e-12);
        assert!(a > 0.0 && b < 0.0);
    }

    #[test]
    fn large_offset_is_monostable() {
        let p = desk();
        let dv_c = critical_offset(&p, 1e-7).unwrap();
        assert!(dv_c > 0.045 && dv_c < 0.05, "{dv_c}");
        assert!(find_equilibria(&p.with_offset(dv_c - 1e-5)).is_ok());
        assert!(matches!(
            find_equilibria(&p.with_offset(dv_c + 1e-5)),
            Err(Error::Monostable { .. })
        ));
        assert!(matches!(
            find_equilibria(&p.with_offset(0.08)),
            Err(Error::Monostable { found: 1 })
        ));
    }

    #[test]
    fn delta_vv_non_increasing_in_offset() {
        let p = desk();
        let mut prev = f64::INFINITY;
        for i in 0..=45 {
            let eq = find_equilibria(&p.with_offset(i as f64 * 1e-3)).unwrap();
            assert!(eq.delta_vv <= prev);
            prev = eq.delta_vv;
        }
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(CellParams::new(0.2, 0.1, 0.2, 1e7, 5e-17, 300.0).is_err());
        assert!(CellParams::new(-0.2, 0.1, 0.03, 1e7, 5e-17, 300.0).is_err());
        assert!(CellParams::new(0.2, 0.1, 0.03, 1e7, 0.0, 300.0).is_err());
        let bad_noise = desk().with_noise_scale(-1.0);
        assert!(bad_noise.validate().is_err());
    }

    #[test]
    fn noise_sigma_values() {
        let p = CellParams {
            c: 1e-15,
            ..desk()
        };
        let s = node_noise_sigma(&p);
        // 2 * 1.380649e-23 * 300 / (1e7 * 1e-30) = 828.3894 V^2/s
        assert!((s * s - 828.3894).abs() < 1e-9);
        let sigma_vv = (s * s * p.rc() / 2.0).sqrt();
        assert!((sigma_vv - 2.035_177_4e-3).abs() < 1e-9);
        assert_eq!(node_noise_sigma(&p.with_noise_scale(0.0)), 0.0);
        assert!((desk().node_sigma_v() - 9.1016e-3).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn johnson_nyquist_consistency(
                r in 1e3f64..1e9, c in 1e-18f64..1e-12, temp in 1.0f64..500.0, scale in 0.0f64..4.0,
            ) {
                let p = CellParams { r, c, temp, noise_scale: scale, ..CellParams::default() };
                let sw = node_noise_sigma(&p);
                let lhs = sw * sw * p.rc() / 2.0;
                let rhs = scale * scale * BOLTZMANN * temp / c;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(f64::MIN_POSITIVE));
            }

            #[test]
            fn symmetric_swap_maps_equilibria_onto_themselves(vs in 0.015f64..0.06, vm in 0.08f64..0.12) {
                let p = CellParams { vs, vm, ..CellParams::default() };
                if let Ok(eq) = find_equilibria(&p) {
                    let tol = 1e-12 * p.vdd;
                    prop_assert!((eq.stable0.mirrored().v2 - eq.stable1.v2).abs() < tol);
                    prop_assert!((eq.stable0.mirrored().v1 - eq.stable1.v1).abs() < tol);
                    prop_assert!((eq.saddle.v1 - eq.saddle.v2).abs() < tol);
                }
            }
        }
    }
}
