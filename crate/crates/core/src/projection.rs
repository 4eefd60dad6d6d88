//! One-dimensional reaction coordinate along the straight line from the
//! threatened stable point to the saddle.
//!
//! The coordinate is affine: `vv = a (v2 - X0) + b (v1 - Y0)` with `(a, b)`
//! the unit vector toward the saddle, so the stable point sits at `vv = 0`
//! and the saddle at `vv = delta_vv`.

use serde::{Deserialize, Serialize};

use crate::circuit::{Equilibria, StatePoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionAxis {
    pub origin: StatePoint,
    /// Unit direction `(a, b)` in `(v2, v1)` coordinates.
    pub unit: (f64, f64),
    pub delta_vv: f64,
}

/// Axis through `eq.stable0` toward `eq.saddle`.
pub fn make_axis(eq: &Equilibria) -> Result<ProjectionAxis> {
    let d = eq.saddle - eq.stable0;
    let delta_vv = d.v2.hypot(d.v1);
    if !(delta_vv >= 1e-9 * eq.vdd) {
        return Err(Error::DegenerateAxis { delta_vv });
    }
    Ok(ProjectionAxis {
        origin: eq.stable0,
        unit: (d.v2 / delta_vv, d.v1 / delta_vv),
        delta_vv,
    })
}

pub fn project(s: StatePoint, axis: &ProjectionAxis) -> f64 {
    let (a, b) = axis.unit;
    a * (s.v2 - axis.origin.v2) + b * (s.v1 - axis.origin.v1)
}

pub fn embed(vv: f64, axis: &ProjectionAxis) -> StatePoint {
    let (a, b) = axis.unit;
    StatePoint::new(axis.origin.v2 + vv * a, axis.origin.v1 + vv * b)
}

impl ProjectionAxis {
    pub fn project(&self, s: StatePoint) -> f64 {
        project(s, self)
    }

    pub fn embed(&self, vv: f64) -> StatePoint {
        embed(vv, self)
    }

    /// Unit vector orthogonal to the axis.
    pub fn normal(&self) -> (f64, f64) {
        (-self.unit.1, self.unit.0)
    }
}
