//! Smooth sources that vanish in the past, and involution-clean initial data.

use serde::{Deserialize, Serialize};

use crate::constitutive::{Layout, MaterialParams};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::interface::BackgroundState;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// `(1 - ((t - center) / width)^2)^4` on `|t - center| < width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeWindow {
    pub center: f64,
    pub width: f64,
}

impl TimeWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || self.center - self.width < 0.0 {
            return Err(Error::InvalidParameter("time window must be positive and start at t >= 0".into()));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - s * s).powi(4)
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            -8.0 * s * (1.0 - s * s).powi(3) / self.width
        }
    }
}

/// Which side(s) an interior source acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Plus,
    Minus,
    Both,
}

impl Side {
    pub fn includes(&self, sign: f64) -> bool {
        match self {
            Side::Plus => sign > 0.0,
            Side::Minus => sign < 0.0,
            Side::Both => true,
        }
    }
}

fn default_power() -> i32 {
    4
}

fn tan_phase(mode: [i32; 2], xt: [f64; 2]) -> f64 {
    TAU * (mode[0] as f64 * xt[0] + mode[1] as f64 * xt[1])
}

/// Interior source `f = a (1 - ((x1 - c)/w)^2)^k cos(2 pi m . x') window(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteriorSource {
    pub side: Side,
    /// One entry per unknown.
    pub amplitude: Vec<f64>,
    pub center: f64,
    pub width: f64,
    #[serde(default = "default_power")]
    pub power: i32,
    #[serde(default)]
    pub mode: [i32; 2],
    pub window: TimeWindow,
}

impl InteriorSource {
    pub fn profile(&self, x1: f64, xt: [f64; 2]) -> f64 {
        let r = (x1 - self.center) / self.width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        (1.0 - r * r).powi(self.power) * tan_phase(self.mode, xt).cos()
    }
}

/// Boundary source `g = a cos(2 pi m . x') window(t)`, `2d + 1` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySource {
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub mode: [i32; 2],
    pub window: TimeWindow,
}

/// All sources of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sources {
    #[serde(default)]
    pub interior: Vec<InteriorSource>,
    #[serde(default)]
    pub boundary: Vec<BoundarySource>,
}

impl Sources {
    pub fn validate(&self, params: &MaterialParams) -> Result<()> {
        let n = params.n_unknowns();
        let m = 2 * params.dim + 1;
        for s in &self.interior {
            s.window.validate()?;
            if s.amplitude.len() != n {
                return Err(Error::InvalidParameter(format!("interior source amplitude needs {n} entries")));
            }
            if !(s.width > 0.0) || s.power < 2 {
                return Err(Error::InvalidParameter("interior source width > 0 and power >= 2 required".into()));
            }
        }
        for s in &self.boundary {
            s.window.validate()?;
            if s.amplitude.len() != m {
                return Err(Error::InvalidParameter(format!("boundary source amplitude needs {m} entries")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.interior.iter().all(|s| s.amplitude.iter().all(|a| *a == 0.0))
            && self.boundary.iter().all(|s| s.amplitude.iter().all(|a| *a == 0.0))
    }

    /// Interior source on side `sign` at time `t` (or its time derivative).
    pub fn interior_field(&self, grid: &Grid, n: usize, sign: f64, t: f64, dt: bool) -> Field {
        let active: Vec<(&InteriorSource, f64)> = self
            .interior
            .iter()
            .filter(|s| s.side.includes(sign))
            .map(|s| (s, if dt { s.window.deriv(t) } else { s.window.value(t) }))
            .filter(|(_, w)| *w != 0.0)
            .collect();
        if active.is_empty() {
            return Field::zeros(grid, n);
        }
        Field::from_fn(grid, n, |x1, xt, o| {
            for (s, w) in &active {
                let p = s.profile(x1, xt) * w;
                for (oc, a) in o.iter_mut().zip(&s.amplitude) {
                    *oc += a * p;
                }
            }
        })
    }

    pub fn has_interior(&self, sign: f64) -> bool {
        self.interior.iter().any(|s| s.side.includes(sign))
    }

    /// Boundary data at time `t`, `n_tan_total * (2d + 1)` values.
    pub fn boundary_values(&self, grid: &Grid, t: f64, dt: bool) -> Vec<f64> {
        let m = 2 * grid.dim + 1;
        let nt = grid.n_tan_total();
        let mut out = vec![0.0; nt * m];
        for s in &self.boundary {
            let w = if dt { s.window.deriv(t) } else { s.window.value(t) };
            if w == 0.0 {
                continue;
            }
            for tt in 0..nt {
                let c = tan_phase(s.mode, grid.xtan(tt)).cos() * w;
                for r in 0..m {
                    out[tt * m + r] += s.amplitude[r] * c;
                }
            }
        }
        out
    }
}

/// Initial data satisfying the linearized involutions at a background:
/// `F_ij = F_jj d_j X_i`, `p = -c^2 rho div X`, `S = 0`, with
/// `X_i = a_i b(x1) cos(2 pi m . x')` and `b = (1 - ((x1 - c)/w)^2)^6`.
/// Derivatives in x1 are taken in the physical direction `sign * x1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanData {
    /// `d` amplitudes of `X`.
    pub x_amplitude: Vec<f64>,
    /// `d` amplitudes of the velocity (same profile).
    #[serde(default)]
    pub v_amplitude: Vec<f64>,
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub mode: [i32; 2],
}

impl CleanData {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.x_amplitude.len() != dim || !(self.v_amplitude.is_empty() || self.v_amplitude.len() == dim) {
            return Err(Error::InvalidParameter(format!("clean data amplitudes need {dim} entries")));
        }
        if !(self.width > 0.0) || self.center - self.width <= 0.0 {
            return Err(Error::InvalidParameter("clean data must be supported away from x1 = 0".into()));
        }
        Ok(())
    }

    fn profile(&self, x1: f64) -> (f64, f64) {
        let r = (x1 - self.center) / self.width;
        if r.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - r * r;
        (q.powi(6), -12.0 * r * q.powi(5) / self.width)
    }

    /// Natural unknowns `V` on side `sign` (equal to the good unknowns at a background).
    pub fn field(&self, grid: &Grid, bg: &BackgroundState, sign: f64, params: &MaterialParams) -> Result<Field> {
        let d = grid.dim;
        let l = Layout::new(d);
        let st = bg.state(sign);
        let (rho, ev) = st.thermo(params)?;
        let fb = st.f;
        let n = l.n();
        Ok(Field::from_fn(grid, n, |x1, xt, o| {
            let (b, db) = self.profile(x1);
            let ph = tan_phase(self.mode, xt);
            let (c, s) = (ph.cos(), ph.sin());
            // d_j of b(x1) cos(phase)
            let mut dx = [0.0; 3];
            dx[0] = sign * db * c;
            for k in 1..d {
                dx[k] = -b * s * TAU * self.mode[k - 1] as f64;
            }
            let mut div = 0.0;
            for i in 0..d {
                let a = self.x_amplitude[i];
                div += a * dx[i];
                for j in 0..d {
                    o[l.f(i, j)] = fb[j][j] * a * dx[j];
                }
                if let Some(va) = self.v_amplitude.get(i) {
                    o[l.v(i)] = va * b * c;
                }
            }
            o[0] = -ev.c2 * rho * div;
            o[l.s()] = 0.0;
        }))
    }
}
