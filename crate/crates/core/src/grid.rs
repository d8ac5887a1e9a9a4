//! Structured grid on the truncated half-space `[0, X_max] x T^{d-1}` and the
//! difference operators shared by the straightening, linearized and solver
//! modules.
//!
//! Nodes are stored x1-major: `node = i * n_tan_total + t` with the tangential
//! index `t = t2 + n_tan * t3` (x2 fastest) and components innermost.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How tangential derivatives are taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TanDeriv {
    /// Fourier differentiation, Nyquist mode zeroed.
    #[default]
    Spectral,
    /// Second-order centered periodic differences.
    Central,
}

/// Uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    /// Number of cells in x1; nodes are `0..=n1`.
    pub n1: usize,
    pub x_max: f64,
    /// Nodes per tangential direction.
    pub n_tan: usize,
    #[serde(default)]
    pub tan_deriv: TanDeriv,
}

impl Grid {
    pub fn new(dim: usize, n1: usize, x_max: f64, n_tan: usize) -> Result<Self> {
        let g = Grid { dim, n1, x_max, n_tan, tan_deriv: TanDeriv::Spectral };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        if self.n1 < 4 {
            return Err(Error::InvalidParameter("n1 must be at least 4".into()));
        }
        if self.n_tan < 2 || self.n_tan % 2 != 0 {
            return Err(Error::InvalidParameter(format!("n_tan must be even and >= 2, got {}", self.n_tan)));
        }
        if !(self.x_max > 0.0) {
            return Err(Error::InvalidParameter("x_max must be positive".into()));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.x_max / self.n1 as f64
    }

    pub fn h_tan(&self) -> f64 {
        1.0 / self.n_tan as f64
    }

    pub fn n1_nodes(&self) -> usize {
        self.n1 + 1
    }

    pub fn n_tan_total(&self) -> usize {
        self.n_tan.pow(self.dim as u32 - 1)
    }

    pub fn npts(&self) -> usize {
        self.n1_nodes() * self.n_tan_total()
    }

    pub fn node(&self, i: usize, t: usize) -> usize {
        i * self.n_tan_total() + t
    }

    pub fn x1(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    /// Tangential coordinates `(x2, x3)` of tangential index `t`.
    pub fn xtan(&self, t: usize) -> [f64; 2] {
        let h = self.h_tan();
        [(t % self.n_tan) as f64 * h, (t / self.n_tan) as f64 * h]
    }

    /// Trapezoid weight in x1 times the tangential cell measure.
    pub fn weight(&self, i: usize) -> f64 {
        let w1 = if i == 0 || i == self.n1 { 0.5 * self.h() } else { self.h() };
        w1 / self.n_tan_total() as f64
    }

    /// Largest resolved tangential wavenumber `2 pi (n_tan/2 - 1)` (spectral)
    /// or `1/h_tan` equivalent for central differences.
    pub fn tan_wavenumber(&self) -> f64 {
        match self.tan_deriv {
            TanDeriv::Spectral => 2.0 * std::f64::consts::PI * ((self.n_tan / 2) as f64 - 1.0).max(0.0),
            TanDeriv::Central => 1.0 / self.h_tan(),
        }
    }
}

/// Multi-component grid function.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub ncomp: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        Field { ncomp, data: vec![0.0; grid.npts() * ncomp] }
    }

    /// Sample `f(x1, xtan, out)` at every node.
    pub fn from_fn<F>(grid: &Grid, ncomp: usize, f: F) -> Self
    where
        F: Fn(f64, [f64; 2], &mut [f64]) + Sync,
    {
        let nt = grid.n_tan_total();
        let mut data = vec![0.0; grid.npts() * ncomp];
        data.par_chunks_mut(nt * ncomp).enumerate().for_each(|(i, slab)| {
            let x1 = grid.x1(i);
            for t in 0..nt {
                f(x1, grid.xtan(t), &mut slab[t * ncomp..(t + 1) * ncomp]);
            }
        });
        Field { ncomp, data }
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.data[node * self.ncomp..(node + 1) * self.ncomp]
    }

    pub fn at_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.ncomp..(node + 1) * self.ncomp]
    }

    pub fn get(&self, node: usize, c: usize) -> f64 {
        self.data[node * self.ncomp + c]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    /// Component `c` as a single-component field.
    pub fn component(&self, c: usize) -> Field {
        Field { ncomp: 1, data: self.data.iter().skip(c).step_by(self.ncomp).copied().collect() }
    }

    /// Linear combination `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Field {
        Field { ncomp: self.ncomp, data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect() }
    }

    /// Values on the slab `x1 = x1(i)`.
    pub fn slab(&self, grid: &Grid, i: usize) -> &[f64] {
        let w = grid.n_tan_total() * self.ncomp;
        &self.data[i * w..(i + 1) * w]
    }
}

/// `du/dx1`: second-order centered inside, second-order one-sided at both ends.
pub fn d1(grid: &Grid, u: &Field) -> Field {
    let h = grid.h();
    let n = grid.n1;
    let w = grid.n_tan_total() * u.ncomp;
    let mut out = vec![0.0; u.data.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(i, o)| {
        let s = |k: usize| &u.data[k * w..(k + 1) * w];
        if i == 0 {
            let (a, b, c) = (s(0), s(1), s(2));
            for q in 0..w {
                o[q] = (-3.0 * a[q] + 4.0 * b[q] - c[q]) / (2.0 * h);
            }
        } else if i == n {
            let (a, b, c) = (s(n), s(n - 1), s(n - 2));
            for q in 0..w {
                o[q] = (3.0 * a[q] - 4.0 * b[q] + c[q]) / (2.0 * h);
            }
        } else {
            let (a, c) = (s(i - 1), s(i + 1));
            for q in 0..w {
                o[q] = (c[q] - a[q]) / (2.0 * h);
            }
        }
    });
    Field { ncomp: u.ncomp, data: out }
}

/// Cached FFT plans for tangential lines.
#[derive(Clone)]
pub struct TanPlans {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl TanPlans {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        TanPlans { n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    /// Spectral derivative of one periodic line on `[0, 1)`, in place.
    pub fn diff_line(&self, line: &mut [Complex64], order: u32) {
        let n = self.n;
        self.fwd.process(line);
        let tau = 2.0 * std::f64::consts::PI;
        for (k, z) in line.iter_mut().enumerate() {
            let m = if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
            if n % 2 == 0 && k == n / 2 {
                *z = Complex64::new(0.0, 0.0);
                continue;
            }
            let ik = Complex64::new(0.0, tau * m as f64);
            *z *= ik.powu(order) / n as f64;
        }
        self.inv.process(line);
    }
}

/// Tangential derivative in direction `dir` (0 for x2, 1 for x3).
pub fn dtan(grid: &Grid, u: &Field, dir: usize) -> Field {
    let plans = TanPlans::new(grid.n_tan);
    dtan_with(grid, u, dir, &plans)
}

/// Tangential derivative using cached plans.
pub fn dtan_with(grid: &Grid, u: &Field, dir: usize, plans: &TanPlans) -> Field {
    let nt = grid.n_tan_total();
    let nc = u.ncomp;
    let m = grid.n_tan;
    let w = nt * nc;
    let stride = if dir == 0 { 1 } else { m };
    let nlines = nt / m;
    let mut out = vec![0.0; u.data.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(i, o)| {
        let slab = &u.data[i * w..(i + 1) * w];
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for l in 0..nlines {
            let base = if dir == 0 { l * m } else { l };
            for c in 0..nc {
                match grid.tan_deriv {
                    TanDeriv::Spectral => {
                        for k in 0..m {
                            line[k] = Complex64::new(slab[(base + k * stride) * nc + c], 0.0);
                        }
                        plans.diff_line(&mut line, 1);
                        for k in 0..m {
                            o[(base + k * stride) * nc + c] = line[k].re;
                        }
                    }
                    TanDeriv::Central => {
                        let h = grid.h_tan();
                        for k in 0..m {
                            let kp = (k + 1) % m;
                            let km = (k + m - 1) % m;
                            o[(base + k * stride) * nc + c] =
                                (slab[(base + kp * stride) * nc + c] - slab[(base + km * stride) * nc + c]) / (2.0 * h);
                        }
                    }
                }
            }
        }
    });
    Field { ncomp: nc, data: out }
}

/// Tangential derivative of a single periodic tangential slab (`n_tan_total * ncomp`).
pub fn dtan_slab(grid: &Grid, slab: &[f64], ncomp: usize, dir: usize) -> Vec<f64> {
    let g1 = Grid { n1: 0, ..grid.clone() };
    let u = Field { ncomp, data: slab.to_vec() };
    dtan(&g1, &u, dir).data
}

/// Derivatives of a field at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Jets {
    pub val: Field,
    pub dt: Field,
    pub d1: Field,
    /// `dtan[k]` is the derivative in `x_{k+2}`.
    pub dtan: Vec<Field>,
}

impl Jets {
    /// Spatial derivatives by the grid stencils, `dt` supplied.
    pub fn from_field(grid: &Grid, val: Field, dt: Field) -> Self {
        let d1f = d1(grid, &val);
        let plans = TanPlans::new(grid.n_tan);
        let dtan = (0..grid.dim - 1).map(|k| dtan_with(grid, &val, k, &plans)).collect();
        Jets { val, dt, d1: d1f, dtan }
    }

    /// Sample `f(t, x1, xtan, out)` at `t - tau, t, t + tau` and difference in time.
    pub fn from_fn<F>(grid: &Grid, ncomp: usize, t: f64, tau: f64, f: F) -> Self
    where
        F: Fn(f64, f64, [f64; 2], &mut [f64]) + Sync,
    {
        let val = Field::from_fn(grid, ncomp, |x1, xt, o| f(t, x1, xt, o));
        let fp = Field::from_fn(grid, ncomp, |x1, xt, o| f(t + tau, x1, xt, o));
        let fm = Field::from_fn(grid, ncomp, |x1, xt, o| f(t - tau, x1, xt, o));
        let dt = fp.axpby(0.5 / tau, &fm, -0.5 / tau);
        Jets::from_field(grid, val, dt)
    }

    /// Constant-in-time jets.
    pub fn steady(grid: &Grid, val: Field) -> Self {
        let dt = Field { ncomp: val.ncomp, data: vec![0.0; val.data.len()] };
        Jets::from_field(grid, val, dt)
    }
}

/// Second-order backward-difference weights for the `k`-th time derivative
/// on `k + 2` equally spaced levels `t_n, t_{n-1}, ...` (Fornberg).
pub fn backward_weights(k: usize, dt: f64) -> Vec<f64> {
    if k == 0 {
        return vec![1.0];
    }
    let npts = k + 2;
    // nodes 0, -1, -2, ... in units of dt
    let x: Vec<f64> = (0..npts).map(|j| -(j as f64)).collect();
    let w = fornberg(0.0, &x, k);
    w.iter().map(|c| c / dt.powi(k as i32)).collect()
}

/// Finite-difference weights for the `m`-th derivative at `z` on nodes `x`.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|r| r[m]).collect()
}

/// Deterministic sum over slabs: per-slab partial sums in parallel, then a
/// sequential fold in slab order.
pub fn slab_sum<F>(grid: &Grid, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts: Vec<f64> = (0..grid.n1_nodes()).into_par_iter().map(f).collect();
    parts.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn d1_exact_on_quadratics() {
        let g = Grid::new(2, 16, 2.0, 4).unwrap();
        let u = Field::from_fn(&g, 1, |x, _, o| o[0] = 3.0 * x * x - x + 2.0);
        let du = d1(&g, &u);
        for i in 0..=16 {
            let x = g.x1(i);
            assert!((du.get(g.node(i, 1), 0) - (6.0 * x - 1.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn spectral_exact_on_modes() {
        let g = Grid::new(3, 4, 1.0, 8).unwrap();
        let u = Field::from_fn(&g, 2, |_, xt, o| {
            o[0] = (2.0 * PI * xt[0]).sin() * (4.0 * PI * xt[1]).cos();
            o[1] = (2.0 * PI * (xt[0] + xt[1])).cos();
        });
        let d2 = dtan(&g, &u, 0);
        let d3 = dtan(&g, &u, 1);
        for t in 0..g.n_tan_total() {
            let xt = g.xtan(t);
            let n = g.node(2, t);
            let e2 = 2.0 * PI * (2.0 * PI * xt[0]).cos() * (4.0 * PI * xt[1]).cos();
            let e3 = -4.0 * PI * (2.0 * PI * xt[0]).sin() * (4.0 * PI * xt[1]).sin();
            assert!((d2.get(n, 0) - e2).abs() < 1e-12);
            assert!((d3.get(n, 0) - e3).abs() < 1e-12);
            assert!((d3.get(n, 1) + 2.0 * PI * (2.0 * PI * (xt[0] + xt[1])).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_weights_second_order() {
        let w = backward_weights(1, 1.0);
        assert!((w[0] - 1.5).abs() < 1e-14 && (w[1] + 2.0).abs() < 1e-14 && (w[2] - 0.5).abs() < 1e-14);
        let w2 = backward_weights(2, 1.0);
        assert_eq!(w2.len(), 4);
        assert!((w2[0] - 2.0).abs() < 1e-13 && (w2[1] + 5.0).abs() < 1e-13);
    }
}
