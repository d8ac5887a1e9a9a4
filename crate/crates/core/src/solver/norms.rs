//! Discrete Sobolev norms: instantaneous integer-order norms, running
//! space-time norms, and Fourier-multiplier norms of boundary traces.

use std::collections::VecDeque;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{backward_weights, d1, dtan_with, slab_sum, Field, Grid, TanPlans};

const FOUR_PI2: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Which derivatives enter an integer-order norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// All of `d_t, d_1, d_2, ..., d_d`.
    Full,
    /// Only `d_t, d_2, ..., d_d`.
    Tangential,
}

/// Weighted `L^2` norm squared over the truncated domain.
pub fn l2_sq(grid: &Grid, u: &Field) -> f64 {
    let nt = grid.n_tan_total();
    let nc = u.ncomp;
    slab_sum(grid, |i| {
        let w = grid.weight(i);
        u.data[i * nt * nc..(i + 1) * nt * nc].iter().map(|x| x * x).sum::<f64>() * w
    })
}

/// Multi-indices `(a_t, a_1, a_2, a_3)` with total order `<= m`.
pub fn multi_indices(dim: usize, m: usize, kind: NormKind) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    let m1 = if kind == NormKind::Full { m } else { 0 };
    let m3 = if dim == 3 { m } else { 0 };
    for at in 0..=m {
        for a1 in 0..=m1 {
            for a2 in 0..=m {
                for a3 in 0..=m3 {
                    if at + a1 + a2 + a3 <= m {
                        out.push([at, a1, a2, a3]);
                    }
                }
            }
        }
    }
    out
}

fn apply_spatial(grid: &Grid, u: &Field, a: [usize; 4], plans: &TanPlans) -> Field {
    let mut v = u.clone();
    for _ in 0..a[1] {
        v = d1(grid, &v);
    }
    for _ in 0..a[2] {
        v = dtan_with(grid, &v, 0, plans);
    }
    for _ in 0..a[3] {
        v = dtan_with(grid, &v, 1, plans);
    }
    v
}

fn time_diff(levels: &[&Field], k: usize, dt: f64) -> Result<Field> {
    let w = backward_weights(k, dt);
    if levels.len() < w.len() {
        return Err(Error::InsufficientHistory { needed: w.len(), available: levels.len() });
    }
    let newest = levels.len() - 1;
    let mut out = Field { ncomp: levels[newest].ncomp, data: vec![0.0; levels[newest].data.len()] };
    for (j, wj) in w.iter().enumerate() {
        for (o, x) in out.data.iter_mut().zip(&levels[newest - j].data) {
            *o += wj * x;
        }
    }
    Ok(out)
}

/// `sum_{|alpha| <= m} |D^alpha u|^2` at the newest of `levels` (oldest
/// first); time derivatives by backward differences with step `dt`.
pub fn instant_norm_sq(grid: &Grid, levels: &[&Field], dt: f64, m: usize, kind: NormKind) -> Result<f64> {
    let plans = TanPlans::new(grid.n_tan);
    let mut acc = 0.0;
    let mut by_time: Vec<Option<Field>> = vec![None; m + 1];
    for a in multi_indices(grid.dim, m, kind) {
        if by_time[a[0]].is_none() {
            by_time[a[0]] = Some(time_diff(levels, a[0], dt)?);
        }
        let v = apply_spatial(grid, by_time[a[0]].as_ref().unwrap(), a, &plans);
        acc += l2_sq(grid, &v);
    }
    Ok(acc)
}

/// Instantaneous norm `|||u|||_m` (`Full`) or `|||u|||_{tan,m}` (`Tangential`).
pub fn discrete_norm(grid: &Grid, levels: &[&Field], dt: f64, m: usize, kind: NormKind) -> Result<f64> {
    Ok(instant_norm_sq(grid, levels, dt, m, kind)?.sqrt())
}

/// Running `H^m(Omega_t)` norm: `dt * sum_n |||u(t_n)|||_m^2`, with levels
/// before the first one taken as zero (fields vanishing in the past).
#[derive(Clone, Debug)]
pub struct SpaceTimeNorm {
    pub m: usize,
    dt: f64,
    levels: VecDeque<Field>,
    sum: f64,
}

impl SpaceTimeNorm {
    pub fn new(m: usize, dt: f64) -> Self {
        SpaceTimeNorm { m, dt, levels: VecDeque::new(), sum: 0.0 }
    }

    /// Add one time level.
    pub fn push(&mut self, grid: &Grid, u: Field) -> Result<()> {
        if self.levels.is_empty() {
            for _ in 0..self.m + 1 {
                self.levels.push_back(Field { ncomp: u.ncomp, data: vec![0.0; u.data.len()] });
            }
        }
        self.levels.push_back(u);
        while self.levels.len() > self.m + 2 {
            self.levels.pop_front();
        }
        let refs: Vec<&Field> = self.levels.iter().collect();
        self.sum += self.dt * instant_norm_sq(grid, &refs, self.dt, self.m, NormKind::Full)?;
        Ok(())
    }

    pub fn value(&self) -> f64 {
        self.sum.sqrt()
    }
}

/// Multiplier norm `(sum_k (1 + 4 pi^2 |k|^2)^order |c_k|^2)^{1/2}` of a
/// periodic trace on the unit torus, `c_k` the Fourier coefficients.
pub fn tangential_fractional_norm(grid: &Grid, trace: &[f64], order: f64) -> f64 {
    let (spec, dims) = fft_nd(trace, &tan_dims(grid));
    let nt = grid.n_tan_total() as f64;
    let mut acc = 0.0;
    for (idx, z) in spec.iter().enumerate() {
        let k2 = wavenumber_sq(idx, &dims, &[1.0; 3]);
        acc += (1.0 + FOUR_PI2 * k2).powf(order) * (z / nt).norm_sqr();
    }
    acc.sqrt()
}

fn tan_dims(grid: &Grid) -> Vec<usize> {
    vec![grid.n_tan; grid.dim - 1]
}

/// `sum_j (k_j / L_j)^2` for the flat index `idx` (first dimension fastest).
fn wavenumber_sq(idx: usize, dims: &[usize], lens: &[f64]) -> f64 {
    let mut r = idx;
    let mut acc = 0.0;
    for (a, &n) in dims.iter().enumerate() {
        let k = r % n;
        r /= n;
        let m = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        acc += (m / lens[a]).powi(2);
    }
    acc
}

/// Forward DFT along every axis of a real array (first axis fastest).
fn fft_nd(data: &[f64], dims: &[usize]) -> (Vec<Complex64>, Vec<usize>) {
    let mut buf: Vec<Complex64> = data.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let mut stride = 1;
    for &n in dims {
        let fft = planner.plan_fft_forward(n);
        let block = stride * n;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for b in 0..buf.len() / block {
            for s in 0..stride {
                for k in 0..n {
                    line[k] = buf[b * block + k * stride + s];
                }
                fft.process(&mut line);
                for k in 0..n {
                    buf[b * block + k * stride + s] = line[k];
                }
            }
        }
        stride = block;
    }
    (buf, dims.to_vec())
}

/// Quintic smoothstep cutoff: 1 at `s = 0`, 0 at `s = 1`, flat to second order at both ends.
fn cutoff(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// `H^order(omega_T)` norm of a boundary history (`levels[n]` at `t = n dt`,
/// `levels[0]` at `t = 0`, each `n_tan_total * ncomp` values). The history
/// is continued past `T` by the reflection
/// `u(T + tau) = 6u(T - tau) - 8u(T - 2tau) + 3u(T - 3tau)`, cut off over
/// `T/3`, and the periodic array on `[0, 4T/3)` is measured by the
/// multiplier `(1 + 4 pi^2 |xi|^2)^order`.
pub fn spacetime_fractional_norm(grid: &Grid, levels: &[Vec<f64>], ncomp: usize, dt: f64, order: f64) -> f64 {
    let nlev = levels.len();
    if nlev < 4 {
        return 0.0;
    }
    let n = nlev - 1;
    let ext = (n / 3).max(1);
    let m = n + 1 + ext - 1;
    let nt = grid.n_tan_total();
    let period = m as f64 * dt;
    let mut total = 0.0;
    for c in 0..ncomp {
        // time is the slowest axis
        let mut arr = vec![0.0; m * nt];
        for k in 0..=n {
            for t in 0..nt {
                arr[k * nt + t] = levels[k][t * ncomp + c];
            }
        }
        for j in 1..ext {
            let w = cutoff(j as f64 / ext as f64);
            for t in 0..nt {
                let u = |q: usize| levels[n - q][t * ncomp + c];
                arr[(n + j) * nt + t] = w * (6.0 * u(j) - 8.0 * u(2 * j) + 3.0 * u(3 * j));
            }
        }
        let mut dims = tan_dims(grid);
        dims.push(m);
        let mut lens = vec![1.0; grid.dim - 1];
        lens.push(period);
        let (spec, dims) = fft_nd(&arr, &dims);
        let count = (m * nt) as f64;
        let mut acc = 0.0;
        for (idx, z) in spec.iter().enumerate() {
            let k2 = wavenumber_sq(idx, &dims, &lens);
            acc += (1.0 + FOUR_PI2 * k2).powf(order) * (z / count).norm_sqr();
        }
        total += acc * period;
    }
    total.sqrt()
}
