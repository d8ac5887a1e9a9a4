//! Numerical probes: trace inequalities on the truncated half-space and
//! refinement behaviour of the source-to-solution ratio.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constitutive::MaterialParams;
use crate::error::{Error, Result};
use crate::grid::{slab_sum, Field, Grid};
use crate::interface::BackgroundState;
use crate::linearized::{BasicState, BumpSpec};

use super::norms::{instant_norm_sq, tangential_fractional_norm, NormKind};
use super::sources::Sources;
use super::{Diagnostics, RunSetup, Solver, TimeSpec};

const TAU: f64 = 2.0 * PI;

/// `u = sum_k (a_k cos + b_k sin)(2 pi k . x') (1 - x1/L)^4_+ (alpha + beta x1)`.
#[derive(Clone, Debug)]
struct BandLimited {
    modes: Vec<([i32; 2], f64, f64)>,
    len: f64,
    alpha: f64,
    beta: f64,
}

impl BandLimited {
    fn random(rng: &mut ChaCha8Rng, dim: usize, kmax: i32, len: f64) -> Self {
        let nm = rng.gen_range(1..=4);
        let modes = (0..nm)
            .map(|_| {
                let k2 = rng.gen_range(-kmax..=kmax);
                let k3 = if dim == 3 { rng.gen_range(-kmax..=kmax) } else { 0 };
                ([k2, k3], rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
            .collect();
        BandLimited { modes, len, alpha: rng.gen_range(-1.0..1.0), beta: rng.gen_range(-1.0..1.0) }
    }

    fn normal(&self, x1: f64) -> (f64, f64) {
        let s = 1.0 - x1 / self.len;
        if s <= 0.0 {
            return (0.0, 0.0);
        }
        let lin = self.alpha + self.beta * x1;
        (s.powi(4) * lin, -4.0 * s.powi(3) / self.len * lin + s.powi(4) * self.beta)
    }

    /// Value, `d_1`, `d_2`, `d_3` at a point.
    fn eval(&self, x1: f64, xt: [f64; 2]) -> [f64; 4] {
        let (g, dg) = self.normal(x1);
        let mut out = [0.0; 4];
        for (k, a, b) in &self.modes {
            let th = TAU * (k[0] as f64 * xt[0] + k[1] as f64 * xt[1]);
            let (c, s) = (th.cos(), th.sin());
            let e = a * c + b * s;
            let de = -a * s + b * c;
            out[0] += e * g;
            out[1] += e * dg;
            out[2] += TAU * k[0] as f64 * de * g;
            out[3] += TAU * k[1] as f64 * de * g;
        }
        out
    }

    fn sample(&self, grid: &Grid) -> Field {
        Field::from_fn(grid, 4, |x1, xt, o| o.copy_from_slice(&self.eval(x1, xt)))
    }
}

fn h1_sq(grid: &Grid, u: &Field) -> f64 {
    let nt = grid.n_tan_total();
    slab_sum(grid, |i| {
        let mut acc = 0.0;
        for t in 0..nt {
            acc += u.at(grid.node(i, t)).iter().map(|x| x * x).sum::<f64>();
        }
        acc * grid.weight(i)
    })
}

/// Outcome of the trace-inequality probe.
#[derive(Clone, Debug, Serialize)]
pub struct TraceReport {
    pub samples: usize,
    pub slack: f64,
    pub violations_est1: usize,
    pub violations_est2: usize,
    /// Largest `lhs / rhs` seen.
    pub max_ratio_est1: f64,
    pub max_ratio_est2: f64,
}

/// Check, on random band-limited `H^1` fields `u` vanishing near `x1 = X_max`,
/// `sum (1 + 4 pi^2 |k|^2)^{1/2} |w_k|^2 <= |u|^2_{H^1}` for the trace `w`,
/// and `|int u_1 d_j u_2(0)| <= |u_1|_{H^1} |u_2|_{H^1}`.
pub fn trace_inequality_probe(grid: &Grid, samples: usize, seed: u64) -> Result<TraceReport> {
    grid.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kmax = (grid.n_tan as i32 / 4).max(1);
    let slack = 1.0 + 10.0 * grid.h();
    let nt = grid.n_tan_total();
    let cell = grid.h_tan().powi(grid.dim as i32 - 1);
    let mut rep = TraceReport {
        samples,
        slack,
        violations_est1: 0,
        violations_est2: 0,
        max_ratio_est1: 0.0,
        max_ratio_est2: 0.0,
    };
    for _ in 0..samples {
        let len = rng.gen_range(0.3..=1.0) * grid.x_max;
        let u1 = BandLimited::random(&mut rng, grid.dim, kmax, len).sample(grid);
        let len = rng.gen_range(0.3..=1.0) * grid.x_max;
        let u2 = BandLimited::random(&mut rng, grid.dim, kmax, len).sample(grid);
        let n1 = h1_sq(grid, &u1);
        let n2 = h1_sq(grid, &u2);
        let trace: Vec<f64> = (0..nt).map(|t| u1.get(t, 0)).collect();
        let lhs1 = tangential_fractional_norm(grid, &trace, 0.5).powi(2);
        let r1 = lhs1 / n1;
        rep.max_ratio_est1 = rep.max_ratio_est1.max(r1);
        if lhs1 > n1 * slack {
            rep.violations_est1 += 1;
        }
        for j in 0..grid.dim - 1 {
            let lhs2 = ((0..nt).map(|t| u1.get(t, 0) * u2.get(t, 2 + j)).sum::<f64>() * cell).abs();
            let rhs2 = (n1 * n2).sqrt();
            rep.max_ratio_est2 = rep.max_ratio_est2.max(lhs2 / rhs2);
            if lhs2 > rhs2 * slack {
                rep.violations_est2 += 1;
            }
        }
    }
    Ok(rep)
}

/// One grid of a tame-estimate family.
#[derive(Clone, Debug, Serialize)]
pub struct TameEntry {
    pub n1: usize,
    pub n_tan: usize,
    pub steps: usize,
    pub vdot: f64,
    pub psi: f64,
    pub f: f64,
    pub g: f64,
    /// Right-hand side used for the ratio.
    pub rhs: f64,
    pub ratio: f64,
}

/// Ratios over a refinement family and the plateau verdict.
#[derive(Clone, Debug, Serialize)]
pub struct TameReport {
    pub norm_order: usize,
    pub entries: Vec<TameEntry>,
    /// `|r_last - r_prev| / r_prev`.
    pub last_change: f64,
    pub plateau: bool,
}

/// Inputs of the tame probe.
#[derive(Clone, Debug)]
pub struct TameSpec {
    pub background: BackgroundState,
    pub params: MaterialParams,
    pub bump: Option<BumpSpec>,
    pub sources: Sources,
    pub time: TimeSpec,
    pub dim: usize,
    pub x_max: f64,
    /// `(n1, n_tan)` per grid, coarse to fine.
    pub grids: Vec<(usize, usize)>,
    pub norm_order: usize,
}

/// Run the solver on each grid and compute
/// `(|Vdot|_{H^s} + |psi|_{H^{s+1/2}}) / rhs`, where `rhs = |f|_{H^s} + |g|_{H^{s+1/2}}`
/// for `s = 1`, and for `s >= 3` additionally
/// `(|f|_{H^3} + |g|_{H^{7/2}}) |V_basic - V_background|_{H^{s+2}}`.
pub fn tame_estimate_probe(spec: &TameSpec) -> Result<TameReport> {
    if spec.sources.is_zero() {
        return Err(Error::InvalidParameter("tame probe needs nonzero sources".into()));
    }
    if spec.grids.len() < 2 {
        return Err(Error::InvalidParameter("tame probe needs at least two grids".into()));
    }
    let entries = spec.grids.iter().map(|&(n1, n_tan)| tame_entry(spec, n1, n_tan)).collect::<Result<Vec<_>>>()?;
    let k = entries.len();
    let (a, b) = (entries[k - 2].ratio, entries[k - 1].ratio);
    let last_change = (b - a).abs() / a.abs();
    Ok(TameReport { norm_order: spec.norm_order, entries, last_change, plateau: last_change <= 0.2 && b.is_finite() })
}

/// Ratio on one grid of the family.
pub fn tame_entry(spec: &TameSpec, n1: usize, n_tan: usize) -> Result<TameEntry> {
    let s = spec.norm_order;
    let grid = Grid::new(spec.dim, n1, spec.x_max, n_tan)?;
    let basic = match &spec.bump {
        Some(b) => BasicState::perturbed(&grid, &spec.background, b, &spec.params)?,
        None => BasicState::background(&grid, &spec.background, &spec.params)?,
    };
    let coeff = if s >= 3 { coefficient_norm(&grid, &basic, &spec.background, s + 2)? } else { 0.0 };
    let run = |order: usize| -> Result<super::RunSummary> {
        let setup = RunSetup {
            basic: basic.clone(),
            background: spec.background.clone(),
            sources: spec.sources.clone(),
            initial: None,
            time: spec.time.clone(),
            diagnostics: Diagnostics { norm_order: order, ..Diagnostics::default() },
        };
        Ok(Solver::new(setup)?.run()?.summary)
    };
    let main = run(s)?;
    let mut rhs = main.f_norm + main.g_norm;
    if s >= 3 {
        let low = if s == 3 { main.clone() } else { run(3)? };
        rhs += (low.f_norm + low.g_norm) * coeff;
    }
    Ok(TameEntry {
        n1,
        n_tan,
        steps: main.steps,
        vdot: main.vdot_norm,
        psi: main.psi_norm,
        f: main.f_norm,
        g: main.g_norm,
        rhs,
        ratio: (main.vdot_norm + main.psi_norm) / rhs,
    })
}

/// `|V_basic - V_background|_{H^m}` over `[0, T]` per unit time (static states).
fn coefficient_norm(grid: &Grid, basic: &BasicState, bg: &BackgroundState, m: usize) -> Result<f64> {
    let mut acc = 0.0;
    for sign in [1.0, -1.0] {
        let side = basic.side(sign);
        let base = bg.state(sign).to_vec();
        let mut pert = side.jets.val.clone();
        for node in 0..grid.npts() {
            for (x, b) in pert.at_mut(node).iter_mut().zip(&base) {
                *x -= b;
            }
        }
        let levels: Vec<&Field> = vec![&pert; m + 2];
        acc += instant_norm_sq(grid, &levels, 1.0, m, NormKind::Full)?;
    }
    Ok(acc.sqrt())
}

/// The `[F_11]` family: ratios for backgrounds with `[F_11] = q F_11^+`.
#[derive(Clone, Debug, Serialize)]
pub struct JumpFamilyReport {
    pub fractions: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `max / min` of the ratios.
    pub band: f64,
}

/// Build `BackgroundState`s with `[F_11] = q F_11^+` and run the finest grid of
/// `spec` on each.
pub fn jump_family_probe(
    spec: &TameSpec,
    f_plus: [f64; 3],
    s_plus: f64,
    fractions: &[f64],
) -> Result<JumpFamilyReport> {
    let mut ratios = Vec::new();
    for &q in fractions {
        let bg = crate::interface::build_background(f_plus, f_plus[0] * (1.0 - q), s_plus, &spec.params)?;
        let mut one = spec.clone();
        one.background = bg;
        let &(n1, n_tan) = spec.grids.last().ok_or_else(|| Error::InvalidParameter("empty grid family".into()))?;
        ratios.push(tame_entry(&one, n1, n_tan)?.ratio);
    }
    let mx = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let mn = ratios.iter().cloned().fold(f64::MAX, f64::min);
    Ok(JumpFamilyReport { fractions: fractions.to_vec(), ratios, band: mx / mn })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_probe_no_violations() {
        let g = Grid::new(2, 128, 1.0, 32).unwrap();
        let r = trace_inequality_probe(&g, 40, 7).unwrap();
        assert_eq!(r.violations_est1 + r.violations_est2, 0, "{r:?}");
        assert!(r.max_ratio_est1 > 0.0);
    }
}
