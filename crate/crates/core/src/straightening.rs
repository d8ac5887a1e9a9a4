//! Fixed-domain formulation: the cutoff `chi`, lifting functions
//! `Phi(t, x) = s x1 + chi(s x1) phi(t, x')` on each side `s = +-1`,
//! the `Phi`-differentials, the operator `L(U, Phi)` and the involution
//! residuals.

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{inverse, EquationOfState, Layout, MaterialParams, ThermoState};
use crate::error::{Error, Result};
use crate::grid::{d1, dtan_with, Field, Grid, Jets, TanPlans};
use crate::hyperbolic::{a1_tilde, assemble_a, f_jn, LiftDerivs};
use crate::interface::{varrho, BackgroundState};

/// Smallest admissible `|d1 Phi|`.
pub const LIFT_TOL: f64 = 1e-8;

/// Smooth even cutoff, identically one on `[-1, 1]`, with `|chi'| < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chi {
    /// Integrated `exp(-1/(1-u^2))` mollifier; support `[-3, 3]`, `max|chi'| ~ 0.829`.
    #[default]
    Mollifier,
    /// Ratio-of-exponentials transition; support `[-4, 4]`, `max|chi'| = 2/3`.
    Transition,
}

const MOLL_TABLE: usize = 4096;

struct MollTable {
    cum: Vec<f64>,
    total: f64,
}

fn moll_density(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (4.0 * s * (1.0 - s))).exp()
    }
}

fn moll_table() -> &'static MollTable {
    static T: OnceLock<MollTable> = OnceLock::new();
    T.get_or_init(|| {
        // 5-point Gauss-Legendre on each cell
        let xg = [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
        let wg = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = 1.0 / MOLL_TABLE as f64;
        let mut cum = vec![0.0; MOLL_TABLE + 1];
        for k in 0..MOLL_TABLE {
            let a = k as f64 * h;
            let q: f64 = xg.iter().zip(&wg).map(|(x, w)| w * moll_density(a + 0.5 * h * (1.0 + x))).sum();
            cum[k + 1] = cum[k] + 0.5 * h * q;
        }
        let total = cum[MOLL_TABLE];
        MollTable { cum, total }
    })
}

/// Normalized cumulative mollifier `H(s)`, cubic Hermite between table nodes.
fn moll_h(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let t = moll_table();
    let h = 1.0 / MOLL_TABLE as f64;
    let k = ((s / h) as usize).min(MOLL_TABLE - 1);
    let a = k as f64 * h;
    let u = (s - a) / h;
    let (y0, y1) = (t.cum[k], t.cum[k + 1]);
    let (m0, m1) = (moll_density(a) * h, moll_density(a + h) * h);
    let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
    let h10 = u.powi(3) - 2.0 * u * u + u;
    let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
    let h11 = u.powi(3) - u * u;
    (h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1) / t.total
}

fn trans_g(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

fn trans_dg(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp() / (s * s)
    }
}

impl Chi {
    pub fn support_radius(&self) -> f64 {
        match self {
            Chi::Mollifier => 3.0,
            Chi::Transition => 4.0,
        }
    }

    fn width(&self) -> f64 {
        self.support_radius() - 1.0
    }

    pub fn value(&self, r: f64) -> f64 {
        let a = r.abs();
        if a <= 1.0 {
            return 1.0;
        }
        if a >= self.support_radius() {
            return 0.0;
        }
        let s = (a - 1.0) / self.width();
        match self {
            Chi::Mollifier => 1.0 - moll_h(s),
            Chi::Transition => {
                let (g0, g1) = (trans_g(s), trans_g(1.0 - s));
                g1 / (g0 + g1)
            }
        }
    }

    pub fn deriv(&self, r: f64) -> f64 {
        let a = r.abs();
        if a <= 1.0 || a >= self.support_radius() {
            return 0.0;
        }
        let w = self.width();
        let s = (a - 1.0) / w;
        let dh = match self {
            Chi::Mollifier => moll_density(s) / moll_table().total,
            Chi::Transition => {
                let (g0, g1) = (trans_g(s), trans_g(1.0 - s));
                let (d0, d1) = (trans_dg(s), trans_dg(1.0 - s));
                (d0 * g1 + g0 * d1) / (g0 + g1).powi(2)
            }
        };
        -r.signum() * dh / w
    }

    /// `sup |chi'|`, evaluated in closed form at the transition midpoint.
    pub fn max_slope(&self) -> f64 {
        self.deriv(1.0 + 0.5 * self.width()).abs()
    }
}

/// Front function and its first derivatives sampled on the tangential nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontSamples {
    pub phi: Vec<f64>,
    pub phi_t: Vec<f64>,
    /// `phi_tan[k][t]` is `d_{k+2} phi`.
    pub phi_tan: Vec<Vec<f64>>,
}

impl FrontSamples {
    pub fn flat(grid: &Grid) -> Self {
        let nt = grid.n_tan_total();
        FrontSamples { phi: vec![0.0; nt], phi_t: vec![0.0; nt], phi_tan: vec![vec![0.0; nt]; grid.dim - 1] }
    }

    /// From a closure returning `(phi, d_t phi, [d_2 phi, d_3 phi])`.
    pub fn from_fn<F: Fn([f64; 2]) -> (f64, f64, [f64; 2])>(grid: &Grid, f: F) -> Self {
        let nt = grid.n_tan_total();
        let mut s = FrontSamples::flat(grid);
        for t in 0..nt {
            let (p, pt, pg) = f(grid.xtan(t));
            s.phi[t] = p;
            s.phi_t[t] = pt;
            for k in 0..grid.dim - 1 {
                s.phi_tan[k][t] = pg[k];
            }
        }
        s
    }

    /// From sampled values; tangential derivatives by the grid's tangential rule.
    pub fn from_values(grid: &Grid, phi: Vec<f64>, phi_t: Vec<f64>) -> Self {
        let phi_tan = (0..grid.dim - 1).map(|k| crate::grid::dtan_slab(grid, &phi, 1, k)).collect();
        FrontSamples { phi, phi_t, phi_tan }
    }

    pub fn max_abs(&self) -> f64 {
        self.phi.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// Lifting function of one side.
#[derive(Clone, Debug, PartialEq)]
pub struct Lift {
    pub chi: Chi,
    /// `+1` or `-1`.
    pub sign: f64,
    pub front: FrontSamples,
}

impl Lift {
    pub fn new(chi: Chi, sign: f64, front: FrontSamples) -> Self {
        Lift { chi, sign, front }
    }

    pub fn identity(grid: &Grid, sign: f64) -> Self {
        Lift { chi: Chi::default(), sign, front: FrontSamples::flat(grid) }
    }

    /// `Phi` at node `(i, t)`.
    pub fn value(&self, grid: &Grid, i: usize, t: usize) -> f64 {
        let x1 = grid.x1(i);
        self.sign * x1 + self.chi.value(x1) * self.front.phi[t]
    }

    /// `(d_t Phi, d_1 Phi, d_i Phi)` at node `(i, t)`.
    pub fn derivs(&self, grid: &Grid, i: usize, t: usize) -> LiftDerivs {
        let x1 = grid.x1(i);
        let c = self.chi.value(x1);
        let mut dtan = [0.0; 2];
        for k in 0..grid.dim - 1 {
            dtan[k] = c * self.front.phi_tan[k][t];
        }
        LiftDerivs { dt: c * self.front.phi_t[t], d1: self.sign + self.chi.deriv(x1) * self.front.phi[t], dtan }
    }

    /// `min s d_1 Phi` over the grid.
    pub fn min_normal_slope(&self, grid: &Grid) -> f64 {
        let nt = grid.n_tan_total();
        let mut m = f64::INFINITY;
        for i in 0..grid.n1_nodes() {
            for t in 0..nt {
                m = m.min(self.sign * self.derivs(grid, i, t).d1);
            }
        }
        m
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        let m = self.min_normal_slope(grid);
        if !(m.abs() >= LIFT_TOL) || m < 0.0 {
            return Err(Error::DegenerateLift { value: m });
        }
        Ok(())
    }
}

/// `Phi`-differentials of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiDerivs {
    pub dt: Field,
    pub d1: Field,
    pub dtan: Vec<Field>,
}

impl PhiDerivs {
    /// Direction `l` (0 for x1, k for x_{k+1}).
    pub fn dir(&self, l: usize) -> &Field {
        if l == 0 {
            &self.d1
        } else {
            &self.dtan[l - 1]
        }
    }
}

/// `d_t^Phi = d_t - (d_t Phi / d_1 Phi) d_1`, `d_1^Phi = d_1 / d_1 Phi`,
/// `d_i^Phi = d_i - (d_i Phi / d_1 Phi) d_1`.
pub fn phi_differentials(grid: &Grid, jets: &Jets, lift: &Lift) -> Result<PhiDerivs> {
    lift.check(grid)?;
    let nc = jets.val.ncomp;
    let nt = grid.n_tan_total();
    let mut out = PhiDerivs {
        dt: Field::zeros(grid, nc),
        d1: Field::zeros(grid, nc),
        dtan: vec![Field::zeros(grid, nc); grid.dim - 1],
    };
    for node in 0..grid.npts() {
        let (i, t) = (node / nt, node % nt);
        let ld = lift.derivs(grid, i, t);
        let u1 = jets.d1.at(node);
        for c in 0..nc {
            out.dt.data[node * nc + c] = jets.dt.get(node, c) - ld.dt / ld.d1 * u1[c];
            out.d1.data[node * nc + c] = u1[c] / ld.d1;
            for k in 0..grid.dim - 1 {
                out.dtan[k].data[node * nc + c] = jets.dtan[k].get(node, c) - ld.dtan[k] / ld.d1 * u1[c];
            }
        }
    }
    Ok(out)
}

/// `L(U, Phi) U = A_0 d_t U + A1~ d_1 U + sum_i A_i d_i U` at every node.
pub fn apply_l(grid: &Grid, jets: &Jets, lift: &Lift, params: &MaterialParams) -> Result<Field> {
    lift.check(grid)?;
    let n = params.n_unknowns();
    let nt = grid.n_tan_total();
    let rows: Vec<Result<Vec<f64>>> = (0..grid.npts())
        .into_par_iter()
        .map(|node| {
            let (i, t) = (node / nt, node % nt);
            let st = ThermoState::from_slice(grid.dim, jets.val.at(node));
            let sys = assemble_a(&st, params)?;
            let a1t = a1_tilde(&sys, &lift.derivs(grid, i, t))?;
            let v = |f: &Field| nalgebra::DVector::from_column_slice(f.at(node));
            let mut r = &sys.a0 * v(&jets.dt) + &a1t * v(&jets.d1);
            for k in 1..grid.dim {
                r += &sys.a[k] * v(&jets.dtan[k - 1]);
            }
            Ok(r.as_slice().to_vec())
        })
        .collect();
    let mut data = Vec::with_capacity(grid.npts() * n);
    for r in rows {
        data.extend(r?);
    }
    Ok(Field { ncomp: n, data })
}

/// Interior involution residuals of one side.
#[derive(Clone, Debug, PartialEq)]
pub struct SideResiduals {
    /// `rho(p, S) - 1/det F`.
    pub rho: Field,
    /// Component `(i*d + j)*d + k`: `F_lk d_l F_ij - F_lj d_l F_ik`.
    pub inv1: Field,
    /// Component `j`: `d_l (rho F_lj)`.
    pub inv2: Field,
}

/// Residuals on the boundary slice, one row per tangential node.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryResiduals {
    /// `[rho F_jN]`, `d - 1` per node.
    pub inv3: Vec<Vec<f64>>,
    /// `[rho F_kN F_ij - rho F_jN F_ik]` for `i`, `j < k`.
    pub inv4: Vec<Vec<f64>>,
    /// `F_jN` on both sides, `2(d - 1)` per node.
    pub inv5: Vec<Vec<f64>>,
    /// `|rho^+ F_1N^+ - varrho(F^+)|`.
    pub key1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvolutionResiduals {
    pub plus: SideResiduals,
    pub minus: SideResiduals,
    pub boundary: BoundaryResiduals,
}

fn vmax(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().fold(0.0, |a, b| a.max(b.abs()))
}

impl InvolutionResiduals {
    /// Max-norm of each residual family.
    pub fn maxima(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("rho_relation", self.plus.rho.max_abs().max(self.minus.rho.max_abs())),
            ("inv1", self.plus.inv1.max_abs().max(self.minus.inv1.max_abs())),
            ("inv2", self.plus.inv2.max_abs().max(self.minus.inv2.max_abs())),
            ("inv3", vmax(&self.boundary.inv3)),
            ("inv4", vmax(&self.boundary.inv4)),
            ("inv5", vmax(&self.boundary.inv5)),
            ("key1", self.boundary.key1.iter().fold(0.0, |a, b| a.max(b.abs()))),
        ]
    }
}

fn side_residuals(grid: &Grid, jets: &Jets, lift: &Lift, params: &MaterialParams) -> Result<SideResiduals> {
    let d = grid.dim;
    let l = Layout::new(d);
    let pd = phi_differentials(grid, jets, lift)?;
    let npts = grid.npts();
    let mut rho_f = Field::zeros(grid, 1);
    let mut inv1 = Field::zeros(grid, d * d * d);
    let mut inv2 = Field::zeros(grid, d);
    for node in 0..npts {
        let st = ThermoState::from_slice(d, jets.val.at(node));
        let rho = st.density()?;
        let rho_ps = params.eos.density_for_pressure(st.p, st.s)?;
        rho_f.data[node] = rho_ps - rho;
        let f = st.f;
        let fi = inverse(&f, d);
        let df = |ll: usize, i: usize, j: usize| pd.dir(ll).get(node, l.f(i, j));
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let mut acc = 0.0;
                    for ll in 0..d {
                        acc += f[ll][k] * df(ll, i, j) - f[ll][j] * df(ll, i, k);
                    }
                    inv1.data[node * d * d * d + (i * d + j) * d + k] = acc;
                }
            }
        }
        // d_l rho = -rho tr(F^{-1} d_l F)
        for j in 0..d {
            let mut acc = 0.0;
            for ll in 0..d {
                let mut tr = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        tr += fi[a][b] * df(ll, b, a);
                    }
                }
                acc += -rho * tr * f[ll][j] + rho * df(ll, ll, j);
            }
            inv2.data[node * d + j] = acc;
        }
    }
    Ok(SideResiduals { rho: rho_f, inv1, inv2 })
}

/// All involution residual families for a two-sided state.
pub fn involution_residuals(
    grid: &Grid,
    plus: &Jets,
    minus: &Jets,
    lift_plus: &Lift,
    lift_minus: &Lift,
    params: &MaterialParams,
) -> Result<InvolutionResiduals> {
    let d = grid.dim;
    let sp = side_residuals(grid, plus, lift_plus, params)?;
    let sm = side_residuals(grid, minus, lift_minus, params)?;
    let nt = grid.n_tan_total();
    let mut b = BoundaryResiduals { inv3: vec![], inv4: vec![], inv5: vec![], key1: vec![] };
    for t in 0..nt {
        let mut n = [1.0, 0.0, 0.0];
        for k in 1..d {
            n[k] = -lift_plus.front.phi_tan[k - 1][t];
        }
        let up = ThermoState::from_slice(d, plus.val.at(t));
        let um = ThermoState::from_slice(d, minus.val.at(t));
        let (rp, rm) = (up.density()?, um.density()?);
        let fjn = |s: &ThermoState, j: usize| f_jn(s, j, &n);
        b.inv3.push((1..d).map(|j| rp * fjn(&up, j) - rm * fjn(&um, j)).collect());
        let mut r4 = vec![];
        for i in 0..d {
            for j in 0..d {
                for k in j + 1..d {
                    let side = |s: &ThermoState, r: f64| r * fjn(s, k) * s.f[i][j] - r * fjn(s, j) * s.f[i][k];
                    r4.push(side(&up, rp) - side(&um, rm));
                }
            }
        }
        b.inv4.push(r4);
        b.inv5.push((1..d).map(|j| fjn(&up, j)).chain((1..d).map(|j| fjn(&um, j))).collect());
        b.key1.push((rp * fjn(&up, 0) - varrho(&up.f, d)?).abs());
    }
    Ok(InvolutionResiduals { plus: sp, minus: sm, boundary: b })
}

/// Involution residuals of the problem linearized about a background state,
/// for a perturbation field `V` on side `sign` with the flat lift.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearResiduals {
    pub rho: Field,
    pub inv1: Field,
    pub inv2: Field,
}

pub fn linear_involution_residuals(
    grid: &Grid,
    bg: &BackgroundState,
    sign: f64,
    v: &Field,
    params: &MaterialParams,
) -> Result<LinearResiduals> {
    let d = grid.dim;
    let l = Layout::new(d);
    let st = bg.state(sign);
    let fb = st.f;
    let fbi = inverse(&fb, d);
    let (rho, ev) = st.thermo(params)?;
    let plans = TanPlans::new(grid.n_tan);
    let deriv = |u: &Field, ll: usize| -> Field {
        if ll == 0 {
            let mut g = d1(grid, u);
            g.data.iter_mut().for_each(|x| *x *= sign);
            g
        } else {
            dtan_with(grid, u, ll - 1, &plans)
        }
    };
    let dv: Vec<Field> = (0..d).map(|ll| deriv(v, ll)).collect();
    let npts = grid.npts();
    let tr = |u: &[f64]| -> f64 {
        let mut acc = 0.0;
        for a in 0..d {
            for b2 in 0..d {
                acc += fbi[a][b2] * u[l.f(b2, a)];
            }
        }
        acc
    };
    let mut rf = Field::zeros(grid, 1);
    let mut inv1 = Field::zeros(grid, d * d * d);
    let mut q = Field::zeros(grid, d * d);
    for node in 0..npts {
        let u = v.at(node);
        let rho1 = -rho * tr(u);
        rf.data[node] = u[0] / ev.c2 - ev.p_s / ev.c2 * u[l.s()] - rho1;
        for ll in 0..d {
            for j in 0..d {
                q.data[node * d * d + ll * d + j] = rho * u[l.f(ll, j)] + rho1 * fb[ll][j];
            }
        }
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let mut acc = 0.0;
                    for ll in 0..d {
                        acc += fb[ll][k] * dv[ll].get(node, l.f(i, j)) - fb[ll][j] * dv[ll].get(node, l.f(i, k));
                    }
                    inv1.data[node * d * d * d + (i * d + j) * d + k] = acc;
                }
            }
        }
    }
    let dq: Vec<Field> = (0..d).map(|ll| deriv(&q, ll)).collect();
    let mut inv2 = Field::zeros(grid, d);
    for node in 0..npts {
        for j in 0..d {
            inv2.data[node * d + j] = (0..d).map(|ll| dq[ll].get(node, ll * d + j)).sum();
        }
    }
    Ok(LinearResiduals { rho: rf, inv1, inv2 })
}

/// Snapshot of a two-sided perturbation field.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub plus: Field,
    pub minus: Field,
}

/// Max-norm drift `|r(t) - r(0)|` of each linearized involution residual.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DriftSeries {
    pub t: Vec<f64>,
    pub rho: Vec<f64>,
    pub inv1: Vec<f64>,
    pub inv2: Vec<f64>,
}

impl DriftSeries {
    pub fn last(&self) -> (f64, f64, f64) {
        let k = self.t.len() - 1;
        (self.rho[k], self.inv1[k], self.inv2[k])
    }
}

/// Drift of the linearized involutions along a trajectory, measured on nodes
/// `margin <= i <= n1 - margin` so boundary closures do not enter.
pub fn involution_transport_check(
    grid: &Grid,
    bg: &BackgroundState,
    snaps: &[Snapshot],
    margin: usize,
    params: &MaterialParams,
) -> Result<DriftSeries> {
    let mut out = DriftSeries::default();
    let Some(first) = snaps.first() else {
        return Ok(out);
    };
    let r0 = [
        linear_involution_residuals(grid, bg, 1.0, &first.plus, params)?,
        linear_involution_residuals(grid, bg, -1.0, &first.minus, params)?,
    ];
    let nt = grid.n_tan_total();
    let lo = margin * nt;
    let hi = (grid.n1 + 1 - margin) * nt;
    let drift = |a: &Field, b: &Field| -> f64 {
        let nc = a.ncomp;
        a.data[lo * nc..hi * nc].iter().zip(&b.data[lo * nc..hi * nc]).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    };
    for s in snaps {
        let r = [
            linear_involution_residuals(grid, bg, 1.0, &s.plus, params)?,
            linear_involution_residuals(grid, bg, -1.0, &s.minus, params)?,
        ];
        out.t.push(s.t);
        out.rho.push(drift(&r[0].rho, &r0[0].rho).max(drift(&r[1].rho, &r0[1].rho)));
        out.inv1.push(drift(&r[0].inv1, &r0[0].inv1).max(drift(&r[1].inv1, &r0[1].inv1)));
        out.inv2.push(drift(&r[0].inv2, &r0[0].inv2).max(drift(&r[1].inv2, &r0[1].inv2)));
    }
    Ok(out)
}

/// Write residual fields as CSV rows `t, x1, x2[, x3], name, value`.
pub fn write_residual_csv<W: Write>(
    grid: &Grid,
    t: f64,
    fields: &[(&str, &Field)],
    mut w: W,
) -> Result<()> {
    let tan = if grid.dim == 3 { "x2,x3" } else { "x2" };
    writeln!(w, "t,x1,{tan},name,value")?;
    let nt = grid.n_tan_total();
    for (name, f) in fields {
        for node in 0..grid.npts() {
            let (i, tt) = (node / nt, node % nt);
            let xt = grid.xtan(tt);
            let xs = if grid.dim == 3 { format!("{:.17e},{:.17e}", xt[0], xt[1]) } else { format!("{:.17e}", xt[0]) };
            for c in 0..f.ncomp {
                let label = if f.ncomp == 1 { name.to_string() } else { format!("{name}[{c}]") };
                writeln!(w, "{:.17e},{:.17e},{xs},{label},{:.17e}", t, grid.x1(i), f.get(node, c))?;
            }
        }
    }
    Ok(())
}

/// Jets of a two-sided analytic state `u(sign, t, x1, x', out)`.
pub fn sample_state<F>(grid: &Grid, n: usize, t: f64, tau: f64, sign: f64, f: &F) -> Jets
where
    F: Fn(f64, f64, f64, [f64; 2], &mut [f64]) + Sync,
{
    Jets::from_fn(grid, n, t, tau, |tt, x1, xt, o| f(sign, tt, x1, xt, o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::build_background;

    #[test]
    fn chi_shape() {
        for chi in [Chi::Mollifier, Chi::Transition] {
            assert_eq!(chi.value(0.0), 1.0);
            assert_eq!(chi.value(1.0), 1.0);
            assert_eq!(chi.value(chi.support_radius()), 0.0);
            assert!(chi.max_slope() < 1.0);
            // derivative agrees with a difference quotient
            for r in [1.3, 1.9, 2.4, -2.2] {
                let h = 1e-6;
                let fd = (chi.value(r + h) - chi.value(r - h)) / (2.0 * h);
                assert!((fd - chi.deriv(r)).abs() < 1e-7, "{chi:?} {r}");
            }
        }
        assert!((Chi::Mollifier.max_slope() - 0.8286).abs() < 1e-3);
        assert!((Chi::Transition.max_slope() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn background_l_vanishes() {
        let params = MaterialParams::gamma_law(2, 1.4).unwrap();
        let bg = build_background([1.0, 1.0, 1.0], 0.5, 0.0, &params).unwrap();
        let g = Grid::new(2, 8, 8.0, 4).unwrap();
        for s in [1.0, -1.0] {
            let u = bg.state(s).to_vec();
            let jets = Jets::steady(&g, Field::from_fn(&g, u.len(), |_, _, o| o.copy_from_slice(&u)));
            let r = apply_l(&g, &jets, &Lift::identity(&g, s), &params).unwrap();
            assert!(r.max_abs() < 1e-13);
        }
    }
}
