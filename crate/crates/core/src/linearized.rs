//! Effective linearized problem around a basic state: good unknowns,
//! `L'_e` and `B'_e`, the W-variables and their boundary conditions, the
//! boundary-source lift, the auxiliary quantities and the boundary-term
//! cancellation check.
//!
//! W-variables use 0-based indices matching the U layout: `W[0] = p`,
//! `W[1] = v . N`, `W[j] = v_j` (`j >= 2`), `W[d+1] = p - rho F_1N F_11`,
//! `W[d+j] = d_j Phi F_11 + F_j1`, the remaining entries are `F_ij` (`j >= 2`)
//! and `S`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{EquationOfState, Layout, MaterialParams, ThermoState};
use crate::error::{Error, Result};
use crate::grid::{backward_weights, d1, dtan_slab, dtan_with, Field, Grid, Jets, TanPlans};
use crate::hyperbolic::{a1_tilde, assemble_a, c_operator, f_jn, j_matrices, FrontGeometry, LiftDerivs, StateJet};
use crate::interface::{
    boundary_operator_unchecked, project_tangential_columns, varrho, varrho_gradient, BackgroundState, BoundaryForm,
    JumpState,
};
use crate::straightening::{phi_differentials, Chi, FrontSamples, Lift};

/// Tolerance on the basic-state boundary constraints.
pub const BASIC_CONSTRAINT_TOL: f64 = 1e-10;
/// Largest boundary-condition residual accepted by the cancellation check.
pub const BC_PRECONDITION_TOL: f64 = 1e-6;
/// Condition-number ceiling for boundary solves.
pub const COND_LIMIT: f64 = 1e8;

/// One side of a basic state: `U` with its derivatives and the lift `Phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasicSide {
    pub sign: f64,
    pub jets: Jets,
    pub lift: Lift,
}

impl BasicSide {
    pub fn state(&self, dim: usize, node: usize) -> ThermoState {
        ThermoState::from_slice(dim, self.jets.val.at(node))
    }

    pub fn state_jet(&self, dim: usize, node: usize) -> StateJet {
        let v = |f: &Field| DVector::from_column_slice(f.at(node));
        StateJet { dt: v(&self.jets.dt), d1: v(&self.jets.d1), dtan: (0..dim - 1).map(|k| v(&self.jets.dtan[k])).collect() }
    }

    pub fn lift_derivs(&self, grid: &Grid, node: usize) -> LiftDerivs {
        let nt = grid.n_tan_total();
        self.lift.derivs(grid, node / nt, node % nt)
    }
}

/// Smooth static perturbation supported in `|x1 - center| < width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    /// Tangential wave numbers `(m2, m3)`.
    #[serde(default)]
    pub mode: [i32; 2],
    /// Direction in U-space; the pressure entry is ignored (set from the EOS).
    pub direction: Vec<f64>,
}

impl BumpSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.direction.len() != n {
            return Err(Error::InvalidParameter(format!("bump direction needs {n} entries")));
        }
        if !(self.width > 0.0 && self.center - self.width > 0.0) {
            return Err(Error::InvalidParameter("bump must stay away from x1 = 0".into()));
        }
        Ok(())
    }

    pub fn profile(&self, x1: f64, xt: [f64; 2]) -> f64 {
        let r = (x1 - self.center) / self.width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let tau = 2.0 * std::f64::consts::PI * (self.mode[0] as f64 * xt[0] + self.mode[1] as f64 * xt[1]);
        (1.0 - r * r).powi(4) * tau.cos()
    }
}

/// Basic state `(U^+-, phi)` sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BasicState {
    pub grid: Grid,
    pub params: MaterialParams,
    pub plus: BasicSide,
    pub minus: BasicSide,
    /// Max-norm of the perturbation from the background (0 for backgrounds).
    pub k: f64,
}

/// Residuals of the basic-state constraints.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub pressure_relation: f64,
    pub boundary_operator: f64,
    pub f_jn: f64,
    pub tangential_columns: f64,
    pub transport: f64,
    pub min_normal_slope: f64,
}

impl ConstraintReport {
    pub fn max_residual(&self) -> f64 {
        [self.pressure_relation, self.boundary_operator, self.f_jn, self.tangential_columns, self.transport]
            .iter()
            .fold(0.0, |a, b| a.max(*b))
    }
}

impl BasicState {
    /// Constant background with the flat lift.
    pub fn background(grid: &Grid, bg: &BackgroundState, params: &MaterialParams) -> Result<Self> {
        let mk = |sign: f64| {
            let u = bg.state(sign).to_vec();
            let val = Field::from_fn(grid, u.len(), |_, _, o| o.copy_from_slice(&u));
            BasicSide { sign, jets: Jets::steady(grid, val), lift: Lift::identity(grid, sign) }
        };
        Ok(BasicState { grid: grid.clone(), params: params.clone(), plus: mk(1.0), minus: mk(-1.0), k: 0.0 })
    }

    /// Background plus a static bump on both sides, pressure reset from the EOS.
    pub fn perturbed(grid: &Grid, bg: &BackgroundState, bump: &BumpSpec, params: &MaterialParams) -> Result<Self> {
        let n = params.n_unknowns();
        bump.validate(n)?;
        let d = grid.dim;
        let mk = |sign: f64| -> Result<BasicSide> {
            let base = bg.state(sign).to_vec();
            let mut err = None;
            let val = Field::from_fn(grid, n, |x1, xt, o| {
                let b = bump.amplitude * bump.profile(x1, xt);
                for c in 0..n {
                    o[c] = base[c] + b * bump.direction[c];
                }
                let st = ThermoState::from_slice(d, o);
                match st.thermo(params) {
                    Ok((_, ev)) => o[0] = ev.p,
                    Err(_) => o[0] = f64::NAN,
                }
            });
            if val.data.iter().any(|x| !x.is_finite()) {
                err = Some(Error::InvalidParameter("bump leaves the admissible state set".into()));
            }
            if let Some(e) = err {
                return Err(e);
            }
            Ok(BasicSide { sign, jets: Jets::steady(grid, val), lift: Lift::identity(grid, sign) })
        };
        let plus = mk(1.0)?;
        let minus = mk(-1.0)?;
        let mut k: f64 = 0.0;
        for (side, sgn) in [(&plus, 1.0), (&minus, -1.0)] {
            let base = bg.state(sgn).to_vec();
            for node in 0..grid.npts() {
                for (c, b) in base.iter().enumerate() {
                    k = k.max((side.jets.val.get(node, c) - b).abs());
                }
            }
        }
        Ok(BasicState { grid: grid.clone(), params: params.clone(), plus, minus, k })
    }

    /// General basic state from closures, derivatives by the grid stencils
    /// (time derivative by a centered difference with step `tau`).
    /// `u(sign, t, x1, x', out)`; `phi(t, x') -> (phi, d_t phi, [d_2 phi, d_3 phi])`.
    pub fn from_fn<U, P>(grid: &Grid, params: &MaterialParams, chi: Chi, t: f64, tau: f64, u: U, phi: P) -> Result<Self>
    where
        U: Fn(f64, f64, f64, [f64; 2], &mut [f64]) + Sync,
        P: Fn(f64, [f64; 2]) -> (f64, f64, [f64; 2]),
    {
        let n = params.n_unknowns();
        let front = FrontSamples::from_fn(grid, |xt| phi(t, xt));
        let mk = |sign: f64| BasicSide {
            sign,
            jets: Jets::from_fn(grid, n, t, tau, |tt, x1, xt, o| u(sign, tt, x1, xt, o)),
            lift: Lift::new(chi, sign, front.clone()),
        };
        let plus = mk(1.0);
        let minus = mk(-1.0);
        plus.lift.check(grid)?;
        minus.lift.check(grid)?;
        Ok(BasicState { grid: grid.clone(), params: params.clone(), plus, minus, k: f64::NAN })
    }

    pub fn side(&self, sign: f64) -> &BasicSide {
        if sign > 0.0 {
            &self.plus
        } else {
            &self.minus
        }
    }

    /// Boundary data at tangential node `t`.
    pub fn boundary_jet(&self, t: usize) -> BoundaryBasicJet {
        let d = self.grid.dim;
        let front = &self.plus.lift.front;
        let mut dphi = [0.0; 2];
        for k in 0..d - 1 {
            dphi[k] = front.phi_tan[k][t];
        }
        BoundaryBasicJet {
            dim: d,
            plus: self.plus.state(d, t),
            minus: self.minus.state(d, t),
            d1_plus: self.plus.jets.d1.at(t).to_vec(),
            d1_minus: self.minus.jets.d1.at(t).to_vec(),
            dphi,
            phi_t: front.phi_t[t],
        }
    }

    pub fn boundary_jets(&self) -> Vec<BoundaryBasicJet> {
        (0..self.grid.n_tan_total()).map(|t| self.boundary_jet(t)).collect()
    }

    /// Evaluate the basic-state constraints.
    pub fn constraint_report(&self) -> Result<ConstraintReport> {
        let g = &self.grid;
        let d = g.dim;
        let l = Layout::new(d);
        let mut r = ConstraintReport {
            min_normal_slope: self.plus.lift.min_normal_slope(g).min(self.minus.lift.min_normal_slope(g)),
            ..Default::default()
        };
        for side in [&self.plus, &self.minus] {
            for node in 0..g.npts() {
                let st = side.state(d, node);
                let (_, ev) = st.thermo(&self.params)?;
                r.pressure_relation = r.pressure_relation.max((st.p - ev.p).abs() / ev.p.max(1.0));
            }
        }
        for t in 0..g.n_tan_total() {
            let b = self.boundary_jet(t);
            let js = JumpState::new(b.plus, b.minus, b.front());
            let bo = boundary_operator_unchecked(&js, &self.params, BoundaryForm::General)?;
            r.boundary_operator = r.boundary_operator.max(bo.iter().fold(0.0, |a, x| a.max(x.abs())));
            let n = b.normal();
            for j in 1..d {
                r.f_jn = r.f_jn.max(f_jn(&b.plus, j, &n).abs()).max(f_jn(&b.minus, j, &n).abs());
                for i in 0..d {
                    r.tangential_columns = r.tangential_columns.max((b.plus.f[i][j] - b.minus.f[i][j]).abs());
                }
            }
            // (d_t + v_l d_l) F_j - F_lj d_l v, l >= 2, on the boundary
            for side in [&self.plus, &self.minus] {
                let st = side.state(d, t);
                for j in 1..d {
                    for i in 0..d {
                        let mut acc = side.jets.dt.get(t, l.f(i, j));
                        for ll in 1..d {
                            acc += st.v[ll] * side.jets.dtan[ll - 1].get(t, l.f(i, j));
                            acc -= st.f[ll][j] * side.jets.dtan[ll - 1].get(t, l.v(i));
                        }
                        r.transport = r.transport.max(acc.abs());
                    }
                }
            }
        }
        Ok(r)
    }

    /// Fail with `ConstraintViolated` if any boundary constraint exceeds `tol`.
    pub fn check_constraints(&self, tol: f64) -> Result<ConstraintReport> {
        let r = self.constraint_report()?;
        if r.max_residual() > tol {
            return Err(Error::ConstraintViolated(format!("basic-state constraint residual {:e}", r.max_residual())));
        }
        if r.min_normal_slope < 0.5 {
            return Err(Error::DegenerateLift { value: r.min_normal_slope });
        }
        Ok(r)
    }
}

/// Basic-state data at one boundary point.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryBasicJet {
    pub dim: usize,
    pub plus: ThermoState,
    pub minus: ThermoState,
    /// `d_1 U^+` and `d_1 U^-` (U-layout).
    pub d1_plus: Vec<f64>,
    pub d1_minus: Vec<f64>,
    pub dphi: [f64; 2],
    pub phi_t: f64,
}

/// Linearized data at one boundary point.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLinearJet {
    /// Traces of the good unknowns (U-layout).
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub psi: f64,
    pub psi_t: f64,
    pub psi_tan: [f64; 2],
}

impl BoundaryBasicJet {
    pub fn normal(&self) -> [f64; 3] {
        let mut n = [1.0, 0.0, 0.0];
        for k in 1..self.dim {
            n[k] = -self.dphi[k - 1];
        }
        n
    }

    pub fn front(&self) -> FrontGeometry {
        FrontGeometry { dim: self.dim, grad: self.dphi, dt: self.phi_t }
    }

    pub fn lift(&self, sign: f64) -> LiftDerivs {
        LiftDerivs { dt: self.phi_t, d1: sign, dtan: self.dphi }
    }

    pub fn varrho(&self) -> Result<f64> {
        varrho(&self.plus.f, self.dim)
    }

    pub fn dvarrho(&self) -> Result<[[f64; 3]; 3]> {
        varrho_gradient(&self.plus.f, self.dim)
    }

    pub fn jump_f11(&self) -> f64 {
        self.plus.f[0][0] - self.minus.f[0][0]
    }

    /// `d_1 v_N^+ = d_1 v^+ . N` (the normal does not vary in x1 at the boundary).
    pub fn d1_vn_plus(&self) -> f64 {
        let l = Layout::new(self.dim);
        let n = self.normal();
        (0..self.dim).map(|i| self.d1_plus[l.v(i)] * n[i]).sum()
    }

    /// `sum_{i,j >= 2} d varrho / d F_ij * x_ij` for a U-layout vector `x`.
    fn dvarrho_dot(&self, x: &[f64]) -> Result<f64> {
        let l = Layout::new(self.dim);
        let g = self.dvarrho()?;
        let mut acc = 0.0;
        for i in 1..self.dim {
            for j in 1..self.dim {
                acc += g[i][j] * x[l.f(i, j)];
            }
        }
        Ok(acc)
    }

    pub fn b1(&self) -> Result<f64> {
        let l = Layout::new(self.dim);
        let (a, b) = (&self.d1_plus, &self.d1_minus);
        Ok(a[0] + b[0] - self.varrho()? * (a[l.f(0, 0)] + b[l.f(0, 0)]) - self.jump_f11() * self.dvarrho_dot(a)?)
    }

    /// `b_i` for `i = 2..d` (1-based), passed as `i`.
    pub fn bi(&self, i: usize) -> f64 {
        let l = Layout::new(self.dim);
        let (a, b) = (&self.d1_plus, &self.d1_minus);
        (a[l.f(0, 0)] + b[l.f(0, 0)]) * self.dphi[i - 2] + (a[l.f(i - 1, 0)] + b[l.f(i - 1, 0)])
    }

    /// Random admissible boundary data: `F_jN = 0`, the nonlinear boundary
    /// conditions hold, and the normal jets are arbitrary.
    pub fn random<R: Rng>(rng: &mut R, params: &MaterialParams) -> Result<Self> {
        let d = params.dim;
        let l = Layout::new(d);
        let n_u = l.n();
        for _ in 0..1000 {
            let mut dphi = [0.0; 2];
            for k in 0..d - 1 {
                dphi[k] = rng.gen_range(-0.3..0.3);
            }
            let mut nrm = [1.0, 0.0, 0.0];
            for k in 1..d {
                nrm[k] = -dphi[k - 1];
            }
            let mut fp = [[0.0; 3]; 3];
            for i in 0..d {
                for j in 0..d {
                    fp[i][j] = if i == j { 1.0 } else { 0.0 } + rng.gen_range(-0.2..0.2);
                }
            }
            fp[0][0] += 0.5;
            project_tangential_columns(&mut fp, d, &nrm);
            let mut fm = fp;
            fm[0][0] = fp[0][0] * rng.gen_range(0.5..0.9);
            let jump = fp[0][0] - fm[0][0];
            for i in 1..d {
                fm[i][0] = fp[i][0] + jump * dphi[i - 1];
            }
            let (dp, dm) = (crate::constitutive::det(&fp, d), crate::constitutive::det(&fm, d));
            if !(dp > 0.1 && dm > 0.1) {
                continue;
            }
            let mut v = [0.0; 3];
            for k in 0..d {
                v[k] = rng.gen_range(-0.3..0.3);
            }
            let s_plus = rng.gen_range(-0.2..0.2);
            let rho_p = 1.0 / dp;
            let rho_m = 1.0 / dm;
            let p_plus = params.eos.eval(rho_p, s_plus)?.p;
            let vr = varrho(&fp, d)?;
            let p_minus = p_plus - vr * jump;
            if !(p_minus > 0.05) {
                continue;
            }
            let s_minus = params.eos.entropy_for_pressure(rho_m, p_minus)?;
            let plus = ThermoState::new(d, p_plus, v, fp, s_plus);
            let minus = ThermoState::new(d, p_minus, v, fm, s_minus);
            let vn: f64 = (0..d).map(|i| v[i] * nrm[i]).sum();
            let mut jet = || (0..n_u).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let d1_plus = jet();
            let d1_minus = jet();
            return Ok(BoundaryBasicJet { dim: d, plus, minus, d1_plus, d1_minus, dphi, phi_t: vn });
        }
        Err(Error::InvalidParameter("could not sample admissible boundary data".into()))
    }
}

impl BoundaryLinearJet {
    pub fn zeros(dim: usize) -> Self {
        let n = Layout::new(dim).n();
        BoundaryLinearJet { v_plus: vec![0.0; n], v_minus: vec![0.0; n], psi: 0.0, psi_t: 0.0, psi_tan: [0.0; 2] }
    }

    pub fn random<R: Rng>(rng: &mut R, dim: usize) -> Self {
        let n = Layout::new(dim).n();
        let mut r = || rng.gen_range(-1.0..1.0);
        let v_plus = (0..n).map(|_| r()).collect();
        let v_minus = (0..n).map(|_| r()).collect();
        let mut psi_tan = [0.0; 2];
        for k in 0..dim - 1 {
            psi_tan[k] = r();
        }
        BoundaryLinearJet { v_plus, v_minus, psi: r(), psi_t: r(), psi_tan }
    }

    /// Traces of `V` recovered from the good unknowns: `V^+- = Vdot^+- +- psi d_1 U^+-`.
    pub fn natural_traces(&self, b: &BoundaryBasicJet) -> (Vec<f64>, Vec<f64>) {
        let vp = self.v_plus.iter().zip(&b.d1_plus).map(|(x, y)| x + self.psi * y).collect();
        let vm = self.v_minus.iter().zip(&b.d1_minus).map(|(x, y)| x - self.psi * y).collect();
        (vp, vm)
    }
}

/// `B'_e(Vdot, psi)` at one boundary point, `2d + 1` rows.
pub fn bprime_e(b: &BoundaryBasicJet, lin: &BoundaryLinearJet) -> Result<Vec<f64>> {
    let d = b.dim;
    let l = Layout::new(d);
    let n = b.normal();
    let (vp, vm) = (&lin.v_plus, &lin.v_minus);
    let jmp = |idx: usize| vp[idx] - vm[idx];
    let mut out = Vec::with_capacity(2 * d + 1);
    let mut r0 = lin.psi_t;
    for i in 1..d {
        r0 += b.plus.v[i] * lin.psi_tan[i - 1];
    }
    r0 -= (0..d).map(|i| vp[l.v(i)] * n[i]).sum::<f64>();
    r0 -= b.d1_vn_plus() * lin.psi;
    out.push(r0);
    for k in 0..d {
        out.push(jmp(l.v(k)) + lin.psi * (b.d1_plus[l.v(k)] + b.d1_minus[l.v(k)]));
    }
    let f11 = l.f(0, 0);
    out.push(jmp(0) - b.varrho()? * jmp(f11) - b.jump_f11() * b.dvarrho_dot(vp)? + b.b1()? * lin.psi);
    for i in 2..=d {
        out.push(
            jmp(f11) * b.dphi[i - 2] + jmp(l.f(i - 1, 0)) + b.jump_f11() * lin.psi_tan[i - 2] + b.bi(i) * lin.psi,
        );
    }
    Ok(out)
}

/// Nonlinear boundary operator (varrho form, no admissibility check) along
/// `(U + eps V, phi + eps psi)`.
pub fn boundary_family(b: &BoundaryBasicJet, lin: &BoundaryLinearJet, eps: f64, params: &MaterialParams) -> Result<Vec<f64>> {
    let d = b.dim;
    let (vp, vm) = lin.natural_traces(b);
    let up: Vec<f64> = b.plus.to_vec().iter().zip(&vp).map(|(u, v)| u + eps * v).collect();
    let um: Vec<f64> = b.minus.to_vec().iter().zip(&vm).map(|(u, v)| u + eps * v).collect();
    let mut grad = b.dphi;
    for k in 0..d - 1 {
        grad[k] += eps * lin.psi_tan[k];
    }
    let front = FrontGeometry { dim: d, grad, dt: b.phi_t + eps * lin.psi_t };
    let js = JumpState::new(ThermoState::from_slice(d, &up), ThermoState::from_slice(d, &um), front);
    boundary_operator_unchecked(&js, params, BoundaryForm::Varrho)
}

/// Difference quotient `(B(eps) - B(0)) / eps`.
pub fn bprime_fd(b: &BoundaryBasicJet, lin: &BoundaryLinearJet, eps: f64, params: &MaterialParams) -> Result<Vec<f64>> {
    let b1 = boundary_family(b, lin, eps, params)?;
    let b0 = boundary_family(b, lin, 0.0, params)?;
    Ok(b1.iter().zip(&b0).map(|(x, y)| (x - y) / eps).collect())
}

/// Boundary conditions in W-variables, explicit rows. Returns
/// `row - g` for the `2d + 1` rows (first row is the front equation).
pub fn boundary_rows_w(
    b: &BoundaryBasicJet,
    wp: &[f64],
    wm: &[f64],
    psi: f64,
    psi_t: f64,
    psi_tan: [f64; 2],
    g: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let d = b.dim;
    let l = Layout::new(d);
    let jmp = |idx: usize| wp[idx] - wm[idx];
    let mut out = Vec::with_capacity(2 * d + 1);
    let mut r0 = psi_t - wp[1] - b.d1_vn_plus() * psi;
    for i in 1..d {
        r0 += b.plus.v[i] * psi_tan[i - 1];
    }
    out.push(r0);
    let mut r1 = jmp(1) + psi * (b.d1_plus[l.v(0)] + b.d1_minus[l.v(0)]);
    for j in 2..=d {
        r1 += b.dphi[j - 2] * jmp(j);
    }
    out.push(r1);
    for k in 2..=d {
        out.push(jmp(k) + psi * (b.d1_plus[l.v(k - 1)] + b.d1_minus[l.v(k - 1)]));
    }
    out.push(jmp(d + 1) - b.jump_f11() * b.dvarrho_dot(wp)? + b.b1()? * psi);
    for k in 2..=d {
        out.push(jmp(d + k) + b.jump_f11() * psi_tan[k - 2] + b.bi(k) * psi);
    }
    if let Some(g) = g {
        for (o, gi) in out.iter_mut().zip(g) {
            *o -= gi;
        }
    }
    Ok(out)
}

/// `(J, J^{-1})` at a boundary point on side `sign`.
pub fn boundary_j(b: &BoundaryBasicJet, sign: f64, params: &MaterialParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let st = if sign > 0.0 { &b.plus } else { &b.minus };
    j_matrices(st, &b.lift(sign), params)
}

/// `Vdot = V - (Psi / d_1 Phi) d_1 U` on one side, `Psi = chi(x1) psi(x')`.
pub fn good_unknowns(grid: &Grid, side: &BasicSide, v: &Field, psi: &[f64]) -> Result<Field> {
    convert_good(grid, side, v, psi, -1.0)
}

/// Inverse of [`good_unknowns`].
pub fn from_good_unknowns(grid: &Grid, side: &BasicSide, vdot: &Field, psi: &[f64]) -> Result<Field> {
    convert_good(grid, side, vdot, psi, 1.0)
}

fn convert_good(grid: &Grid, side: &BasicSide, v: &Field, psi: &[f64], s: f64) -> Result<Field> {
    side.lift.check(grid)?;
    let nt = grid.n_tan_total();
    let nc = v.ncomp;
    let mut out = v.clone();
    for node in 0..grid.npts() {
        let (i, t) = (node / nt, node % nt);
        let ld = side.lift.derivs(grid, i, t);
        let big_psi = side.lift.chi.value(grid.x1(i)) * psi[t];
        let du = side.jets.d1.at(node);
        for c in 0..nc {
            out.data[node * nc + c] += s * big_psi / ld.d1 * du[c];
        }
    }
    Ok(out)
}

fn map_nodes<F>(grid: &Grid, nc: usize, f: F) -> Result<Field>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync + Send,
{
    let rows: Vec<Result<Vec<f64>>> = (0..grid.npts()).into_par_iter().map(f).collect();
    let mut data = Vec::with_capacity(grid.npts() * nc);
    for r in rows {
        data.extend(r?);
    }
    Ok(Field { ncomp: nc, data })
}

/// `W = J^{-1} V` on one side.
pub fn to_w(grid: &Grid, side: &BasicSide, v: &Field, params: &MaterialParams) -> Result<Field> {
    let d = grid.dim;
    map_nodes(grid, v.ncomp, |node| {
        let (_, ji) = j_matrices(&side.state(d, node), &side.lift_derivs(grid, node), params)?;
        Ok((ji * DVector::from_column_slice(v.at(node))).as_slice().to_vec())
    })
}

/// `V = J W` on one side.
pub fn from_w(grid: &Grid, side: &BasicSide, w: &Field, params: &MaterialParams) -> Result<Field> {
    let d = grid.dim;
    map_nodes(grid, w.ncomp, |node| {
        let (j, _) = j_matrices(&side.state(d, node), &side.lift_derivs(grid, node), params)?;
        Ok((j * DVector::from_column_slice(w.at(node))).as_slice().to_vec())
    })
}

/// `L(U, Phi) V` with coefficients from the basic side and derivatives of `v`.
pub fn apply_l_coeff(grid: &Grid, side: &BasicSide, v: &Jets, params: &MaterialParams) -> Result<Field> {
    let d = grid.dim;
    map_nodes(grid, v.val.ncomp, |node| {
        let sys = assemble_a(&side.state(d, node), params)?;
        let a1t = a1_tilde(&sys, &side.lift_derivs(grid, node))?;
        let vv = |f: &Field| DVector::from_column_slice(f.at(node));
        let mut r = &sys.a0 * vv(&v.dt) + &a1t * vv(&v.d1);
        for k in 1..d {
            r += &sys.a[k] * vv(&v.dtan[k - 1]);
        }
        Ok(r.as_slice().to_vec())
    })
}

/// `L'_e Vdot = L(U, Phi) Vdot + C(U, Phi) Vdot`.
pub fn apply_lprime_e(grid: &Grid, side: &BasicSide, v: &Jets, params: &MaterialParams) -> Result<Field> {
    let d = grid.dim;
    let l = apply_l_coeff(grid, side, v, params)?;
    map_nodes(grid, v.val.ncomp, |node| {
        let c = c_operator(
            &side.state(d, node),
            &side.state_jet(d, node),
            &side.lift_derivs(grid, node),
            v.val.at(node),
            params,
        )?;
        Ok(l.at(node).iter().zip(c.iter()).map(|(a, b)| a + b).collect())
    })
}

/// Full linearized operator `L V + C V - (L Psi / d_1 Phi) d_1 U`, where
/// `L Psi` is the matrix `A_0 d_t Psi + A1~ d_1 Psi + A_i d_i Psi`.
pub fn apply_lprime_full(grid: &Grid, side: &BasicSide, v: &Jets, psi: &Jets, params: &MaterialParams) -> Result<Field> {
    let d = grid.dim;
    let base = apply_lprime_e(grid, side, v, params)?;
    map_nodes(grid, v.val.ncomp, |node| {
        let sys = assemble_a(&side.state(d, node), params)?;
        let ld = side.lift_derivs(grid, node);
        let a1t = a1_tilde(&sys, &ld)?;
        let mut m = &sys.a0 * psi.dt.data[node] + &a1t * psi.d1.data[node];
        for k in 1..d {
            m += &sys.a[k] * psi.dtan[k - 1].data[node];
        }
        let du = DVector::from_column_slice(side.jets.d1.at(node));
        let corr = m * du / ld.d1;
        Ok(base.at(node).iter().zip(corr.iter()).map(|(a, b)| a - b).collect())
    })
}

/// Right side of the good-unknown identity:
/// `L Vdot + C Vdot + (Psi / d_1 Phi) d_1 (L(U, Phi) U)`.
pub fn alinhac_rhs(
    grid: &Grid,
    side: &BasicSide,
    vdot: &Jets,
    psi: &Field,
    params: &MaterialParams,
) -> Result<Field> {
    let base = apply_lprime_e(grid, side, vdot, params)?;
    let lu = apply_l_coeff(grid, side, &side.jets, params)?;
    let dlu = d1(grid, &lu);
    let nc = base.ncomp;
    let mut out = base;
    for node in 0..grid.npts() {
        let ld = side.lift_derivs(grid, node);
        for c in 0..nc {
            out.data[node * nc + c] += psi.data[node] / ld.d1 * dlu.get(node, c);
        }
    }
    Ok(out)
}

/// Max over nodes of `|L'(V, Psi) - alinhac_rhs(Vdot, Psi)|` for a static
/// basic side, `Psi = chi(x1) psi(x')` with `d_t psi = psi_t`, and `V` given
/// through its jets. `Vdot` is formed on the grid and differentiated with the
/// grid stencils, so the residual measures the discretization error.
pub fn alinhac_residual(grid: &Grid, side: &BasicSide, v: &Jets, psi: &[f64], psi_t: &[f64], params: &MaterialParams) -> Result<f64> {
    let nt = grid.n_tan_total();
    let chi = side.lift.chi;
    let psi_tan: Vec<Vec<f64>> = (0..grid.dim - 1).map(|k| dtan_slab(grid, psi, 1, k)).collect();
    let big = |f: &dyn Fn(usize, usize) -> f64| Field { ncomp: 1, data: (0..grid.npts()).map(|node| f(node / nt, node % nt)).collect() };
    let big_psi = Jets {
        val: big(&|i, t| chi.value(grid.x1(i)) * psi[t]),
        dt: big(&|i, t| chi.value(grid.x1(i)) * psi_t[t]),
        d1: big(&|i, t| chi.deriv(grid.x1(i)) * psi[t]),
        dtan: (0..grid.dim - 1).map(|k| big(&|i, t| chi.value(grid.x1(i)) * psi_tan[k][t])).collect(),
    };
    let lhs = apply_lprime_full(grid, side, v, &big_psi, params)?;
    let vdot = good_unknowns(grid, side, &v.val, psi)?;
    let mut vdot_t = v.dt.clone();
    let nc = vdot_t.ncomp;
    for node in 0..grid.npts() {
        let ld = side.lift_derivs(grid, node);
        let du = side.jets.d1.at(node);
        for c in 0..nc {
            vdot_t.data[node * nc + c] -= big_psi.dt.data[node] / ld.d1 * du[c];
        }
    }
    let rhs = alinhac_rhs(grid, side, &Jets::from_field(grid, vdot, vdot_t), &big_psi.val, params)?;
    Ok(lhs.axpby(1.0, &rhs, -1.0).max_abs())
}

/// Unknowns chosen to carry a boundary source: `(side, U index)`.
pub fn lift_selection(dim: usize) -> Vec<(f64, usize)> {
    let l = Layout::new(dim);
    let mut sel: Vec<(f64, usize)> = (0..dim).map(|k| (1.0, l.v(k))).collect();
    sel.push((-1.0, l.v(0)));
    sel.push((1.0, 0));
    for i in 1..dim {
        sel.push((1.0, l.f(i, 0)));
    }
    sel
}

/// Trace values `G` with `B'_e(G, 0) = g` at one boundary point, using the
/// unknowns of [`lift_selection`]. Returns `(G^+, G^-)` in U-layout.
pub fn solve_boundary_lift(b: &BoundaryBasicJet, g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = b.dim;
    let n = Layout::new(d).n();
    let sel = lift_selection(d);
    let m_rows = 2 * d + 1;
    let mut m = DMatrix::zeros(m_rows, m_rows);
    for (col, &(s, idx)) in sel.iter().enumerate() {
        let mut lin = BoundaryLinearJet::zeros(d);
        if s > 0.0 {
            lin.v_plus[idx] = 1.0;
        } else {
            lin.v_minus[idx] = 1.0;
        }
        let r = bprime_e(b, &lin)?;
        for row in 0..m_rows {
            m[(row, col)] = r[row];
        }
    }
    let sv = m.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !(cond <= COND_LIMIT) {
        return Err(Error::SingularBoundarySystem { cond });
    }
    let x = m.lu().solve(&DVector::from_column_slice(g)).ok_or(Error::SingularBoundarySystem { cond: f64::INFINITY })?;
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for (k, &(s, idx)) in sel.iter().enumerate() {
        if s > 0.0 {
            gp[idx] = x[k];
        } else {
            gm[idx] = x[k];
        }
    }
    Ok((gp, gm))
}

/// Lifted boundary source: `V_nat = chi(x1) G(t, x')` on each side and the
/// interior correction `-(L + C) V_nat` to be added to `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLift {
    pub v_plus: Jets,
    pub v_minus: Jets,
    pub f_corr_plus: Field,
    pub f_corr_minus: Field,
}

/// Build the lift from `g` and `d_t g` sampled on the tangential nodes
/// (`n_tan_total * (2d + 1)` values each).
pub fn lift_boundary_source(basic: &BasicState, g: &[f64], g_t: &[f64]) -> Result<BoundaryLift> {
    let grid = &basic.grid;
    let d = grid.dim;
    let n = basic.params.n_unknowns();
    let nt = grid.n_tan_total();
    let m = 2 * d + 1;
    let mut gp = vec![0.0; nt * n];
    let mut gm = vec![0.0; nt * n];
    let mut gpt = vec![0.0; nt * n];
    let mut gmt = vec![0.0; nt * n];
    for t in 0..nt {
        let b = basic.boundary_jet(t);
        let (a, c) = solve_boundary_lift(&b, &g[t * m..(t + 1) * m])?;
        let (at, ct) = solve_boundary_lift(&b, &g_t[t * m..(t + 1) * m])?;
        gp[t * n..(t + 1) * n].copy_from_slice(&a);
        gm[t * n..(t + 1) * n].copy_from_slice(&c);
        gpt[t * n..(t + 1) * n].copy_from_slice(&at);
        gmt[t * n..(t + 1) * n].copy_from_slice(&ct);
    }
    let mk = |side: &BasicSide, gs: &[f64], gst: &[f64]| -> Jets {
        let chi = side.lift.chi;
        let tan: Vec<Vec<f64>> = (0..d - 1).map(|k| dtan_slab(grid, gs, n, k)).collect();
        let fill = |f: &dyn Fn(f64) -> f64, src: &[f64]| {
            let mut out = Field::zeros(grid, n);
            for node in 0..grid.npts() {
                let (i, t) = (node / nt, node % nt);
                let w = f(grid.x1(i));
                for c in 0..n {
                    out.data[node * n + c] = w * src[t * n + c];
                }
            }
            out
        };
        let val = fill(&|x| chi.value(x), gs);
        let dt = fill(&|x| chi.value(x), gst);
        let d1f = fill(&|x| chi.deriv(x), gs);
        let dtan = tan.iter().map(|s| fill(&|x| chi.value(x), s)).collect();
        Jets { val, dt, d1: d1f, dtan }
    };
    let vp = mk(&basic.plus, &gp, &gpt);
    let vm = mk(&basic.minus, &gm, &gmt);
    let neg = |f: Field| Field { ncomp: f.ncomp, data: f.data.iter().map(|x| -x).collect() };
    let fp = neg(apply_lprime_e(grid, &basic.plus, &vp, &basic.params)?);
    let fm = neg(apply_lprime_e(grid, &basic.minus, &vm, &basic.params)?);
    Ok(BoundaryLift { v_plus: vp, v_minus: vm, f_corr_plus: fp, f_corr_minus: fm })
}

/// Max-norm residuals of the reconstruction identities.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IdentityResiduals {
    pub varsigma_id2: f64,
    pub eta_id0: f64,
    pub eta_id1: f64,
    pub zeta_id0: f64,
    pub zeta_id1: f64,
    pub psi_id: f64,
}

/// Auxiliary quantities of one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryQuantities {
    pub varsigma: [Field; 2],
    /// `d` components per node.
    pub eta: [Field; 2],
    pub zeta: Option<[Field; 2]>,
    /// `R_j`, `j = 2..d`, per tangential node.
    pub r: Vec<Vec<f64>>,
    pub residuals: IdentityResiduals,
}

struct SideAux {
    varsigma: Field,
    eta: Field,
    zeta: Option<Field>,
    res: IdentityResiduals,
}

fn spatial_jets(grid: &Grid, u: &Field, plans: &TanPlans) -> Jets {
    let dt = Field::zeros(grid, u.ncomp);
    let d1f = d1(grid, u);
    let dtan = (0..grid.dim - 1).map(|k| dtan_with(grid, u, k, plans)).collect();
    Jets { val: u.clone(), dt, d1: d1f, dtan }
}

fn side_aux(grid: &Grid, side: &BasicSide, w: &Field, params: &MaterialParams) -> Result<SideAux> {
    let d = grid.dim;
    let l = Layout::new(d);
    let n = l.n();
    let nt = grid.n_tan_total();
    let plans = TanPlans::new(grid.n_tan);
    let v = from_w(grid, side, w, params)?;
    let npts = grid.npts();
    // basic coefficients per node
    let mut rho_b = vec![0.0; npts];
    let mut c2_b = vec![0.0; npts];
    let mut fb = vec![[[0.0; 3]; 3]; npts];
    let mut nb = vec![[0.0; 3]; npts];
    let mut ld = Vec::with_capacity(npts);
    for node in 0..npts {
        let st = side.state(d, node);
        let (r, ev) = st.thermo(params)?;
        rho_b[node] = r;
        c2_b[node] = ev.c2;
        fb[node] = st.f;
        let lf = side.lift.derivs(grid, node / nt, node % nt);
        nb[node] = lf.normal(d);
        ld.push(lf);
    }
    let fjn_b = |node: usize, j: usize| (0..d).map(|i| fb[node][i][j] * nb[node][i]).sum::<f64>();

    // varsigma
    let x = Field::from_fn(grid, d, |_, _, _| {});
    let mut x = x;
    for node in 0..npts {
        for i in 0..d {
            x.data[node * d + i] = fb[node][i][0] / c2_b[node] * v.get(node, 0) + rho_b[node] * v.get(node, l.f(i, 0));
        }
    }
    let xj = spatial_jets(grid, &x, &plans);
    let xd = phi_differentials(grid, &xj, &side.lift)?;
    let mut varsigma = Field::zeros(grid, 1);
    for node in 0..npts {
        varsigma.data[node] = (0..d).map(|i| xd.dir(i).get(node, i)).sum();
    }

    // reconstruction of d_1 W_1
    let mut ab = Field::zeros(grid, 1);
    let mut bw = Field::zeros(grid, 1);
    let mut rw = Field::zeros(grid, 1);
    let mut y = Field::zeros(grid, d);
    for node in 0..npts {
        let f1n = fjn_b(node, 0);
        let nn: f64 = (0..d).map(|i| nb[node][i] * nb[node][i]).sum();
        let a = f1n / c2_b[node];
        let b = nn / f1n;
        ab.data[node] = a + b;
        bw.data[node] = b * w.get(node, d + 1);
        rw.data[node] = rho_b[node] * (2..=d).map(|j| ld[node].dtan[j - 2] * w.get(node, d + j)).sum::<f64>();
        for i in 1..d {
            y.data[node * d + i] = ld[node].d1 * x.get(node, i);
        }
    }
    let (dab, dbw, drw) = (d1(grid, &ab), d1(grid, &bw), d1(grid, &rw));
    let dy: Vec<Field> = (0..d - 1).map(|k| dtan_with(grid, &y, k, &plans)).collect();
    let dw = d1(grid, w);
    let mut res = IdentityResiduals::default();
    for node in 0..npts {
        let mut rhs = ld[node].d1 * varsigma.data[node];
        for i in 1..d {
            rhs -= dy[i - 1].get(node, i);
        }
        rhs -= dab.data[node] * w.get(node, 0);
        rhs += dbw.data[node] + drw.data[node];
        rhs /= ab.data[node];
        res.varsigma_id2 = res.varsigma_id2.max((dw.get(node, 0) - rhs).abs());
    }

    // eta (column 2) and zeta (column 3)
    let vj = spatial_jets(grid, &v, &plans);
    let vd = phi_differentials(grid, &vj, &side.lift)?;
    // d_1 F_i1 by the product rule on the W representation
    let mut q = Field::zeros(grid, 1);
    let mut dphi_f = Field::zeros(grid, d);
    for node in 0..npts {
        q.data[node] = 1.0 / (rho_b[node] * fjn_b(node, 0));
        for k in 1..d {
            dphi_f.data[node * d + k] = ld[node].dtan[k - 1];
        }
    }
    let dq = d1(grid, &q);
    let ddphi = d1(grid, &dphi_f);
    let d1f_col1 = |node: usize, i: usize| -> f64 {
        let diff = w.get(node, 0) - w.get(node, d + 1);
        let ddiff = dw.get(node, 0) - dw.get(node, d + 1);
        let f11 = q.data[node] * diff;
        let df11 = dq.data[node] * diff + q.data[node] * ddiff;
        if i == 0 {
            df11
        } else {
            dw.get(node, d + 1 + i) - ddphi.get(node, i) * f11 - ld[node].dtan[i - 1] * df11
        }
    };
    let col = |c: usize| -> (Field, f64, f64) {
        let mut out = Field::zeros(grid, d);
        let (mut r0, mut r1) = (0.0f64, 0.0f64);
        for node in 0..npts {
            for i in 0..d {
                let mut e = 0.0;
                for k in 0..d {
                    e += fb[node][k][0] * vd.dir(k).get(node, l.f(i, c)) - fb[node][k][c] * vd.dir(k).get(node, l.f(i, 0));
                }
                out.data[node * d + i] = e;
                let mut tan = 0.0;
                for ll in 1..d {
                    tan += fb[node][ll][0] * vj.dtan[ll - 1].get(node, l.f(i, c))
                        - fb[node][ll][c] * vj.dtan[ll - 1].get(node, l.f(i, 0));
                }
                let (f1n, fcn) = (fjn_b(node, 0), fjn_b(node, c));
                let id0 = (f1n * vj.d1.get(node, l.f(i, c)) - fcn * vj.d1.get(node, l.f(i, 0))) / ld[node].d1 + tan;
                r0 = r0.max((e - id0).abs());
                let rec = (ld[node].d1 * (e - tan) + fcn * d1f_col1(node, i)) / f1n;
                r1 = r1.max((dw.get(node, l.f(i, c)) - rec).abs());
            }
        }
        (out, r0, r1)
    };
    let (eta, e0, e1) = col(1);
    res.eta_id0 = e0;
    res.eta_id1 = e1;
    let zeta = if d == 3 {
        let (z, z0, z1) = col(2);
        res.zeta_id0 = z0;
        res.zeta_id1 = z1;
        Some(z)
    } else {
        None
    };
    let _ = n;
    Ok(SideAux { varsigma, eta, zeta, res })
}

/// Evaluate `varsigma`, `eta`, `zeta`, `R_j` and the reconstruction identity
/// residuals for W-fields `(w_plus, w_minus)` and front samples `psi`.
pub fn auxiliary_eval(basic: &BasicState, w_plus: &Field, w_minus: &Field, psi: &FrontSamples) -> Result<AuxiliaryQuantities> {
    let grid = &basic.grid;
    let params = &basic.params;
    let d = grid.dim;
    let l = Layout::new(d);
    let sp = side_aux(grid, &basic.plus, w_plus, params)?;
    let sm = side_aux(grid, &basic.minus, w_minus, params)?;
    let mut res = IdentityResiduals::default();
    for r in [&sp.res, &sm.res] {
        res.varsigma_id2 = res.varsigma_id2.max(r.varsigma_id2);
        res.eta_id0 = res.eta_id0.max(r.eta_id0);
        res.eta_id1 = res.eta_id1.max(r.eta_id1);
        res.zeta_id0 = res.zeta_id0.max(r.zeta_id0);
        res.zeta_id1 = res.zeta_id1.max(r.zeta_id1);
    }
    let nt = grid.n_tan_total();
    let mut rj = Vec::with_capacity(nt);
    for t in 0..nt {
        let b = basic.boundary_jet(t);
        let n = b.normal();
        let (j, _) = boundary_j(&b, 1.0, params)?;
        let vp = j * DVector::from_column_slice(w_plus.at(t));
        let fb = &b.plus.f;
        let mut row = Vec::with_capacity(d - 1);
        let mut fdotn = Vec::with_capacity(d - 1);
        for jj in 1..d {
            let fn_: f64 = (0..d).map(|i| vp[l.f(i, jj)] * n[i]).sum();
            let mut r = fn_;
            for i in 1..d {
                r -= fb[i][jj] * psi.phi_tan[i - 1][t];
            }
            row.push(r);
            fdotn.push(fn_);
        }
        // d psi = varrho adj(F_tan)^T (F_j . N - R_j)
        let vr = b.varrho()?;
        let rhs: Vec<f64> = if d == 2 {
            vec![(fdotn[0] - row[0]) / fb[1][1]]
        } else {
            let (a2, a3) = (fdotn[0] - row[0], fdotn[1] - row[1]);
            vec![vr * (fb[2][2] * a2 - fb[2][1] * a3), vr * (-fb[1][2] * a2 + fb[1][1] * a3)]
        };
        for k in 0..d - 1 {
            res.psi_id = res.psi_id.max((psi.phi_tan[k][t] - rhs[k]).abs());
        }
        rj.push(row);
    }
    let zeta = match (sp.zeta, sm.zeta) {
        (Some(a), Some(b)) => Some([a, b]),
        _ => None,
    };
    Ok(AuxiliaryQuantities { varsigma: [sp.varsigma, sm.varsigma], eta: [sp.eta, sm.eta], zeta, r: rj, residuals: res })
}

/// Boundary traces at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLevel {
    pub t: f64,
    /// `n_tan_total * n` values each.
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub psi: Vec<f64>,
    /// `n_tan_total * (2d + 1)` values.
    pub g: Vec<f64>,
}

/// Boundary-term pieces, max-norm over the boundary nodes at the newest level.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CancellationReport {
    pub beta: [usize; 3],
    pub q: f64,
    pub q1: f64,
    pub q2: f64,
    pub q1a: f64,
    pub q2a: f64,
    pub q2b: f64,
    pub q2c: f64,
    pub q2d: f64,
    pub remainder: f64,
    /// `max |Q1a + Q2d - remainder|`.
    pub cancellation: f64,
    /// `max |sum_j d_j W_{j+1}^+ + varrho^{-1} d varrho . d_0 F^+|`.
    pub key3b: f64,
    /// `max |d_0 psi - W_2^+ - d_1 v_N^+ psi - g_1|`.
    pub front: f64,
    /// Max residual of the algebraic boundary rows over the levels used.
    pub bc: f64,
}

/// Apply `D^beta` (time by backward differences, tangential by the grid rule)
/// to a per-level scalar trace. `levels[k]` holds `n_tan_total` values; the
/// newest level is last.
fn dbeta(grid: &Grid, levels: &[Vec<f64>], beta: [usize; 3], dt: f64) -> Result<Vec<f64>> {
    let need = beta[0] + if beta[0] > 0 { 2 } else { 1 };
    if levels.len() < need {
        return Err(Error::InsufficientHistory { needed: need, available: levels.len() });
    }
    let w = backward_weights(beta[0], dt);
    let nt = grid.n_tan_total();
    let mut acc = vec![0.0; nt];
    for (k, wk) in w.iter().enumerate() {
        let lv = &levels[levels.len() - 1 - k];
        for t in 0..nt {
            acc[t] += wk * lv[t];
        }
    }
    for (dir, &times) in [beta[1], beta[2]].iter().enumerate() {
        if dir + 1 >= grid.dim {
            continue;
        }
        for _ in 0..times {
            acc = dtan_slab(grid, &acc, 1, dir);
        }
    }
    Ok(acc)
}

/// Evaluate the boundary term `Q` and its pieces for the multi-index
/// `beta = (beta_t, beta_2, beta_3)` from a trace history at uniform step `dt`.
/// The basic state is taken as time independent over the window.
pub fn cancellation_check(basic: &BasicState, history: &[BoundaryLevel], dt: f64, beta: [usize; 3]) -> Result<CancellationReport> {
    let grid = &basic.grid;
    let d = grid.dim;
    let l = Layout::new(d);
    let n = l.n();
    let nt = grid.n_tan_total();
    let m = 2 * d + 1;
    let need = beta[0] + 4;
    if history.len() < need {
        return Err(Error::InsufficientHistory { needed: need, available: history.len() });
    }
    let hist = &history[history.len() - need..];
    let bj = basic.boundary_jets();
    let wt = backward_weights(1, dt);

    // per-level traces
    let trace = |lv: &BoundaryLevel, plus: bool, c: usize| -> Vec<f64> {
        let src = if plus { &lv.w_plus } else { &lv.w_minus };
        (0..nt).map(|t| src[t * n + c]).collect()
    };
    let mut bc: f64 = 0.0;
    for lv in hist {
        let psi_tan: Vec<Vec<f64>> = (0..d - 1).map(|k| dtan_slab(grid, &lv.psi, 1, k)).collect();
        for t in 0..nt {
            let mut pt = [0.0; 2];
            for k in 0..d - 1 {
                pt[k] = psi_tan[k][t];
            }
            let r = boundary_rows_w(
                &bj[t],
                &lv.w_plus[t * n..(t + 1) * n],
                &lv.w_minus[t * n..(t + 1) * n],
                lv.psi[t],
                0.0,
                pt,
                Some(&lv.g[t * m..(t + 1) * m]),
            )?;
            for x in &r[1..] {
                bc = bc.max(x.abs());
            }
        }
    }
    if bc > BC_PRECONDITION_TOL {
        return Err(Error::PreconditionResidualTooLarge { name: "boundary conditions".into(), value: bc });
    }

    // time derivative at level k >= 2 by three-point backward differences
    let tderiv = |k: usize, f: &dyn Fn(&BoundaryLevel) -> Vec<f64>| -> Vec<f64> {
        let (a, b, c) = (f(&hist[k]), f(&hist[k - 1]), f(&hist[k - 2]));
        (0..nt).map(|t| wt[0] * a[t] + wt[1] * b[t] + wt[2] * c[t]).collect()
    };
    let tan_of = |u: &[f64], k: usize| dtan_slab(grid, u, 1, k);
    // d_0 u = d_t u + sum v_i d_i u
    let d0 = |k: usize, f: &dyn Fn(&BoundaryLevel) -> Vec<f64>| -> Vec<f64> {
        let mut out = tderiv(k, f);
        let u = f(&hist[k]);
        for i in 1..d {
            let du = tan_of(&u, i - 1);
            for t in 0..nt {
                out[t] += bj[t].plus.v[i] * du[t];
            }
        }
        out
    };
    let rng = 2..need;
    let psi_f = |lv: &BoundaryLevel| lv.psi.clone();
    let d0psi: Vec<Vec<f64>> = rng.clone().map(|k| d0(k, &psi_f)).collect();

    let mut gv = Vec::with_capacity(nt);
    let mut rv = Vec::with_capacity(nt);
    let mut jf = Vec::with_capacity(nt);
    for b in &bj {
        gv.push(b.dvarrho()?);
        rv.push(b.varrho()?);
        jf.push(b.jump_f11());
    }
    let last = |f: &dyn Fn(&BoundaryLevel) -> Vec<f64>| -> Vec<Vec<f64>> { hist[2..].iter().map(f).collect() };
    let db = |lv: &[Vec<f64>]| dbeta(grid, lv, beta, dt);

    let w2p = db(&last(&|lv| trace(lv, true, 1)))?;
    let dpsi = db(&hist[2..].iter().map(|lv| lv.psi.clone()).collect::<Vec<_>>())?;
    let dd0psi = db(&d0psi)?;
    // c1 psi + g1
    let c1g = db(&last(&|lv| (0..nt).map(|t| bj[t].d1_vn_plus() * lv.psi[t] + lv.g[t * m]).collect()))?;
    let mut q1a = vec![0.0; nt];
    let mut q2d = vec![0.0; nt];
    let mut rem = vec![0.0; nt];
    for i in 1..d {
        for j in 1..d {
            let dfij = db(&last(&|lv| trace(lv, true, l.f(i, j))))?;
            for t in 0..nt {
                let c = 2.0 * jf[t] * gv[t][i][j] * dfij[t];
                q1a[t] += c * w2p[t];
                q2d[t] -= c * dd0psi[t];
                rem[t] -= c * c1g[t];
            }
        }
    }
    // Q, Q1, Q2
    let mut q1 = vec![0.0; nt];
    let mut q2 = vec![0.0; nt];
    let dw = |plus: bool, c: usize| db(&last(&|lv| trace(lv, plus, c)));
    let (w2p_, w2m) = (dw(true, 1)?, dw(false, 1)?);
    let (wd2p, wd2m) = (dw(true, d + 1)?, dw(false, d + 1)?);
    for t in 0..nt {
        q1[t] = 2.0 * (w2p_[t] * wd2p[t] - w2m[t] * wd2m[t]);
    }
    let mut q2a = vec![0.0; nt];
    let mut q2b = vec![0.0; nt];
    for j in 2..=d {
        let (ap, am) = (dw(true, j)?, dw(false, j)?);
        let (bp, bm) = (dw(true, d + j)?, dw(false, d + j)?);
        let dj_psi = db(&hist[2..].iter().map(|lv| tan_of(&lv.psi, j - 2)).collect::<Vec<_>>())?;
        let dj_w = db(&last(&|lv| tan_of(&trace(lv, true, j), j - 2)))?;
        for t in 0..nt {
            q2[t] -= 2.0 * rv[t] * (ap[t] * bp[t] - am[t] * bm[t]);
            q2a[t] += 2.0 * rv[t] * jf[t] * dj_psi[t] * ap[t];
            q2b[t] -= 2.0 * rv[t] * jf[t] * dpsi[t] * dj_w[t];
        }
    }
    // varrho^{-1} d varrho . d_0 F^+ per level, then Q2c
    let mut key_levels = Vec::new();
    for k in rng.clone() {
        let mut acc = vec![0.0; nt];
        for i in 1..d {
            for j in 1..d {
                let f = |lv: &BoundaryLevel| trace(lv, true, l.f(i, j));
                let d0f = d0(k, &f);
                for t in 0..nt {
                    acc[t] += gv[t][i][j] * d0f[t] / rv[t];
                }
            }
        }
        key_levels.push(acc);
    }
    let dkey = db(&key_levels)?;
    let mut q2c = vec![0.0; nt];
    for t in 0..nt {
        q2c[t] = 2.0 * rv[t] * jf[t] * dpsi[t] * dkey[t];
    }
    // key3b and the front residual at the newest level
    let top = hist.last().unwrap();
    let mut key3b = key_levels.last().unwrap().clone();
    for j in 2..=d {
        let dwj = tan_of(&trace(top, true, j), j - 2);
        for t in 0..nt {
            key3b[t] += dwj[t];
        }
    }
    let d0p = d0psi.last().unwrap();
    let mut front: f64 = 0.0;
    for t in 0..nt {
        let r = d0p[t] - top.w_plus[t * n + 1] - bj[t].d1_vn_plus() * top.psi[t] - top.g[t * m];
        front = front.max(r.abs());
    }
    let mx = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let q: Vec<f64> = (0..nt).map(|t| q1[t] + q2[t]).collect();
    let canc: Vec<f64> = (0..nt).map(|t| q1a[t] + q2d[t] - rem[t]).collect();
    Ok(CancellationReport {
        beta,
        q: mx(&q),
        q1: mx(&q1),
        q2: mx(&q2),
        q1a: mx(&q1a),
        q2a: mx(&q2a),
        q2b: mx(&q2b),
        q2c: mx(&q2c),
        q2d: mx(&q2d),
        remainder: mx(&rem),
        cancellation: mx(&canc),
        key3b: mx(&key3b),
        front,
        bc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::build_background;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn w_rows_match_bprime_through_j() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [2, 3] {
            let params = MaterialParams::gamma_law(d, 1.4).unwrap();
            for _ in 0..20 {
                let b = BoundaryBasicJet::random(&mut rng, &params).unwrap();
                let lin = BoundaryLinearJet::random(&mut rng, d);
                let (_, jpi) = boundary_j(&b, 1.0, &params).unwrap();
                let (_, jmi) = boundary_j(&b, -1.0, &params).unwrap();
                let wp = jpi * DVector::from_column_slice(&lin.v_plus);
                let wm = jmi * DVector::from_column_slice(&lin.v_minus);
                let a = bprime_e(&b, &lin).unwrap();
                let r = boundary_rows_w(&b, wp.as_slice(), wm.as_slice(), lin.psi, lin.psi_t, lin.psi_tan, None).unwrap();
                for (x, y) in a.iter().zip(&r) {
                    assert!((x - y).abs() < 1e-11 * (1.0 + x.abs()), "{a:?} {r:?}");
                }
            }
        }
    }

    #[test]
    fn background_third_row() {
        let params = MaterialParams::gamma_law(2, 1.4).unwrap();
        let bg = build_background([1.0, 1.0, 1.0], 0.5, 0.0, &params).unwrap();
        let g = Grid::new(2, 8, 8.0, 4).unwrap();
        let basic = BasicState::background(&g, &bg, &params).unwrap();
        let b = basic.boundary_jet(0);
        let mut lin = BoundaryLinearJet::zeros(2);
        let l = Layout::new(2);
        lin.v_plus[0] = 0.3;
        lin.v_minus[0] = 0.1;
        lin.v_plus[l.f(0, 0)] = 0.2;
        lin.v_plus[l.f(1, 1)] = 0.7;
        let r = bprime_e(&b, &lin).unwrap();
        let expect = 0.2 - bg.varrho() * 0.2 - bg.jump_f11() * (-1.0 / (bg.f22 * bg.f22)) * 0.7;
        assert!((r[3] - expect).abs() < 1e-14);
        assert!(basic.check_constraints(BASIC_CONSTRAINT_TOL).is_ok());
    }

    #[test]
    fn bprime_matches_difference_quotient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in [2, 3] {
            let params = MaterialParams::gamma_law(d, 1.4).unwrap();
            for _ in 0..10 {
                let b = BoundaryBasicJet::random(&mut rng, &params).unwrap();
                let lin = BoundaryLinearJet::random(&mut rng, d);
                let exact = bprime_e(&b, &lin).unwrap();
                let err = |eps: f64| {
                    let fd = bprime_fd(&b, &lin, eps, &params).unwrap();
                    fd.iter().zip(&exact).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
                };
                let (e1, e2) = (err(1e-3), err(5e-4));
                assert!(e1 < 1e-2, "d={d} err {e1}");
                assert!(e2 < 0.6 * e1 + 1e-9, "d={d} slope {e1} {e2}");
            }
        }
    }

    #[test]
    fn boundary_lift_reproduces_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3] {
            let params = MaterialParams::gamma_law(d, 1.4).unwrap();
            let b = BoundaryBasicJet::random(&mut rng, &params).unwrap();
            let g: Vec<f64> = (0..2 * d + 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (gp, gm) = solve_boundary_lift(&b, &g).unwrap();
            let lin = BoundaryLinearJet { v_plus: gp, v_minus: gm, psi: 0.0, psi_t: 0.0, psi_tan: [0.0; 2] };
            let r = bprime_e(&b, &lin).unwrap();
            for (x, y) in r.iter().zip(&g) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn good_unknowns_round_trip() {
        let params = MaterialParams::gamma_law(2, 1.4).unwrap();
        let bg = build_background([1.0, 1.0, 1.0], 0.5, 0.0, &params).unwrap();
        let g = Grid::new(2, 32, 8.0, 8).unwrap();
        let mut dir = vec![0.0; params.n_unknowns()];
        dir[1] = 1.0;
        dir[3] = 0.5;
        let bump = BumpSpec { amplitude: 0.05, center: 4.0, width: 2.0, mode: [1, 0], direction: dir };
        let basic = BasicState::perturbed(&g, &bg, &bump, &params).unwrap();
        let v = Field::from_fn(&g, params.n_unknowns(), |x1, xt, o| {
            for (c, oc) in o.iter_mut().enumerate() {
                *oc = (x1 * 0.3 + c as f64).sin() * (std::f64::consts::TAU * xt[0]).cos();
            }
        });
        let psi: Vec<f64> = (0..g.n_tan_total()).map(|t| (std::f64::consts::TAU * g.xtan(t)[0]).sin()).collect();
        let vd = good_unknowns(&g, &basic.plus, &v, &psi).unwrap();
        let back = from_good_unknowns(&g, &basic.plus, &vd, &psi).unwrap();
        assert!(back.axpby(1.0, &v, -1.0).max_abs() < 1e-14);
        let w = to_w(&g, &basic.minus, &v, &params).unwrap();
        let vv = from_w(&g, &basic.minus, &w, &params).unwrap();
        assert!(vv.axpby(1.0, &v, -1.0).max_abs() < 1e-12);
    }

    #[test]
    fn alinhac_residual_second_order() {
        let params = MaterialParams::gamma_law(2, 1.4).unwrap();
        let bg = build_background([1.0, 1.0, 1.0], 0.5, 0.0, &params).unwrap();
        let n = params.n_unknowns();
        let mut res = Vec::new();
        for n1 in [32, 64, 128] {
            let g = Grid::new(2, n1, 4.0, 8).unwrap();
            let mut dir = vec![0.0; n];
            dir[1] = 1.0;
            dir[Layout::new(2).f(1, 1)] = 0.5;
            // x'-independent bump: nonlinear coefficients stay resolved on the tangential grid
            let bump = BumpSpec { amplitude: 0.05, center: 1.5, width: 1.2, mode: [0, 0], direction: dir };
            let basic = BasicState::perturbed(&g, &bg, &bump, &params).unwrap();
            let v = Jets::from_fn(&g, n, 0.0, 1e-4, |t, x1, xt, o| {
                for (c, oc) in o.iter_mut().enumerate() {
                    *oc = (0.7 * x1 + 0.3 * c as f64 + t).sin() * (std::f64::consts::TAU * xt[0]).cos();
                }
            });
            let nt = g.n_tan_total();
            let psi: Vec<f64> = (0..nt).map(|t| 0.2 * (std::f64::consts::TAU * g.xtan(t)[0]).sin()).collect();
            let psi_t: Vec<f64> = (0..nt).map(|t| 0.1 * (std::f64::consts::TAU * g.xtan(t)[0]).cos()).collect();
            res.push(alinhac_residual(&g, &basic.plus, &v, &psi, &psi_t, &params).unwrap());
        }
        let o1 = (res[0] / res[1]).log2();
        let o2 = (res[1] / res[2]).log2();
        assert!(o1 > 1.8 && o2 > 1.8, "{res:?}");
    }

    fn smooth_w(g: &Grid, n: usize, shift: f64) -> Field {
        Field::from_fn(g, n, |x1, xt, o| {
            for (c, oc) in o.iter_mut().enumerate() {
                let k = 1.0 + 0.1 * c as f64;
                *oc = (k * x1 * 0.4 + shift).sin() * (0.5 + 0.3 * (std::f64::consts::TAU * (xt[0] + xt[1])).cos());
            }
        })
    }

    #[test]
    fn auxiliary_identities_converge() {
        for d in [2, 3] {
            let params = MaterialParams::gamma_law(d, 1.4).unwrap();
            let bg = build_background([1.0, 1.0, 1.0], 0.5, 0.0, &params).unwrap();
            let n = params.n_unknowns();
            let mut res = Vec::new();
            for n1 in [20, 40] {
                let g = Grid::new(d, n1, 4.0, 8).unwrap();
                let mut dir = vec![0.0; n];
                dir[Layout::new(d).f(0, 0)] = 1.0;
                dir[Layout::new(d).f(1, 0)] = 0.5;
                dir[n - 1] = 0.5;
                let bump = BumpSpec { amplitude: 0.1, center: 2.0, width: 1.5, mode: [1, 0], direction: dir };
                let basic = BasicState::perturbed(&g, &bg, &bump, &params).unwrap();
                let (wp, wm) = (smooth_w(&g, n, 0.0), smooth_w(&g, n, 0.4));
                let psi = FrontSamples::flat(&g);
                let aux = auxiliary_eval(&basic, &wp, &wm, &psi).unwrap();
                assert!(aux.residuals.eta_id0 < 1e-12);
                res.push((aux.residuals.varsigma_id2, aux.residuals.eta_id1));
            }
            assert!(res[0].0 > 1e-8, "{res:?}");
            assert!(res[1].0 < 0.35 * res[0].0, "{res:?}");
            assert!(res[1].1 < 0.35 * res[0].1 + 1e-12, "{res:?}");
        }
    }

    #[test]
    fn cancellation_exact_when_front_equation_holds() {
        let params = MaterialParams::gamma_law(2, 1.4).unwrap();
        let bg = build_background([1.0, 1.0, 1.0], 0.5, 0.0, &params).unwrap();
        let g = Grid::new(2, 16, 4.0, 8).unwrap();
        let basic = BasicState::background(&g, &bg, &params).unwrap();
        let n = params.n_unknowns();
        let nt = g.n_tan_total();
        let dt = 0.01;
        let bj = basic.boundary_jets();
        let w_at = |t: f64, x: f64, c: usize, s: f64| ((1.0 + c as f64) * t + std::f64::consts::TAU * x + s).sin();
        let mut hist: Vec<BoundaryLevel> = Vec::new();
        for k in 0..6 {
            let t = k as f64 * dt;
            let mut wp = vec![0.0; nt * n];
            let mut wm = vec![0.0; nt * n];
            let psi: Vec<f64> = (0..nt).map(|j| (t + std::f64::consts::TAU * g.xtan(j)[0]).cos()).collect();
            for j in 0..nt {
                for c in 0..n {
                    wp[j * n + c] = w_at(t, g.xtan(j)[0], c, 0.0);
                    wm[j * n + c] = w_at(t, g.xtan(j)[0], c, 0.7);
                }
            }
            let dpsi = dtan_slab(&g, &psi, 1, 0);
            let mut gv = vec![0.0; nt * 5];
            for j in 0..nt {
                let r = boundary_rows_w(&bj[j], &wp[j * n..(j + 1) * n], &wm[j * n..(j + 1) * n], psi[j], 0.0, [dpsi[j], 0.0], None).unwrap();
                gv[j * 5..(j + 1) * 5].copy_from_slice(&r);
            }
            hist.push(BoundaryLevel { t, w_plus: wp, w_minus: wm, psi, g: gv });
        }
        // make the front equation hold with the backward-difference d_t psi
        let wt = backward_weights(1, dt);
        for k in 2..hist.len() {
            for j in 0..nt {
                let pt = wt[0] * hist[k].psi[j] + wt[1] * hist[k - 1].psi[j] + wt[2] * hist[k - 2].psi[j];
                hist[k].g[j * 5] = pt - hist[k].w_plus[j * n + 1] - bj[j].d1_vn_plus() * hist[k].psi[j];
            }
        }
        let rep = cancellation_check(&basic, &hist, dt, [1, 1, 0]).unwrap();
        assert!(rep.q1a > 1e-3);
        assert!(rep.cancellation < 1e-9 * rep.q1a, "{rep:?}");
        assert!(rep.front < 1e-12);
        assert!(matches!(cancellation_check(&basic, &hist[..4], dt, [1, 0, 0]), Err(Error::InsufficientHistory { .. })));
    }
}
