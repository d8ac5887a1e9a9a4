//! Time integration of the effective linear problem in W-variables on the
//! truncated straightened half-space, with the front equation for `psi`, the
//! characteristic boundary closure and the norm/energy ledger.
//!
//! Scheme: Heun (RK2) in time; in x1 a local Lax-Friedrichs flux on
//! unlimited MUSCL reconstructions, written as `d_1(A_1 W) - (d_1 A_1) W`;
//! tangential derivatives by the grid rule. At `x1 = 0` all components are
//! extrapolated from the interior and the `2d` incoming characteristic
//! components are then corrected so the `2d` jump conditions hold. At
//! `x1 = X_max` the last interior value is copied.

pub mod norms;
pub mod probes;
pub mod sources;

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{Layout, MaterialParams};
use crate::error::{Error, Result};
use crate::grid::{backward_weights, d1, dtan_slab, dtan_with, slab_sum, Field, Grid, TanPlans};
use crate::hyperbolic::{assemble_cal_a4, assemble_j_and_cal_a, MatrixJet};
use crate::interface::BackgroundState;
use crate::linearized::{auxiliary_eval, boundary_rows_w, BasicState, BoundaryBasicJet, BoundaryLevel, COND_LIMIT};
use crate::straightening::{linear_involution_residuals, FrontSamples, LinearResiduals};

use norms::{instant_norm_sq, l2_sq, spacetime_fractional_norm, NormKind, SpaceTimeNorm};
use sources::{CleanData, Sources};

fn default_cfl() -> f64 {
    0.4
}

fn default_record() -> usize {
    10
}

fn default_order() -> usize {
    1
}

/// Time stepping parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_final: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Fixed ratio `dt / h`; must respect the CFL limit.
    #[serde(default)]
    pub dt_over_h: Option<f64>,
    #[serde(default = "default_record")]
    pub record_every: usize,
}

impl TimeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !(self.cfl > 0.0) || self.record_every == 0 {
            return Err(Error::InvalidParameter("t_final, cfl and record_every must be positive".into()));
        }
        if let Some(k) = self.dt_over_h {
            if !(k > 0.0) {
                return Err(Error::InvalidParameter("dt_over_h must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Optional diagnostics recorded during a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    /// Order `s` of the space-time norms.
    #[serde(default = "default_order")]
    pub norm_order: usize,
    /// Keep the boundary traces of every level.
    #[serde(default)]
    pub keep_traces: bool,
    /// Track linearized involution drift on nodes `margin..=n1-margin`.
    #[serde(default)]
    pub involution_margin: Option<usize>,
    /// Record norms of the auxiliary quantities.
    #[serde(default)]
    pub auxiliary: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics { norm_order: 1, keep_traces: false, involution_margin: None, auxiliary: false }
    }
}

/// Row-major `n x n` matrices, either one shared matrix or one per point.
#[derive(Clone, Debug)]
struct Mats {
    n: usize,
    uniform: bool,
    data: Vec<f64>,
}

impl Mats {
    fn uniform(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut data = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                data[r * n + c] = m[(r, c)];
            }
        }
        Mats { n, uniform: true, data }
    }

    fn per_point(ms: &[DMatrix<f64>]) -> Self {
        let n = ms[0].nrows();
        let mut data = Vec::with_capacity(ms.len() * n * n);
        for m in ms {
            for r in 0..n {
                for c in 0..n {
                    data.push(m[(r, c)]);
                }
            }
        }
        Mats { n, uniform: false, data }
    }

    fn at(&self, idx: usize) -> &[f64] {
        let nn = self.n * self.n;
        if self.uniform {
            &self.data[..nn]
        } else {
            &self.data[idx * nn..(idx + 1) * nn]
        }
    }

    fn dmatrix(&self, idx: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, self.at(idx))
    }
}

/// `y += s * M x`.
fn matvec_add(m: &[f64], x: &[f64], y: &mut [f64], s: f64) {
    let n = x.len();
    for r in 0..n {
        let row = &m[r * n..(r + 1) * n];
        let mut acc = 0.0;
        for c in 0..n {
            acc += row[c] * x[c];
        }
        y[r] += s * acc;
    }
}

/// Generalized eigenpairs of `(M, A0)`, `A0` positive definite:
/// `M r = lambda A0 r`, eigenvalues ascending.
fn generalized_eigen(m: &DMatrix<f64>, a0: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let ch = a0.clone().cholesky().ok_or_else(|| Error::ConstraintViolated("A0 not positive definite".into()))?;
    let linv = ch.l().try_inverse().ok_or_else(|| Error::ConstraintViolated("singular Cholesky factor".into()))?;
    let mut s = &linv * m * linv.transpose();
    s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|a, b| eig.eigenvalues[*a].partial_cmp(&eig.eigenvalues[*b]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, idx[c])]);
    Ok((vals, linv.transpose() * q))
}

fn spectral_radius(m: &DMatrix<f64>, a0: &DMatrix<f64>) -> Result<f64> {
    let (v, _) = generalized_eigen(m, a0)?;
    Ok(v.iter().fold(0.0, |a, b| a.max(b.abs())))
}

/// W-form coefficients of one side.
#[derive(Clone, Debug)]
struct SideCoeffs {
    sign: f64,
    a0inv: Mats,
    atan: Vec<Mats>,
    a4: Option<Mats>,
    j: Mats,
    jt: Mats,
    /// On half nodes `i + 1/2`, index `i * nt + t`.
    a1h: Mats,
    a0h: Mats,
    alpha_h: Vec<f64>,
    /// `(A_1(i+1/2) - A_1(i-1/2)) / h` on nodes; `None` when constant.
    da1: Option<Mats>,
    lam1: f64,
    lam_tan: Vec<f64>,
}

impl SideCoeffs {
    fn build(grid: &Grid, basic: &BasicState, sign: f64) -> Result<Self> {
        let params = &basic.params;
        let d = grid.dim;
        let side = basic.side(sign);
        let nt = grid.n_tan_total();
        let uniform = basic.k == 0.0;
        let npts = if uniform { 1 } else { grid.npts() };
        let cms: Vec<Result<_>> = (0..npts)
            .into_par_iter()
            .map(|node| assemble_j_and_cal_a(&side.state(d, node), &side.lift_derivs(grid, node), sign, params))
            .collect();
        let cms: Vec<_> = cms.into_iter().collect::<Result<_>>()?;
        let pick = |f: &dyn Fn(&crate::hyperbolic::CoefficientMatrices) -> DMatrix<f64>| -> Mats {
            if uniform {
                Mats::uniform(&f(&cms[0]))
            } else {
                Mats::per_point(&cms.iter().map(f).collect::<Vec<_>>())
            }
        };
        let a0inv_list: Vec<DMatrix<f64>> = cms
            .iter()
            .map(|c| c.cal_a[0].clone().try_inverse().ok_or_else(|| Error::ConstraintViolated("singular A0".into())))
            .collect::<Result<_>>()?;
        let a0inv = if uniform { Mats::uniform(&a0inv_list[0]) } else { Mats::per_point(&a0inv_list) };
        let atan: Vec<Mats> = (1..d).map(|k| pick(&|c| c.cal_a[k + 1].clone())).collect();
        let j = pick(&|c| c.j.clone());
        let jt = pick(&|c| c.j.transpose());
        let h = grid.h();
        let mut lam_tan = vec![0.0; d - 1];
        let (a1h, a0h, alpha_h, da1, lam1, a4);
        if uniform {
            let a1 = &cms[0].cal_a[1];
            let a0 = &cms[0].cal_a[0];
            let al = spectral_radius(a1, a0)?;
            a1h = Mats::uniform(a1);
            a0h = Mats::uniform(a0);
            alpha_h = vec![al];
            da1 = None;
            lam1 = al;
            for k in 1..d {
                lam_tan[k - 1] = spectral_radius(&cms[0].cal_a[k + 1], a0)?;
            }
            a4 = None;
        } else {
            let nh = grid.n1 * nt;
            let half: Vec<Result<(DMatrix<f64>, DMatrix<f64>, f64)>> = (0..nh)
                .into_par_iter()
                .map(|hidx| {
                    let (i, t) = (hidx / nt, hidx % nt);
                    let (p, q) = (&cms[grid.node(i, t)], &cms[grid.node(i + 1, t)]);
                    let a1 = (&p.cal_a[1] + &q.cal_a[1]) * 0.5;
                    let a0 = (&p.cal_a[0] + &q.cal_a[0]) * 0.5;
                    let al = spectral_radius(&p.cal_a[1], &p.cal_a[0])?.max(spectral_radius(&q.cal_a[1], &q.cal_a[0])?);
                    Ok((a1, a0, al))
                })
                .collect();
            let half: Vec<_> = half.into_iter().collect::<Result<_>>()?;
            a1h = Mats::per_point(&half.iter().map(|x| x.0.clone()).collect::<Vec<_>>());
            a0h = Mats::per_point(&half.iter().map(|x| x.1.clone()).collect::<Vec<_>>());
            alpha_h = half.iter().map(|x| x.2).collect();
            lam1 = alpha_h.iter().fold(0.0f64, |a, b| a.max(*b));
            let n = params.n_unknowns();
            let zero = DMatrix::zeros(n, n);
            let da: Vec<DMatrix<f64>> = (0..grid.npts())
                .map(|node| {
                    let (i, t) = (node / nt, node % nt);
                    if i == 0 || i == grid.n1 {
                        return zero.clone();
                    }
                    (&half[i * nt + t].0 - &half[(i - 1) * nt + t].0) / h
                })
                .collect();
            da1 = Some(Mats::per_point(&da));
            for node in 0..grid.npts() {
                for k in 1..d {
                    lam_tan[k - 1] = lam_tan[k - 1].max(spectral_radius(&cms[node].cal_a[k + 1], &cms[node].cal_a[0])?);
                }
            }
            // A_4 from derivatives of J and of the basic state
            let mut jf = Field::zeros(grid, n * n);
            for node in 0..grid.npts() {
                for r in 0..n {
                    for c in 0..n {
                        jf.data[node * n * n + r * n + c] = cms[node].j[(r, c)];
                    }
                }
            }
            let plans = TanPlans::new(grid.n_tan);
            let jd1 = d1(grid, &jf);
            let jdt: Vec<Field> = (0..d - 1).map(|k| dtan_with(grid, &jf, k, &plans)).collect();
            let zero_dt = DMatrix::zeros(n, n);
            let a4s: Vec<Result<DMatrix<f64>>> = (0..grid.npts())
                .into_par_iter()
                .map(|node| {
                    let mj = |f: &Field| DMatrix::from_row_slice(n, n, f.at(node));
                    let jet = MatrixJet { dt: zero_dt.clone(), d1: mj(&jd1), dtan: jdt.iter().map(mj).collect() };
                    assemble_cal_a4(
                        &side.state(d, node),
                        &side.state_jet(d, node),
                        &side.lift_derivs(grid, node),
                        &cms[node].j,
                        &jet,
                        params,
                    )
                })
                .collect();
            let a4s: Vec<_> = a4s.into_iter().collect::<Result<_>>()?;
            a4 = Some(Mats::per_point(&a4s));
        }
        Ok(SideCoeffs { sign, a0inv, atan, a4, j, jt, a1h, a0h, alpha_h, da1, lam1, lam_tan })
    }

    fn alpha(&self, hidx: usize) -> f64 {
        if self.alpha_h.len() == 1 {
            self.alpha_h[0]
        } else {
            self.alpha_h[hidx]
        }
    }
}

/// Boundary closure data at one tangential node.
#[derive(Clone, Debug)]
struct BoundaryNode {
    jet: BoundaryBasicJet,
    /// Incoming eigenvectors (columns), `d` per side.
    r_plus: DMatrix<f64>,
    r_minus: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

fn incoming(c: &SideCoeffs, node: usize, d: usize) -> Result<DMatrix<f64>> {
    let nt_half0 = node; // half node 0 sits next to the boundary node
    let a1 = c.a1h.dmatrix(nt_half0);
    let a0 = c.a0h.dmatrix(nt_half0);
    let (vals, vecs) = generalized_eigen(&a1, &a0)?;
    let scale = vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let cols: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > 1e-9 * scale).collect();
    if cols.len() != d {
        return Err(Error::MultiplicityMismatch(format!("expected {d} incoming modes, found {}", cols.len())));
    }
    Ok(DMatrix::from_fn(vecs.nrows(), d, |r, k| vecs[(r, cols[k])]))
}

/// Static setup of a run.
#[derive(Clone, Debug)]
pub struct RunSetup {
    pub basic: BasicState,
    /// Background used for the energy weights and the involution residuals.
    pub background: BackgroundState,
    pub sources: Sources,
    pub initial: Option<CleanData>,
    pub time: TimeSpec,
    pub diagnostics: Diagnostics,
}

/// One column-labelled table of records.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Ledger {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Ledger {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            wr.write_record(r.iter().map(|x| format!("{x:.17e}"))).map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// End-of-run quantities.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub cfl_limit: f64,
    pub norm_order: usize,
    /// `|Vdot|_{H^s(Omega_T)}`.
    pub vdot_norm: f64,
    /// `|psi|_{H^{s+1/2}(omega_T)}`.
    pub psi_norm: f64,
    /// `|f|_{H^s(Omega_T)}`.
    pub f_norm: f64,
    /// `|g|_{H^{s+1/2}(omega_T)}`.
    pub g_norm: f64,
    /// `(vdot + psi) / (f + g)`, `None` for zero sources.
    pub ratio: Option<f64>,
    pub front_residual_max: f64,
    pub e_tan_gap_max: f64,
    pub drift: Option<[f64; 3]>,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ledger: Ledger,
    pub summary: RunSummary,
    pub traces: Vec<BoundaryLevel>,
    pub psi_history: Vec<Vec<f64>>,
    pub w: [Field; 2],
    pub psi: Vec<f64>,
}

/// Solver state.
pub struct Solver {
    pub grid: Grid,
    pub params: MaterialParams,
    pub setup: RunSetup,
    coeffs: [SideCoeffs; 2],
    bnodes: Vec<BoundaryNode>,
    plans: TanPlans,
    pub dt: f64,
    pub n_steps: usize,
    pub cfl_limit: f64,
    pub t: f64,
    pub step: usize,
    pub w: [Field; 2],
    pub psi: Vec<f64>,
}

impl Solver {
    pub fn new(setup: RunSetup) -> Result<Self> {
        let grid = setup.basic.grid.clone();
        let params = setup.basic.params.clone();
        let d = grid.dim;
        setup.time.validate()?;
        setup.sources.validate(&params)?;
        if let Some(c) = &setup.initial {
            c.validate(d)?;
        }
        setup.basic.check_constraints(crate::linearized::BASIC_CONSTRAINT_TOL)?;
        let coeffs = [SideCoeffs::build(&grid, &setup.basic, 1.0)?, SideCoeffs::build(&grid, &setup.basic, -1.0)?];
        let nt = grid.n_tan_total();
        let m = 2 * d;
        let mut bnodes = Vec::with_capacity(nt);
        for t in 0..nt {
            let jet = setup.basic.boundary_jet(t);
            let hidx = if coeffs[0].a1h.uniform { 0 } else { t };
            let r_plus = incoming(&coeffs[0], hidx, d)?;
            let r_minus = incoming(&coeffs[1], hidx, d)?;
            let mut mm = DMatrix::zeros(m, m);
            let n = params.n_unknowns();
            let zero = vec![0.0; n];
            for k in 0..m {
                let (wp, wm): (Vec<f64>, Vec<f64>) = if k < d {
                    (r_plus.column(k).iter().copied().collect(), zero.clone())
                } else {
                    (zero.clone(), r_minus.column(k - d).iter().copied().collect())
                };
                let rows = boundary_rows_w(&jet, &wp, &wm, 0.0, 0.0, [0.0; 2], None)?;
                for r in 0..m {
                    mm[(r, k)] = rows[r + 1];
                }
            }
            let sv = mm.clone().svd(false, false).singular_values;
            let cond = sv.max() / sv.min();
            if !(cond <= COND_LIMIT) {
                return Err(Error::SingularBoundarySystem { cond });
            }
            bnodes.push(BoundaryNode { jet, r_plus, r_minus, lu: mm.lu() });
        }
        let h = grid.h();
        let lam1 = coeffs[0].lam1.max(coeffs[1].lam1);
        let mut denom = lam1 / h;
        for k in 0..d - 1 {
            denom += coeffs[0].lam_tan[k].max(coeffs[1].lam_tan[k]) * grid.tan_wavenumber();
        }
        let cfl_limit = setup.time.cfl / denom;
        let dt0 = match setup.time.dt_over_h {
            Some(k) => {
                let dt = k * h;
                if dt > cfl_limit * (1.0 + 1e-12) {
                    return Err(Error::CflViolation { dt, limit: cfl_limit });
                }
                dt
            }
            None => cfl_limit,
        };
        let n_steps = (setup.time.t_final / dt0 - 1e-9).ceil().max(1.0) as usize;
        let dt = setup.time.t_final / n_steps as f64;
        let n = params.n_unknowns();
        let mut w = [Field::zeros(&grid, n), Field::zeros(&grid, n)];
        if let Some(c) = &setup.initial {
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let v = c.field(&grid, &setup.background, sign, &params)?;
                w[k] = Self::map_field(&grid, &v, |node| {
                    let jm = coeffs[k].j.dmatrix(if coeffs[k].j.uniform { 0 } else { node });
                    jm.try_inverse().unwrap_or_else(|| DMatrix::identity(n, n))
                });
            }
        }
        let psi = vec![0.0; nt];
        let plans = TanPlans::new(grid.n_tan);
        Ok(Solver { grid, params, setup, coeffs, bnodes, plans, dt, n_steps, cfl_limit, t: 0.0, step: 0, w, psi })
    }

    fn map_field<F: Fn(usize) -> DMatrix<f64> + Sync>(grid: &Grid, u: &Field, f: F) -> Field {
        let nc = u.ncomp;
        let mut out = Field::zeros(grid, nc);
        out.data.par_chunks_mut(nc).enumerate().for_each(|(node, o)| {
            let m = f(node);
            let r = m * DVector::from_column_slice(u.at(node));
            o.copy_from_slice(r.as_slice());
        });
        out
    }

    /// `Vdot = J W` on side index `k` (0 plus, 1 minus).
    pub fn to_vdot(&self, k: usize, w: &Field) -> Field {
        let c = &self.coeffs[k];
        let n = w.ncomp;
        let mut out = Field::zeros(&self.grid, n);
        out.data.par_chunks_mut(n).enumerate().for_each(|(node, o)| {
            matvec_add(c.j.at(node), w.at(node), o, 1.0);
        });
        out
    }

    /// Semi-discrete rate `dW/dt` of one side (zero on the end nodes).
    fn rate(&self, k: usize, w: &Field, t: f64) -> Field {
        let g = &self.grid;
        let c = &self.coeffs[k];
        let n = w.ncomp;
        let nt = g.n_tan_total();
        let n1 = g.n1;
        let h = g.h();
        let slab = nt * n;
        // MUSCL slopes
        let mut sig = vec![0.0; w.data.len()];
        sig.par_chunks_mut(slab).enumerate().for_each(|(i, s)| {
            let (lo, hi, f) = if i == 0 {
                (0, 1, 1.0)
            } else if i == n1 {
                (n1 - 1, n1, 1.0)
            } else {
                (i - 1, i + 1, 0.5)
            };
            for q in 0..slab {
                s[q] = f * (w.data[hi * slab + q] - w.data[lo * slab + q]);
            }
        });
        // fluxes on half nodes
        let mut flux = vec![0.0; n1 * slab];
        flux.par_chunks_mut(slab).enumerate().for_each(|(i, fl)| {
            let mut avg = vec![0.0; n];
            let mut jump = vec![0.0; n];
            for tt in 0..nt {
                let (a, b) = (g.node(i, tt), g.node(i + 1, tt));
                for q in 0..n {
                    let wl = w.data[a * n + q] + 0.5 * sig[a * n + q];
                    let wr = w.data[b * n + q] - 0.5 * sig[b * n + q];
                    avg[q] = 0.5 * (wl + wr);
                    jump[q] = wr - wl;
                }
                let hidx = i * nt + tt;
                let o = &mut fl[tt * n..(tt + 1) * n];
                matvec_add(c.a1h.at(hidx), &avg, o, 1.0);
                matvec_add(c.a0h.at(hidx), &jump, o, -0.5 * c.alpha(hidx));
            }
        });
        let dtan: Vec<Field> = (0..g.dim - 1).map(|q| dtan_with(g, w, q, &self.plans)).collect();
        let f = if self.setup.sources.has_interior(c.sign) {
            Some(self.setup.sources.interior_field(g, n, c.sign, t, false))
        } else {
            None
        };
        let mut out = Field::zeros(g, n);
        out.data.par_chunks_mut(slab).enumerate().for_each(|(i, o)| {
            if i == 0 || i == n1 {
                return;
            }
            let mut rhs = vec![0.0; n];
            for tt in 0..nt {
                let node = g.node(i, tt);
                let wn = w.at(node);
                for q in 0..n {
                    rhs[q] = -(flux[i * slab + tt * n + q] - flux[(i - 1) * slab + tt * n + q]) / h;
                }
                if let Some(da) = &c.da1 {
                    matvec_add(da.at(node), wn, &mut rhs, 1.0);
                }
                for (kk, m) in c.atan.iter().enumerate() {
                    matvec_add(m.at(node), dtan[kk].at(node), &mut rhs, -1.0);
                }
                if let Some(a4) = &c.a4 {
                    matvec_add(a4.at(node), wn, &mut rhs, -1.0);
                }
                if let Some(f) = &f {
                    matvec_add(c.jt.at(node), f.at(node), &mut rhs, 1.0);
                }
                matvec_add(c.a0inv.at(node), &rhs, &mut o[tt * n..(tt + 1) * n], 1.0);
            }
        });
        out
    }

    /// `d_t psi` from the first boundary row.
    fn psi_rate(&self, wp: &Field, psi: &[f64], t: f64) -> Vec<f64> {
        let g = &self.grid;
        let n = wp.ncomp;
        let m = 2 * g.dim + 1;
        let gv = self.setup.sources.boundary_values(g, t, false);
        let dpsi: Vec<Vec<f64>> = (0..g.dim - 1).map(|k| dtan_slab(g, psi, 1, k)).collect();
        (0..g.n_tan_total())
            .map(|tt| {
                let b = &self.bnodes[tt].jet;
                let mut r = wp.data[tt * n + 1] + b.d1_vn_plus() * psi[tt] + gv[tt * m];
                for i in 1..g.dim {
                    r -= b.plus.v[i] * dpsi[i - 1][tt];
                }
                r
            })
            .collect()
    }

    /// Extrapolate the end nodes and impose the `2d` jump conditions.
    fn close_boundary(&self, w: &mut [Field; 2], psi: &[f64], t: f64) -> Result<()> {
        let g = &self.grid;
        let n = w[0].ncomp;
        let nt = g.n_tan_total();
        let slab = nt * n;
        let n1 = g.n1;
        for f in w.iter_mut() {
            for q in 0..slab {
                f.data[n1 * slab + q] = f.data[(n1 - 1) * slab + q];
                f.data[q] = 2.0 * f.data[slab + q] - f.data[2 * slab + q];
            }
        }
        let d = g.dim;
        let m = 2 * d + 1;
        let gv = self.setup.sources.boundary_values(g, t, false);
        let dpsi: Vec<Vec<f64>> = (0..d - 1).map(|k| dtan_slab(g, psi, 1, k)).collect();
        for tt in 0..nt {
            let bn = &self.bnodes[tt];
            let mut pt = [0.0; 2];
            for k in 0..d - 1 {
                pt[k] = dpsi[k][tt];
            }
            let rows = boundary_rows_w(
                &bn.jet,
                &w[0].data[tt * n..(tt + 1) * n],
                &w[1].data[tt * n..(tt + 1) * n],
                psi[tt],
                0.0,
                pt,
                Some(&gv[tt * m..(tt + 1) * m]),
            )?;
            let rhs = DVector::from_iterator(2 * d, rows[1..].iter().map(|x| -x));
            let cvec = bn.lu.solve(&rhs).ok_or(Error::SingularBoundarySystem { cond: f64::INFINITY })?;
            for k in 0..d {
                for q in 0..n {
                    w[0].data[tt * n + q] += cvec[k] * bn.r_plus[(q, k)];
                    w[1].data[tt * n + q] += cvec[d + k] * bn.r_minus[(q, k)];
                }
            }
        }
        Ok(())
    }

    /// Boundary-condition residual (rows 2..2d+1) of the current state.
    pub fn boundary_residual(&self) -> Result<f64> {
        let g = &self.grid;
        let n = self.w[0].ncomp;
        let d = g.dim;
        let m = 2 * d + 1;
        let gv = self.setup.sources.boundary_values(g, self.t, false);
        let dpsi: Vec<Vec<f64>> = (0..d - 1).map(|k| dtan_slab(g, &self.psi, 1, k)).collect();
        let mut r: f64 = 0.0;
        for tt in 0..g.n_tan_total() {
            let mut pt = [0.0; 2];
            for k in 0..d - 1 {
                pt[k] = dpsi[k][tt];
            }
            let rows = boundary_rows_w(
                &self.bnodes[tt].jet,
                &self.w[0].data[tt * n..(tt + 1) * n],
                &self.w[1].data[tt * n..(tt + 1) * n],
                self.psi[tt],
                0.0,
                pt,
                Some(&gv[tt * m..(tt + 1) * m]),
            )?;
            r = rows[1..].iter().fold(r, |a, x| a.max(x.abs()));
        }
        Ok(r)
    }

    /// Advance one step.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let t0 = self.t;
        let t1 = t0 + dt;
        let k1 = [self.rate(0, &self.w[0], t0), self.rate(1, &self.w[1], t0)];
        let p1 = self.psi_rate(&self.w[0], &self.psi, t0);
        let mut w1 = [self.w[0].axpby(1.0, &k1[0], dt), self.w[1].axpby(1.0, &k1[1], dt)];
        let psi1: Vec<f64> = self.psi.iter().zip(&p1).map(|(a, b)| a + dt * b).collect();
        self.close_boundary(&mut w1, &psi1, t1)?;
        let k2 = [self.rate(0, &w1[0], t1), self.rate(1, &w1[1], t1)];
        let p2 = self.psi_rate(&w1[0], &psi1, t1);
        let mut wn = [Field::zeros(&self.grid, 0), Field::zeros(&self.grid, 0)];
        for s in 0..2 {
            let mut f = w1[s].axpby(1.0, &k2[s], dt);
            for (o, a) in f.data.iter_mut().zip(&self.w[s].data) {
                *o = 0.5 * (*o + a);
            }
            wn[s] = f;
        }
        let psin: Vec<f64> = (0..self.psi.len()).map(|q| 0.5 * (self.psi[q] + psi1[q] + dt * p2[q])).collect();
        self.close_boundary(&mut wn, &psin, t1)?;
        self.step += 1;
        if wn.iter().any(|f| f.data.iter().any(|x| !x.is_finite())) || psin.iter().any(|x| !x.is_finite()) {
            return Err(Error::NanDetected { step: self.step });
        }
        self.w = wn;
        self.psi = psin;
        self.t = if self.step == self.n_steps { self.setup.time.t_final } else { self.step as f64 * dt };
        Ok(())
    }

    /// Boundary traces of the current level.
    pub fn boundary_level(&self) -> BoundaryLevel {
        let n = self.w[0].ncomp;
        let nt = self.grid.n_tan_total();
        BoundaryLevel {
            t: self.t,
            w_plus: self.w[0].data[..nt * n].to_vec(),
            w_minus: self.w[1].data[..nt * n].to_vec(),
            psi: self.psi.clone(),
            g: self.setup.sources.boundary_values(&self.grid, self.t, false),
        }
    }

    fn energy_weights(&self) -> Result<[(DMatrix<f64>, f64, f64, f64); 2]> {
        let bg = &self.setup.background;
        let d = self.grid.dim;
        let mk = |sign: f64| -> Result<(DMatrix<f64>, f64, f64, f64)> {
            let st = bg.state(sign);
            let lift = crate::hyperbolic::LiftDerivs::flat(sign);
            let cm = assemble_j_and_cal_a(&st, &lift, sign, &self.params)?;
            let (rho, ev) = st.thermo(&self.params)?;
            let _ = d;
            Ok((cm.cal_a[0].clone(), rho, ev.c2, st.f[0][0]))
        };
        Ok([mk(1.0)?, mk(-1.0)?])
    }

    /// Run to the final time and collect the ledger.
    pub fn run(mut self) -> Result<RunOutput> {
        let g = self.grid.clone();
        let d = g.dim;
        let n = self.params.n_unknowns();
        let nt = g.n_tan_total();
        let s_ord = self.setup.diagnostics.norm_order;
        let diag = self.setup.diagnostics.clone();
        let dt = self.dt;
        let ew = self.energy_weights()?;
        let mut columns: Vec<String> = ["t", "w_l2", "w_h1", "w_tan1", "e_tan_0", "e_tan_t", "e_tan_x2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if d == 3 {
            columns.push("e_tan_x3".into());
        }
        for c in ["e_tan_gap", "vdot_hs", "f_hs", "psi_l2", "g_l2", "front_residual", "bc_residual"] {
            columns.push(c.into());
        }
        let involution = diag.involution_margin.is_some() && self.setup.initial.is_some() && self.setup.basic.k == 0.0;
        if involution {
            for c in ["drift_rho", "drift_inv1", "drift_inv2"] {
                columns.push(c.into());
            }
        }
        if diag.auxiliary {
            columns.push("varsigma_l2".into());
            columns.push("eta_l2".into());
            if d == 3 {
                columns.push("zeta_l2".into());
            }
        }
        let mut ledger = Ledger { columns, rows: Vec::new() };
        let mut vdot_st = [SpaceTimeNorm::new(s_ord, dt), SpaceTimeNorm::new(s_ord, dt)];
        let mut f_st = [SpaceTimeNorm::new(s_ord, dt), SpaceTimeNorm::new(s_ord, dt)];
        let mut psi_hist: Vec<Vec<f64>> = Vec::with_capacity(self.n_steps + 1);
        let mut g_hist: Vec<Vec<f64>> = Vec::with_capacity(self.n_steps + 1);
        let mut traces = Vec::new();
        // levels before t = 0 repeat the initial data (zero for source-driven runs)
        let mut w_hist: Vec<[Field; 2]> = vec![self.w.clone(); 3];
        let (mut psi_l2, mut g_l2) = (0.0, 0.0);
        let mut front_max: f64 = 0.0;
        let mut gap_max: f64 = 0.0;
        let mut drift_last = None;
        let r0: Option<[LinearResiduals; 2]> = if involution {
            let v0 = [self.to_vdot(0, &self.w[0]), self.to_vdot(1, &self.w[1])];
            Some([
                linear_involution_residuals(&g, &self.setup.background, 1.0, &v0[0], &self.params)?,
                linear_involution_residuals(&g, &self.setup.background, -1.0, &v0[1], &self.params)?,
            ])
        } else {
            None
        };
        let zero_sources = self.setup.sources.is_zero();
        let m_rows = 2 * d + 1;
        loop {
            let t = self.t;
            // level bookkeeping
            if self.step > 0 {
                w_hist.remove(0);
                w_hist.push(self.w.clone());
            }
            for k in 0..2 {
                let v = self.to_vdot(k, &self.w[k]);
                vdot_st[k].push(&g, v)?;
                let sign = if k == 0 { 1.0 } else { -1.0 };
                let f = self.setup.sources.interior_field(&g, n, sign, t, false);
                f_st[k].push(&g, f)?;
            }
            let gv = self.setup.sources.boundary_values(&g, t, false);
            let torus_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / nt as f64;
            psi_l2 += dt * torus_sq(&self.psi);
            g_l2 += dt * torus_sq(&gv);
            psi_hist.push(self.psi.clone());
            g_hist.push(gv.clone());
            if diag.keep_traces {
                traces.push(self.boundary_level());
            }
            // front residual with second-order backward differences of psi
            let mut front = 0.0f64;
            if psi_hist.len() >= 3 {
                let wt = backward_weights(1, dt);
                let k = psi_hist.len() - 1;
                let pt: Vec<f64> =
                    (0..nt).map(|q| wt[0] * psi_hist[k][q] + wt[1] * psi_hist[k - 1][q] + wt[2] * psi_hist[k - 2][q]).collect();
                let rate = self.psi_rate(&self.w[0], &self.psi, t);
                for q in 0..nt {
                    front = front.max((pt[q] - rate[q]).abs());
                }
                front_max = front_max.max(front);
            }
            let record = self.step % self.setup.time.record_every == 0 || self.step == self.n_steps;
            if record {
                let mut row = vec![t];
                let mut wl2 = 0.0;
                let mut wh1 = 0.0;
                let mut wt1 = 0.0;
                for k in 0..2 {
                    let lv: Vec<&Field> = w_hist.iter().map(|l| &l[k]).collect();
                    wl2 += l2_sq(&g, &self.w[k]);
                    wh1 += instant_norm_sq(&g, &lv, dt, 1, NormKind::Full)?;
                    wt1 += instant_norm_sq(&g, &lv, dt, 1, NormKind::Tangential)?;
                }
                row.extend([wl2.sqrt(), wh1.sqrt(), wt1.sqrt()]);
                // tangential energies, two evaluations
                let l = Layout::new(d);
                let mut e = vec![0.0; d + 1];
                let mut gap: f64 = 0.0;
                let wt = backward_weights(1, dt);
                for k in 0..2 {
                    let (a0, rho, c2, f11) = (&ew[k].0, ew[k].1, ew[k].2, ew[k].3);
                    let cur = &self.w[k];
                    let (p1, p2) = (&w_hist[1][k], &w_hist[0][k]);
                    let dtw = Field {
                        ncomp: n,
                        data: (0..cur.data.len())
                            .map(|q| wt[0] * cur.data[q] + wt[1] * p1.data[q] + wt[2] * p2.data[q])
                            .collect(),
                    };
                    let mut dws: Vec<Field> = vec![cur.clone(), dtw];
                    for q in 0..d - 1 {
                        dws.push(dtan_with(&g, cur, q, &self.plans));
                    }
                    for (b, dw) in dws.iter().enumerate() {
                        let quad = slab_sum(&g, |i| {
                            let mut acc = 0.0;
                            let mut tmp = vec![0.0; n];
                            for tt in 0..nt {
                                let x = dw.at(g.node(i, tt));
                                tmp.iter_mut().for_each(|z| *z = 0.0);
                                for r in 0..n {
                                    for c in 0..n {
                                        tmp[r] += a0[(r, c)] * x[c];
                                    }
                                }
                                acc += tmp.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                            }
                            acc * g.weight(i)
                        });
                        let expanded = slab_sum(&g, |i| {
                            let mut acc = 0.0;
                            for tt in 0..nt {
                                let x = dw.at(g.node(i, tt));
                                acc += x[0] * x[0] / (rho * c2);
                                acc += (x[0] - x[d + 1]).powi(2) / (rho * f11 * f11);
                                for jj in 1..=(d * d + d) {
                                    if jj != d + 1 {
                                        acc += rho * x[jj] * x[jj];
                                    }
                                }
                                acc += x[l.s()] * x[l.s()];
                            }
                            acc * g.weight(i)
                        });
                        e[b] += quad;
                        let scale = quad.abs().max(expanded.abs());
                        if scale > 0.0 {
                            gap = gap.max((quad - expanded).abs() / scale);
                        }
                    }
                }
                gap_max = gap_max.max(gap);
                row.extend(e.iter().copied());
                let vdot = (vdot_st[0].value().powi(2) + vdot_st[1].value().powi(2)).sqrt();
                let fn_ = (f_st[0].value().powi(2) + f_st[1].value().powi(2)).sqrt();
                row.extend([gap, vdot, fn_, psi_l2.sqrt(), g_l2.sqrt(), front, self.boundary_residual()?]);
                if let Some(r0) = &r0 {
                    let margin = diag.involution_margin.unwrap();
                    let lo = margin * nt;
                    let hi = (g.n1 + 1 - margin) * nt;
                    let mut dr = [0.0f64; 3];
                    for k in 0..2 {
                        let sign = if k == 0 { 1.0 } else { -1.0 };
                        let v = self.to_vdot(k, &self.w[k]);
                        let r = linear_involution_residuals(&g, &self.setup.background, sign, &v, &self.params)?;
                        let drift = |a: &Field, b: &Field| -> f64 {
                            let nc = a.ncomp;
                            a.data[lo * nc..hi * nc]
                                .iter()
                                .zip(&b.data[lo * nc..hi * nc])
                                .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
                        };
                        dr[0] = dr[0].max(drift(&r.rho, &r0[k].rho));
                        dr[1] = dr[1].max(drift(&r.inv1, &r0[k].inv1));
                        dr[2] = dr[2].max(drift(&r.inv2, &r0[k].inv2));
                    }
                    row.extend(dr);
                    drift_last = Some(dr);
                }
                if diag.auxiliary {
                    let pt = vec![0.0; nt];
                    let fs = FrontSamples::from_values(&g, self.psi.clone(), pt);
                    let aux = auxiliary_eval(&self.setup.basic, &self.w[0], &self.w[1], &fs)?;
                    row.push((l2_sq(&g, &aux.varsigma[0]) + l2_sq(&g, &aux.varsigma[1])).sqrt());
                    row.push((l2_sq(&g, &aux.eta[0]) + l2_sq(&g, &aux.eta[1])).sqrt());
                    if let Some(z) = &aux.zeta {
                        row.push((l2_sq(&g, &z[0]) + l2_sq(&g, &z[1])).sqrt());
                    }
                }
                ledger.rows.push(row);
            }
            if self.step == self.n_steps {
                break;
            }
            self.step()?;
        }
        let vdot_norm = (vdot_st[0].value().powi(2) + vdot_st[1].value().powi(2)).sqrt();
        let f_norm = (f_st[0].value().powi(2) + f_st[1].value().powi(2)).sqrt();
        let frac = s_ord as f64 + 0.5;
        let psi_norm = spacetime_fractional_norm(&g, &psi_hist, 1, dt, frac);
        let g_norm = spacetime_fractional_norm(&g, &g_hist, m_rows, dt, frac);
        let ratio = if zero_sources || f_norm + g_norm == 0.0 { None } else { Some((vdot_norm + psi_norm) / (f_norm + g_norm)) };
        let summary = RunSummary {
            steps: self.n_steps,
            dt,
            t_final: self.t,
            cfl_limit: self.cfl_limit,
            norm_order: s_ord,
            vdot_norm,
            psi_norm,
            f_norm,
            g_norm,
            ratio,
            front_residual_max: front_max,
            e_tan_gap_max: gap_max,
            drift: drift_last,
        };
        Ok(RunOutput { ledger, summary, traces, psi_history: psi_hist, w: self.w, psi: self.psi })
    }
}

/// Sidecar describing a raw snapshot file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub t: f64,
    pub dim: usize,
    pub n1: usize,
    pub n_tan: usize,
    pub x_max: f64,
    pub ncomp: usize,
    /// Axis order from slowest to fastest.
    pub order: Vec<String>,
    pub dtype: String,
}

/// Write `W` on both sides as little-endian `f64` plus a JSON sidecar.
pub fn write_snapshot(dir: &Path, stem: &str, grid: &Grid, t: f64, w: &[Field; 2]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut buf = Vec::with_capacity(16 * w[0].data.len());
    for f in w {
        for x in &f.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(dir.join(format!("{stem}.bin")), buf)?;
    let mut order: Vec<String> = vec!["side".into(), "x1".into()];
    if grid.dim == 3 {
        order.push("x3".into());
    }
    order.push("x2".into());
    order.push("component".into());
    let meta = SnapshotMeta {
        t,
        dim: grid.dim,
        n1: grid.n1,
        n_tan: grid.n_tan,
        x_max: grid.x_max,
        ncomp: w[0].ncomp,
        order,
        dtype: "f64-le".into(),
    };
    let js = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join(format!("{stem}.json")), js)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::sources::{InteriorSource, Side, TimeWindow};
    use super::*;
    use crate::interface::build_background;

    pub(crate) fn setup(n1: usize, n_tan: usize, sources: Sources, t_final: f64) -> RunSetup {
        let params = MaterialParams::gamma_law(2, 1.4).unwrap();
        let bg = build_background([1.0, 1.0, 1.0], 0.5, 0.0, &params).unwrap();
        let grid = Grid::new(2, n1, 4.0, n_tan).unwrap();
        let basic = BasicState::background(&grid, &bg, &params).unwrap();
        RunSetup {
            basic,
            background: bg,
            sources,
            initial: None,
            time: TimeSpec { t_final, cfl: 0.4, dt_over_h: None, record_every: 5 },
            diagnostics: Diagnostics::default(),
        }
    }

    pub(crate) fn smooth_source(n: usize) -> Sources {
        let mut amp = vec![0.0; n];
        amp[0] = 1.0;
        amp[1] = 0.5;
        Sources {
            interior: vec![InteriorSource {
                side: Side::Both,
                amplitude: amp,
                center: 1.0,
                width: 0.8,
                power: 4,
                mode: [1, 0],
                window: TimeWindow { center: 0.3, width: 0.3 },
            }],
            boundary: vec![],
        }
    }

    #[test]
    fn zero_stays_zero() {
        let out = Solver::new(setup(16, 8, Sources::default(), 0.3)).unwrap().run().unwrap();
        assert!(out.w.iter().all(|f| f.data.iter().all(|x| x.to_bits() == 0)));
        assert!(out.psi.iter().all(|x| x.to_bits() == 0));
        for r in &out.ledger.rows {
            assert!(r[1..].iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn smooth_source_run() {
        let s = setup(32, 8, smooth_source(8), 1.0);
        let out = Solver::new(s).unwrap().run().unwrap();
        let sm = &out.summary;
        eprintln!("{sm:?}");
        for r in &out.ledger.rows {
            eprintln!("{r:?}");
        }
        assert!(sm.vdot_norm.is_finite() && sm.vdot_norm > 0.0);
        assert!(sm.e_tan_gap_max <= 1e-12);
        let bc = out.ledger.column("bc_residual").unwrap();
        assert!(bc.iter().all(|x| *x < 1e-10), "{bc:?}");
    }
}
