//! Coefficient matrices of the symmetric hyperbolic system, their straightened
//! and congruence-transformed forms, and eigenstructure checks.
//!
//! Matrices are dense `n x n` with `n = d^2 + d + 2`, indexed by [`Layout`].
//! Symmetric matrices are assembled on the upper triangle and mirrored, so
//! `M == M^T` holds bit for bit.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::constitutive::{inverse, Layout, MaterialParams, ThermoState};
use crate::error::{Error, Result};

/// `A_0` and `A_1..A_d` at a state.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub a0: DMatrix<f64>,
    /// `a[i]` is `A_{i+1}`.
    pub a: Vec<DMatrix<f64>>,
}

/// Derivatives of a lifting function at a point.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize)]
pub struct LiftDerivs {
    pub dt: f64,
    pub d1: f64,
    /// `dtan[i]` is the derivative in `x_{i+2}`.
    pub dtan: [f64; 2],
}

impl LiftDerivs {
    /// Flat static front on side `sign` (`Phi = sign * x1`).
    pub fn flat(sign: f64) -> Self {
        LiftDerivs { dt: 0.0, d1: sign, dtan: [0.0; 2] }
    }

    /// `N = (1, -d_2 Phi, .., -d_d Phi)`.
    pub fn normal(&self, dim: usize) -> [f64; 3] {
        let mut n = [1.0, 0.0, 0.0];
        for i in 1..dim {
            n[i] = -self.dtan[i - 1];
        }
        n
    }
}

/// Front geometry: tangential gradient and speed of `phi`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize)]
pub struct FrontGeometry {
    pub dim: usize,
    pub grad: [f64; 2],
    pub dt: f64,
}

impl FrontGeometry {
    pub fn flat(dim: usize) -> Self {
        FrontGeometry { dim, grad: [0.0; 2], dt: 0.0 }
    }

    /// `N = (1, -d_2 phi, .., -d_d phi)`, with `N_1 = 1` exactly.
    pub fn normal(&self) -> [f64; 3] {
        let mut n = [1.0, 0.0, 0.0];
        for i in 1..self.dim {
            n[i] = -self.grad[i - 1];
        }
        n
    }

    pub fn normal_sq(&self) -> f64 {
        self.normal().iter().map(|x| x * x).sum()
    }
}

/// `v . N`.
pub fn v_n(state: &ThermoState, n: &[f64; 3]) -> f64 {
    (0..state.dim).map(|i| state.v[i] * n[i]).sum()
}

/// `F_jN = F_j . N` (column `j`, 0-based).
pub fn f_jn(state: &ThermoState, j: usize, n: &[f64; 3]) -> f64 {
    (0..state.dim).map(|i| state.f[i][j] * n[i]).sum()
}

fn mirror(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Assemble `A_0` and `A_i`.
pub fn assemble_a(state: &ThermoState, params: &MaterialParams) -> Result<SystemMatrices> {
    let d = params.dim;
    let l = Layout::new(d);
    let n = l.n();
    let (rho, ev) = state.thermo(params)?;
    let q = 1.0 / (rho * ev.c2);
    let mut a0 = DMatrix::zeros(n, n);
    a0[(0, 0)] = q;
    for i in 0..d {
        a0[(l.v(i), l.v(i))] = rho;
        for k in 0..d {
            a0[(l.f(i, k), l.f(i, k))] = rho * params.a[k];
        }
    }
    a0[(l.s(), l.s())] = 1.0;
    let mut a = Vec::with_capacity(d);
    for m in 0..d {
        let vm = state.v[m];
        let mut am = DMatrix::zeros(n, n);
        am[(0, 0)] = vm * q;
        am[(0, l.v(m))] = 1.0;
        for i in 0..d {
            am[(l.v(i), l.v(i))] = rho * vm;
            for k in 0..d {
                am[(l.f(i, k), l.f(i, k))] = rho * params.a[k] * vm;
                am[(l.v(i), l.f(i, k))] = -rho * params.a[k] * state.f[m][k];
            }
        }
        am[(l.s(), l.s())] = vm;
        mirror(&mut am);
        a.push(am);
    }
    Ok(SystemMatrices { a0, a })
}

/// Directional derivative `dA[V] = sum_l V_l dA/dU_l` of `A_0` and `A_i`.
pub fn assemble_a_directional(state: &ThermoState, dir: &[f64], params: &MaterialParams) -> Result<SystemMatrices> {
    let d = params.dim;
    let l = Layout::new(d);
    let n = l.n();
    let (rho, ev) = state.thermo(params)?;
    let finv = inverse(&state.f, d);
    let mut tr = 0.0;
    for i in 0..d {
        for j in 0..d {
            tr += finv[j][i] * dir[l.f(i, j)];
        }
    }
    let drho = -rho * tr;
    let dc2 = ev.c2_rho * drho + ev.c2_s * dir[l.s()];
    let q = 1.0 / (rho * ev.c2);
    let dq = -(ev.c2 * drho + rho * dc2) * q * q;

    let mut a0 = DMatrix::zeros(n, n);
    a0[(0, 0)] = dq;
    for i in 0..d {
        a0[(l.v(i), l.v(i))] = drho;
        for k in 0..d {
            a0[(l.f(i, k), l.f(i, k))] = drho * params.a[k];
        }
    }
    let mut a = Vec::with_capacity(d);
    for m in 0..d {
        let vm = state.v[m];
        let dvm = dir[l.v(m)];
        let mut am = DMatrix::zeros(n, n);
        am[(0, 0)] = dvm * q + vm * dq;
        for i in 0..d {
            am[(l.v(i), l.v(i))] = drho * vm + rho * dvm;
            for k in 0..d {
                am[(l.f(i, k), l.f(i, k))] = params.a[k] * (drho * vm + rho * dvm);
                am[(l.v(i), l.f(i, k))] = -params.a[k] * (drho * state.f[m][k] + rho * dir[l.f(m, k)]);
            }
        }
        am[(l.s(), l.s())] = dvm;
        mirror(&mut am);
        a.push(am);
    }
    Ok(SystemMatrices { a0, a })
}

fn check_lift(lift: &LiftDerivs) -> Result<()> {
    if !(lift.d1.abs() >= 1e-8) {
        return Err(Error::DegenerateLift { value: lift.d1.abs() });
    }
    Ok(())
}

/// `A1~ = (A_1 - d_t Phi A_0 - sum_{i>=2} d_i Phi A_i) / d_1 Phi`.
pub fn a1_tilde(m: &SystemMatrices, lift: &LiftDerivs) -> Result<DMatrix<f64>> {
    check_lift(lift)?;
    let mut out = &m.a[0] - &m.a0 * lift.dt;
    for i in 1..m.a.len() {
        out -= &m.a[i] * lift.dtan[i - 1];
    }
    out /= lift.d1;
    mirror(&mut out);
    Ok(out)
}

/// Convenience wrapper: assemble `A1~` directly from a state.
pub fn assemble_a1_tilde(state: &ThermoState, lift: &LiftDerivs, params: &MaterialParams) -> Result<DMatrix<f64>> {
    a1_tilde(&assemble_a(state, params)?, lift)
}

/// Spatial derivative jets of a state field at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct StateJet {
    pub dt: DVector<f64>,
    pub d1: DVector<f64>,
    /// `dtan[i]` is the derivative in `x_{i+2}`.
    pub dtan: Vec<DVector<f64>>,
}

impl StateJet {
    pub fn zeros(dim: usize) -> Self {
        let n = Layout::new(dim).n();
        StateJet { dt: DVector::zeros(n), d1: DVector::zeros(n), dtan: vec![DVector::zeros(n); dim - 1] }
    }
}

/// Matrix of the zeroth-order operator: `C(U, Phi) V = C V`, where column `l`
/// is `dA_0/dU_l d_t U + dA1~/dU_l d_1 U + sum_i dA_i/dU_l d_i U`.
pub fn c_matrix(
    state: &ThermoState,
    jet: &StateJet,
    lift: &LiftDerivs,
    params: &MaterialParams,
) -> Result<DMatrix<f64>> {
    let n = params.n_unknowns();
    let mut c = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for col in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[col] = 1.0;
        let dm = assemble_a_directional(state, &e, params)?;
        let da1t = a1_tilde(&dm, lift)?;
        let mut v = &dm.a0 * &jet.dt + &da1t * &jet.d1;
        for i in 1..params.dim {
            v += &dm.a[i] * &jet.dtan[i - 1];
        }
        c.set_column(col, &v);
    }
    Ok(c)
}

/// Apply `C(U, Phi)` to a vector.
pub fn c_operator(
    state: &ThermoState,
    jet: &StateJet,
    lift: &LiftDerivs,
    dir: &[f64],
    params: &MaterialParams,
) -> Result<DVector<f64>> {
    let dm = assemble_a_directional(state, dir, params)?;
    let da1t = a1_tilde(&dm, lift)?;
    let mut v = &dm.a0 * &jet.dt + &da1t * &jet.d1;
    for i in 1..params.dim {
        v += &dm.a[i] * &jet.dtan[i - 1];
    }
    Ok(v)
}

/// `rho F_1N` with `N` built from the lift.
pub fn rho_f1n(state: &ThermoState, lift: &LiftDerivs, params: &MaterialParams) -> Result<f64> {
    let rho = state.density()?;
    let n = lift.normal(params.dim);
    Ok(rho * f_jn(state, 0, &n))
}

/// Change of variables `V = J W` and its inverse.
pub fn j_matrices(
    state: &ThermoState,
    lift: &LiftDerivs,
    params: &MaterialParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = params.dim;
    let l = Layout::new(d);
    let n = l.n();
    let r = rho_f1n(state, lift, params)?;
    if !(r.abs() >= 1e-10) {
        return Err(Error::DegenerateF1N { value: r.abs() });
    }
    let mut j = DMatrix::identity(n, n);
    let mut ji = DMatrix::identity(n, n);
    let f11 = l.f(0, 0);
    j[(f11, 0)] = 1.0 / r;
    j[(f11, f11)] = -1.0 / r;
    ji[(f11, 0)] = 1.0;
    ji[(f11, f11)] = -r;
    for k in 1..d {
        let dk = lift.dtan[k - 1];
        j[(l.v(0), l.v(k))] = dk;
        ji[(l.v(0), l.v(k))] = -dk;
        j[(l.f(k, 0), 0)] = -dk / r;
        j[(l.f(k, 0), f11)] = dk / r;
        ji[(l.f(k, 0), f11)] = dk;
    }
    Ok((j, ji))
}

/// Symmetric congruence `J^T M J`, upper triangle mirrored.
pub fn congruence(j: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = j.transpose() * m * j;
    mirror(&mut out);
    out
}

/// Matrices of the W-form at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrices {
    pub n: usize,
    pub sign: f64,
    pub a0: DMatrix<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub a1_tilde: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub j_inv: DMatrix<f64>,
    /// `cal_a[0]` is `cal A_0`, `cal_a[i]` is `cal A_i` (with `cal A_1 = J^T A1~ J`).
    pub cal_a: Vec<DMatrix<f64>>,
    pub cal_a1a: DMatrix<f64>,
    pub bmat: DMatrix<f64>,
}

/// Boundary block `A(U, Phi) = diag(1, -rho F_1N I_{d-1})` placed on the
/// noncharacteristic positions, times `scale`, optionally inverted.
fn boundary_block(d: usize, r: f64, sign: f64, invert: bool) -> DMatrix<f64> {
    let l = Layout::new(d);
    let n = l.n();
    let mut m = DMatrix::zeros(n, n);
    for k in 0..d {
        let mut a = if k == 0 { 1.0 } else { -r };
        if invert {
            a = 1.0 / a;
        }
        m[(l.v(k), l.f(k, 0))] = sign * a;
        m[(l.f(k, 0), l.v(k))] = sign * a;
    }
    m
}

/// Assemble `J`, `J^{-1}`, `cal A_i`, the boundary part `cal A_1a` and `B`.
/// `sign` is `+1` for the plus side and `-1` for the minus side.
pub fn assemble_j_and_cal_a(
    state: &ThermoState,
    lift: &LiftDerivs,
    sign: f64,
    params: &MaterialParams,
) -> Result<CoefficientMatrices> {
    params.require_unit_elastic()?;
    let d = params.dim;
    let sys = assemble_a(state, params)?;
    let a1t = a1_tilde(&sys, lift)?;
    let (j, j_inv) = j_matrices(state, lift, params)?;
    let r = rho_f1n(state, lift, params)?;
    let mut cal_a = Vec::with_capacity(d + 1);
    cal_a.push(congruence(&j, &sys.a0));
    cal_a.push(congruence(&j, &a1t));
    for i in 1..d {
        cal_a.push(congruence(&j, &sys.a[i]));
    }
    Ok(CoefficientMatrices {
        n: params.n_unknowns(),
        sign,
        a0: sys.a0,
        a: sys.a,
        a1_tilde: a1t,
        j,
        j_inv,
        cal_a,
        cal_a1a: boundary_block(d, r, sign, false),
        bmat: boundary_block(d, r, 1.0, true),
    })
}

/// Derivatives of the matrix field `J` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixJet {
    pub dt: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub dtan: Vec<DMatrix<f64>>,
}

/// `cal A_4 = J^T (L J + C J)` from caller-supplied derivatives of `U` and `J`.
pub fn assemble_cal_a4(
    state: &ThermoState,
    jet: &StateJet,
    lift: &LiftDerivs,
    j: &DMatrix<f64>,
    j_jet: &MatrixJet,
    params: &MaterialParams,
) -> Result<DMatrix<f64>> {
    let sys = assemble_a(state, params)?;
    let a1t = a1_tilde(&sys, lift)?;
    let mut lj = &sys.a0 * &j_jet.dt + &a1t * &j_jet.d1;
    for i in 1..params.dim {
        lj += &sys.a[i] * &j_jet.dtan[i - 1];
    }
    let c = c_matrix(state, jet, lift, params)?;
    Ok(j.transpose() * (lj + c * j))
}

/// Hand-coded residual of the nonconservative system, scaled row by row to
/// match `A_0 d_t U + A_i d_i U`: the pressure row is divided by `rho c^2`
/// and the `F_ij` rows carry the factor `a_j`.
pub fn sym_form_residual(
    state: &ThermoState,
    du_dt: &[f64],
    du_dx: &[Vec<f64>],
    params: &MaterialParams,
) -> Result<Vec<f64>> {
    let d = params.dim;
    let l = Layout::new(d);
    let (rho, ev) = state.thermo(params)?;
    let v = &state.v;
    let mat = |g: &[f64], idx: usize| -> f64 { g[idx] };
    let material = |idx: usize| -> f64 {
        let mut acc = mat(du_dt, idx);
        for m in 0..d {
            acc += v[m] * du_dx[m][idx];
        }
        acc
    };
    let mut r = vec![0.0; l.n()];
    let mut div_v = 0.0;
    for m in 0..d {
        div_v += du_dx[m][l.v(m)];
    }
    r[0] = (material(0) + rho * ev.c2 * div_v) / (rho * ev.c2);
    for i in 0..d {
        let mut acc = rho * material(l.v(i)) + du_dx[i][0];
        for m in 0..d {
            for k in 0..d {
                acc -= rho * params.a[k] * state.f[m][k] * du_dx[m][l.f(i, k)];
            }
        }
        r[l.v(i)] = acc;
        for j in 0..d {
            let mut acc = rho * material(l.f(i, j));
            for m in 0..d {
                acc -= rho * state.f[m][j] * du_dx[m][l.v(i)];
            }
            r[l.f(i, j)] = params.a[j] * acc;
        }
    }
    r[l.s()] = material(l.s());
    Ok(r)
}

/// Cluster of numerically equal eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenCluster {
    pub value: f64,
    pub multiplicity: usize,
}

/// Result of the boundary-matrix eigenstructure check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenReport {
    pub dim: usize,
    pub plus_eigenvalues: Vec<f64>,
    pub minus_eigenvalues: Vec<f64>,
    pub plus_clusters: Vec<EigenCluster>,
    pub minus_clusters: Vec<EigenCluster>,
    /// Predicted `(fast, slow)` magnitudes per side.
    pub predicted_plus: (f64, f64),
    pub predicted_minus: (f64, f64),
    /// Counts `(negative, positive, zero)` of the doubled boundary matrix.
    pub doubled_signature: (usize, usize, usize),
}

/// Group sorted eigenvalues within `tol`.
pub fn cluster_eigenvalues(sorted: &[f64], tol: f64) -> Vec<EigenCluster> {
    let mut out: Vec<EigenCluster> = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && (sorted[end] - sorted[end - 1]).abs() <= tol {
            end += 1;
        }
        let mean = sorted[start..end].iter().sum::<f64>() / (end - start) as f64;
        out.push(EigenCluster { value: mean, multiplicity: end - start });
        start = end;
    }
    out
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// `d_t phi A_0 - N_l A_l` at a trace.
pub fn boundary_normal_matrix(state: &ThermoState, front: &FrontGeometry, params: &MaterialParams) -> Result<DMatrix<f64>> {
    let sys = assemble_a(state, params)?;
    let n = front.normal();
    let mut m = &sys.a0 * front.dt;
    for l in 0..params.dim {
        m -= &sys.a[l] * n[l];
    }
    mirror(&mut m);
    Ok(m)
}

fn check_pattern(clusters: &[EigenCluster], fast: f64, slow: f64, d: usize, tol: f64) -> Result<()> {
    let mut expected: Vec<(f64, usize)> = vec![(-fast, 1), (-slow, d - 1), (0.0, d * d - d + 2), (slow, d - 1), (fast, 1)];
    expected.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // merge expected entries that coincide (e.g. slow == 0)
    let mut merged: Vec<(f64, usize)> = Vec::new();
    for (v, m) in expected {
        if let Some(last) = merged.last_mut() {
            if (last.0 - v).abs() <= tol {
                last.1 += m;
                continue;
            }
        }
        merged.push((v, m));
    }
    if merged.len() != clusters.len() {
        return Err(Error::MultiplicityMismatch(format!(
            "expected {} distinct eigenvalues, found {}",
            merged.len(),
            clusters.len()
        )));
    }
    for ((v, m), c) in merged.iter().zip(clusters) {
        if (v - c.value).abs() > tol.max(1e-8) || *m != c.multiplicity {
            return Err(Error::MultiplicityMismatch(format!(
                "expected {v} x{m}, found {} x{}",
                c.value, c.multiplicity
            )));
        }
    }
    Ok(())
}

/// Diagonalize `d_t phi A_0 - N_l A_l` on both sides and check the predicted
/// pattern `{+-sqrt(|N|^2 + rho^2 sum F_lN^2) x1, +-rho sqrt(sum F_lN^2) x(d-1),
/// 0 x(d^2-d+2)}`, plus the signature of the doubled boundary matrix.
pub fn boundary_matrix_eigencheck(
    plus: &ThermoState,
    minus: &ThermoState,
    front: &FrontGeometry,
    params: &MaterialParams,
) -> Result<EigenReport> {
    params.require_unit_elastic()?;
    let d = params.dim;
    let n = front.normal();
    let nsq = front.normal_sq();
    let mut preds = Vec::new();
    let mut evs = Vec::new();
    let mut clusters = Vec::new();
    for st in [plus, minus] {
        let rho = st.density()?;
        let m_n = rho * (front.dt - v_n(st, &n));
        let scale = 1.0 + rho * (front.dt.abs() + v_n(st, &n).abs());
        if m_n.abs() > 1e-10 * scale {
            return Err(Error::MassFluxNonzero { value: m_n });
        }
        let sf: f64 = (0..d).map(|l| f_jn(st, l, &n).powi(2)).sum();
        let fast = (nsq + rho * rho * sf).sqrt();
        let slow = rho * sf.sqrt();
        let m = boundary_normal_matrix(st, front, params)?;
        let ev = sorted_eigenvalues(&m);
        let tol = 1e-8 * m.norm().max(1.0);
        let cl = cluster_eigenvalues(&ev, tol);
        check_pattern(&cl, fast, slow, d, tol)?;
        preds.push((fast, slow));
        evs.push(ev);
        clusters.push(cl);
    }
    // doubled system diag(M+, -M-)
    let mut doubled: Vec<f64> = evs[0].clone();
    doubled.extend(evs[1].iter().map(|x| -x));
    let tol = 1e-8 * doubled.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let neg = doubled.iter().filter(|&&x| x < -tol).count();
    let pos = doubled.iter().filter(|&&x| x > tol).count();
    let zero = doubled.len() - neg - pos;
    let minus_clusters = clusters.pop().unwrap();
    let plus_clusters = clusters.pop().unwrap();
    let minus_eigenvalues = evs.pop().unwrap();
    let plus_eigenvalues = evs.pop().unwrap();
    Ok(EigenReport {
        dim: d,
        plus_eigenvalues,
        minus_eigenvalues,
        plus_clusters,
        minus_clusters,
        predicted_plus: preds[0],
        predicted_minus: preds[1],
        doubled_signature: (neg, pos, zero),
    })
}

/// Write a matrix as CSV, row-major, 17 significant digits.
pub fn dump_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// Maximum absolute asymmetry `max |M - M^T|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye() -> [[f64; 3]; 3] {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    }

    #[test]
    fn a0_background_example() {
        let p = MaterialParams::gamma_law(2, 1.4).unwrap();
        let st = ThermoState::new(2, 1.0, [0.0; 3], eye(), 0.0);
        let m = assemble_a(&st, &p).unwrap();
        assert!((m.a0[(0, 0)] - 1.0 / 1.4).abs() < 1e-15);
        for i in 1..8 {
            assert_eq!(m.a0[(i, i)], 1.0);
        }
    }

    #[test]
    fn flat_lift_gives_a1() {
        let p = MaterialParams::gamma_law(2, 1.4).unwrap();
        let st = ThermoState::new(2, 1.1, [0.1, -0.2, 0.0], [[1.1, 0.2, 0.0], [0.1, 0.9, 0.0], [0.0; 3]], 0.1);
        let m = assemble_a(&st, &p).unwrap();
        assert_eq!(a1_tilde(&m, &LiftDerivs::flat(1.0)).unwrap(), m.a[0]);
        assert_eq!(a1_tilde(&m, &LiftDerivs::flat(-1.0)).unwrap(), -&m.a[0]);
        assert!(matches!(
            a1_tilde(&m, &LiftDerivs { d1: 1e-9, ..Default::default() }),
            Err(Error::DegenerateLift { .. })
        ));
    }

    #[test]
    fn eigen_examples() {
        let p = MaterialParams::gamma_law(2, 1.4).unwrap();
        let st = ThermoState::new(2, 1.0, [0.0; 3], eye(), 0.0);
        let r = boundary_matrix_eigencheck(&st, &st, &FrontGeometry::flat(2), &p).unwrap();
        let vals: Vec<(f64, usize)> = r.plus_clusters.iter().map(|c| (c.value, c.multiplicity)).collect();
        assert_eq!(vals.len(), 5);
        assert!((vals[0].0 + 2f64.sqrt()).abs() < 1e-12 && vals[0].1 == 1);
        assert!((vals[1].0 + 1.0).abs() < 1e-12 && vals[1].1 == 1);
        assert!(vals[2].0.abs() < 1e-12 && vals[2].1 == 4);
        assert_eq!(r.doubled_signature, (4, 4, 8));

        let p3 = MaterialParams::gamma_law(3, 1.4).unwrap();
        let st3 = ThermoState::new(3, 1.0, [0.0; 3], eye(), 0.0);
        let r3 = boundary_matrix_eigencheck(&st3, &st3, &FrontGeometry::flat(3), &p3).unwrap();
        let z = r3.plus_clusters.iter().find(|c| c.value.abs() < 1e-9).unwrap();
        assert_eq!(z.multiplicity, 8);
        assert_eq!(r3.doubled_signature, (6, 6, 16));
    }

    #[test]
    fn mass_flux_rejected() {
        let p = MaterialParams::gamma_law(2, 1.4).unwrap();
        let st = ThermoState::new(2, 1.0, [0.3, 0.0, 0.0], eye(), 0.0);
        let front = FrontGeometry::flat(2);
        assert!(matches!(
            boundary_matrix_eigencheck(&st, &st, &front, &p),
            Err(Error::MassFluxNonzero { .. })
        ));
    }

    #[test]
    fn j_inverse_round_trip() {
        let p = MaterialParams::gamma_law(3, 1.4).unwrap();
        let st = ThermoState::new(3, 1.0, [0.1, 0.2, 0.3], [[1.2, 0.1, 0.0], [0.1, 0.9, 0.05], [0.0, 0.1, 1.1]], 0.0);
        let lift = LiftDerivs { dt: 0.1, d1: 1.2, dtan: [0.3, -0.2] };
        let (j, ji) = j_matrices(&st, &lift, &p).unwrap();
        let e = &j * &ji - DMatrix::identity(14, 14);
        assert!(e.amax() < 1e-14);
    }

    #[test]
    fn j_flat_unit_pattern() {
        let p = MaterialParams::gamma_law(2, 1.4).unwrap();
        let st = ThermoState::new(2, 1.0, [0.0; 3], eye(), 0.0);
        let (j, _) = j_matrices(&st, &LiftDerivs::flat(1.0), &p).unwrap();
        let l = Layout::new(2);
        assert_eq!(j[(l.f(0, 0), 0)], 1.0);
        assert_eq!(j[(l.f(0, 0), l.f(0, 0))], -1.0);
        for i in 0..8 {
            for k in (i + 1)..8 {
                assert_eq!(j[(i, k)], 0.0);
            }
        }
    }
}
