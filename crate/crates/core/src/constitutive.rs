//! Thermodynamic state, equation of state and constitutive relations.
//!
//! The unknown vector is ordered as `U = (p, v_1..v_d, F_1, .., F_d, S)` where
//! `F_j` is the j-th column of the deformation gradient. [`Layout`] holds the
//! index map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference density. Fixed.
pub const RHO_REF: f64 = 1.0;

/// Index map of the unknown vector for dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub d: usize,
}

impl Layout {
    pub fn new(d: usize) -> Self {
        Layout { d }
    }
    /// Number of unknowns, `d^2 + d + 2`.
    pub fn n(&self) -> usize {
        self.d * self.d + self.d + 2
    }
    pub fn p(&self) -> usize {
        0
    }
    /// Velocity component `i` (0-based).
    pub fn v(&self, i: usize) -> usize {
        1 + i
    }
    /// Entry `F_ij` (0-based row `i`, column `j`), column-major blocks.
    pub fn f(&self, i: usize, j: usize) -> usize {
        1 + self.d + j * self.d + i
    }
    pub fn s(&self) -> usize {
        self.n() - 1
    }
}

/// Derivative data returned by an equation of state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EosValues {
    pub p: f64,
    /// Squared sound speed `p_rho`.
    pub c2: f64,
    /// Temperature `e_S`.
    pub theta: f64,
    pub e: f64,
    /// `d(c^2)/d rho` at fixed S.
    pub c2_rho: f64,
    /// `d(c^2)/dS` at fixed rho.
    pub c2_s: f64,
    /// `dp/dS` at fixed rho.
    pub p_s: f64,
}

/// Evaluation contract of an equation of state `e(rho, S)`.
pub trait EquationOfState {
    fn eval(&self, rho: f64, s: f64) -> Result<EosValues>;
    /// Entropy such that `p(rho, S) = p`.
    fn entropy_for_pressure(&self, rho: f64, p: f64) -> Result<f64>;
    /// Density such that `p(rho, S) = p`.
    fn density_for_pressure(&self, p: f64, s: f64) -> Result<f64>;
}

/// Built-in equations of state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Eos {
    /// `e = exp(S) rho^(gamma-1) / (gamma-1)`.
    GammaLaw { gamma: f64 },
}

impl Default for Eos {
    fn default() -> Self {
        Eos::GammaLaw { gamma: 1.4 }
    }
}

impl EquationOfState for Eos {
    fn eval(&self, rho: f64, s: f64) -> Result<EosValues> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidDensity { rho });
        }
        match *self {
            Eos::GammaLaw { gamma } => {
                let es = s.exp();
                let p = es * rho.powf(gamma);
                let e = es * rho.powf(gamma - 1.0) / (gamma - 1.0);
                let c2 = gamma * p / rho;
                Ok(EosValues {
                    p,
                    c2,
                    theta: e,
                    e,
                    c2_rho: (gamma - 1.0) * c2 / rho,
                    c2_s: c2,
                    p_s: p,
                })
            }
        }
    }

    fn entropy_for_pressure(&self, rho: f64, p: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::InvalidDensity { rho });
        }
        if !(p > 0.0) {
            return Err(Error::NegativeTargetPressure { value: p });
        }
        match *self {
            Eos::GammaLaw { gamma } => Ok((p / rho.powf(gamma)).ln()),
        }
    }

    fn density_for_pressure(&self, p: f64, s: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(Error::NegativeTargetPressure { value: p });
        }
        match *self {
            Eos::GammaLaw { gamma } => Ok((p * (-s).exp()).powf(1.0 / gamma)),
        }
    }
}

impl Eos {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Eos::GammaLaw { gamma } => {
                if !(gamma > 1.0) || !gamma.is_finite() {
                    return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {gamma}")));
                }
            }
        }
        Ok(())
    }
}

/// Material parameters: dimension, elastic coefficients `a_j` and the EOS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    pub dim: usize,
    pub a: Vec<f64>,
    pub eos: Eos,
}

impl MaterialParams {
    /// Unit elastic coefficients and the given EOS.
    pub fn new(dim: usize, eos: Eos) -> Result<Self> {
        let p = MaterialParams { dim, a: vec![1.0; dim], eos };
        p.validate()?;
        Ok(p)
    }

    pub fn gamma_law(dim: usize, gamma: f64) -> Result<Self> {
        Self::new(dim, Eos::GammaLaw { gamma })
    }

    pub fn with_coefficients(dim: usize, a: Vec<f64>, eos: Eos) -> Result<Self> {
        let p = MaterialParams { dim, a, eos };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        if self.a.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "expected {} elastic coefficients, got {}",
                self.dim,
                self.a.len()
            )));
        }
        if let Some(bad) = self.a.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("elastic coefficient must be positive, got {bad}")));
        }
        self.eos.validate()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.dim)
    }

    pub fn n_unknowns(&self) -> usize {
        self.layout().n()
    }

    /// True when all `a_j = 1`.
    pub fn is_unit_elastic(&self) -> bool {
        self.a.iter().all(|&x| x == 1.0)
    }

    /// Guard for modules whose formulas assume `a_j = 1`.
    pub fn require_unit_elastic(&self) -> Result<()> {
        if self.is_unit_elastic() {
            Ok(())
        } else {
            Err(Error::Unsupported("this operation requires unit elastic coefficients a_j = 1".into()))
        }
    }
}

/// Determinant of the leading `dim x dim` block.
pub fn det(f: &[[f64; 3]; 3], dim: usize) -> f64 {
    match dim {
        2 => f[0][0] * f[1][1] - f[0][1] * f[1][0],
        _ => {
            f[0][0] * (f[1][1] * f[2][2] - f[1][2] * f[2][1]) - f[0][1] * (f[1][0] * f[2][2] - f[1][2] * f[2][0])
                + f[0][2] * (f[1][0] * f[2][1] - f[1][1] * f[2][0])
        }
    }
}

/// Inverse of the leading `dim x dim` block (caller checks the determinant).
pub fn inverse(f: &[[f64; 3]; 3], dim: usize) -> [[f64; 3]; 3] {
    let dt = det(f, dim);
    let mut inv = [[0.0; 3]; 3];
    if dim == 2 {
        inv[0][0] = f[1][1] / dt;
        inv[0][1] = -f[0][1] / dt;
        inv[1][0] = -f[1][0] / dt;
        inv[1][1] = f[0][0] / dt;
    } else {
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                let (c, e) = ((i + 1) % 3, (i + 2) % 3);
                inv[i][j] = (f[a][c] * f[b][e] - f[a][e] * f[b][c]) / dt;
            }
        }
    }
    inv
}

/// `rho = rho_ref / det F`.
pub fn density_from_f(f: &[[f64; 3]; 3], dim: usize) -> Result<f64> {
    let d = det(f, dim);
    if !(d > 0.0) {
        return Err(Error::NonOrientationPreserving { det: d });
    }
    Ok(RHO_REF / d)
}

/// Evaluate the EOS: returns `(p, c^2, theta, e)` plus derivatives.
pub fn eos_eval(rho: f64, s: f64, params: &MaterialParams) -> Result<EosValues> {
    params.eos.eval(rho, s)
}

/// Pointwise thermodynamic state `U = (p, v, F, S)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermoState {
    pub dim: usize,
    pub p: f64,
    pub v: [f64; 3],
    /// `f[i][j] = F_ij`.
    pub f: [[f64; 3]; 3],
    pub s: f64,
}

impl ThermoState {
    pub fn new(dim: usize, p: f64, v: [f64; 3], f: [[f64; 3]; 3], s: f64) -> Self {
        ThermoState { dim, p, v, f, s }
    }

    /// State at rest with the given deformation and entropy; pressure from the EOS.
    pub fn at_rest(dim: usize, f: [[f64; 3]; 3], s: f64, params: &MaterialParams) -> Result<Self> {
        let rho = density_from_f(&f, dim)?;
        let p = eos_eval(rho, s, params)?.p;
        Ok(ThermoState { dim, p, v: [0.0; 3], f, s })
    }

    pub fn from_slice(dim: usize, u: &[f64]) -> Self {
        let l = Layout::new(dim);
        let mut v = [0.0; 3];
        let mut f = [[0.0; 3]; 3];
        for i in 0..dim {
            v[i] = u[l.v(i)];
            for j in 0..dim {
                f[i][j] = u[l.f(i, j)];
            }
        }
        ThermoState { dim, p: u[0], v, f, s: u[l.s()] }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let l = Layout::new(self.dim);
        let mut u = vec![0.0; l.n()];
        self.write_into(&mut u);
        u
    }

    pub fn write_into(&self, u: &mut [f64]) {
        let l = Layout::new(self.dim);
        u[0] = self.p;
        for i in 0..self.dim {
            u[l.v(i)] = self.v[i];
            for j in 0..self.dim {
                u[l.f(i, j)] = self.f[i][j];
            }
        }
        u[l.s()] = self.s;
    }

    pub fn det_f(&self) -> f64 {
        det(&self.f, self.dim)
    }

    pub fn density(&self) -> Result<f64> {
        density_from_f(&self.f, self.dim)
    }

    /// Density, squared sound speed and EOS data at this state.
    pub fn thermo(&self, params: &MaterialParams) -> Result<(f64, EosValues)> {
        let rho = self.density()?;
        let ev = eos_eval(rho, self.s, params)?;
        if !(ev.c2 > 0.0) {
            return Err(Error::InvalidParameter(format!("non-positive sound speed squared {}", ev.c2)));
        }
        Ok((rho, ev))
    }
}

/// `eps(F, S) = sum_ij a_j F_ij^2 / 2 + e(rho(F), S)`.
pub fn internal_energy(f: &[[f64; 3]; 3], s: f64, params: &MaterialParams) -> Result<f64> {
    let d = params.dim;
    let rho = density_from_f(f, d)?;
    let mut elastic = 0.0;
    for i in 0..d {
        for j in 0..d {
            elastic += 0.5 * params.a[j] * f[i][j] * f[i][j];
        }
    }
    Ok(elastic + eos_eval(rho, s, params)?.e)
}

/// Cauchy stress `T = rho F diag(a) F^T - p I`, symmetric by construction.
pub fn cauchy_stress(state: &ThermoState, params: &MaterialParams) -> Result<[[f64; 3]; 3]> {
    let d = params.dim;
    let rho = state.density()?;
    let mut t = [[0.0; 3]; 3];
    for i in 0..d {
        for k in i..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += params.a[j] * state.f[i][j] * state.f[k][j];
            }
            t[i][k] = rho * acc;
            t[k][i] = t[i][k];
        }
        t[i][i] -= state.p;
    }
    Ok(t)
}
