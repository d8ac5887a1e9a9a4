//! Stability condition on the background stretches and the constants of the
//! tangential energy argument.

use num::{BigInt, BigRational, One};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::BackgroundState;

/// Stretch data entering the condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stretches {
    pub dim: usize,
    pub f11_plus: f64,
    pub f11_minus: f64,
    pub f22: f64,
    #[serde(default = "one")]
    pub f33: f64,
}

fn one() -> f64 {
    1.0
}

impl Stretches {
    pub fn from_background(bg: &BackgroundState) -> Self {
        Stretches { dim: bg.dim, f11_plus: bg.f11_plus, f11_minus: bg.f11_minus, f22: bg.f22, f33: bg.f33 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        let ok = self.f11_plus > self.f11_minus
            && self.f11_minus > 0.0
            && self.f22 > 0.0
            && (self.dim == 2 || self.f33 > 0.0);
        if !ok {
            return Err(Error::InvalidParameter("need F11+ > F11- > 0 and positive stretches".into()));
        }
        Ok(())
    }
}

/// Classification of the strict inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Satisfied,
    NotSatisfied,
    /// `lhs == rhs`; not satisfied, flagged for plotting.
    Boundary,
}

/// Evaluation of the stability condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub dim: usize,
    /// `[F_11] / F_11^+`.
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub satisfied: bool,
    pub classification: Classification,
    pub c_bar: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    /// `C2 C4 < (1 - C1)(1 - C3)` with `C1, C3 < 1` (`d = 3`).
    pub alternative_satisfied: Option<bool>,
}

/// The four `d = 3` constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants3 {
    pub c_bar: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// `d = 3` constants in floating point.
pub fn constants_3d(st: &Stretches) -> Constants3 {
    let (f11, f22, f33) = (st.f11_plus, st.f22, st.f33);
    let jump = st.f11_plus - st.f11_minus;
    let base = f11 * jump / (f22 * f33);
    let s32 = (1.0 + f33 * f33 / (f22 * f22)).sqrt();
    let s23 = (1.0 + f22 * f22 / (f33 * f33)).sqrt();
    let m22 = (f22 * f22 / (f11 * f11)).max(1.0);
    let m33 = (f33 * f33 / (f11 * f11)).max(1.0);
    let c_bar = s23 * ((f11 * f11 / (f22 * f22)).max(1.0) + (f11 * f11 / (f33 * f33)).max(1.0) * f33 / f22);
    Constants3 { c_bar, c1: s32 * m22 * base, c2: s32 * m33 * base, c3: s23 * m33 * base, c4: s23 * m22 * base }
}

fn classify(lhs: f64, rhs: f64) -> Classification {
    if lhs < rhs {
        Classification::Satisfied
    } else if lhs == rhs {
        Classification::Boundary
    } else {
        Classification::NotSatisfied
    }
}

/// Evaluate the condition for given stretches.
pub fn evaluate_stretches(st: &Stretches) -> Result<StabilityVerdict> {
    st.validate()?;
    let lhs = (st.f11_plus - st.f11_minus) / st.f11_plus;
    let mut v = StabilityVerdict {
        dim: st.dim,
        lhs,
        rhs: 0.0,
        margin: 0.0,
        satisfied: false,
        classification: Classification::NotSatisfied,
        c_bar: None,
        c0: None,
        c1: None,
        c2: None,
        c3: None,
        c4: None,
        alternative_satisfied: None,
    };
    if st.dim == 2 {
        v.rhs = st.f22 * st.f22 / (st.f11_plus * st.f11_plus);
        v.c0 = Some((st.f11_plus * st.f11_plus / (st.f22 * st.f22)).max(1.0) * lhs);
    } else {
        let c = constants_3d(st);
        v.rhs = 1.0 / c.c_bar;
        v.c_bar = Some(c.c_bar);
        v.c1 = Some(c.c1);
        v.c2 = Some(c.c2);
        v.c3 = Some(c.c3);
        v.c4 = Some(c.c4);
        v.alternative_satisfied = Some(c.c1 < 1.0 && c.c3 < 1.0 && c.c2 * c.c4 < (1.0 - c.c1) * (1.0 - c.c3));
    }
    v.margin = v.rhs - lhs;
    v.classification = classify(lhs, v.rhs);
    v.satisfied = v.classification == Classification::Satisfied;
    Ok(v)
}

/// Evaluate the condition for a background.
pub fn evaluate(bg: &BackgroundState) -> Result<StabilityVerdict> {
    evaluate_stretches(&Stretches::from_background(bg))
}

/// Threshold on `[F_11]/F_11^+` for `d = 3` with `F_22 = F_33 = f`.
pub fn isotropic_threshold_3d(f11_plus: f64, f: f64) -> f64 {
    1.0 / (2.0 * 2f64.sqrt() * (f11_plus * f11_plus / (f * f)).max(1.0))
}

/// Linear range `start..=stop` with `count` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Range {
    pub fn single(x: f64) -> Self {
        Range { start: x, stop: x, count: 1 }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.start];
        }
        (0..self.count)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / (self.count - 1) as f64)
            .collect()
    }
}

/// Sweep over ratios to `F_11^+` (taken as 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub dim: usize,
    /// `F_11^- / F_11^+`.
    pub f11_ratio: Range,
    /// `F_22 / F_11^+`.
    pub f22_ratio: Range,
    /// `F_33 / F_11^+`, ignored for `d = 2`.
    #[serde(default = "unit_range")]
    pub f33_ratio: Range,
}

fn unit_range() -> Range {
    Range::single(1.0)
}

/// One sweep row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub f11_ratio: f64,
    pub f22_ratio: f64,
    pub f33_ratio: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub satisfied: bool,
    pub boundary: bool,
}

/// Classify every grid point, ordered lexicographically in the parameters.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let r3 = if spec.dim == 3 { spec.f33_ratio.values() } else { vec![1.0] };
    let mut points = Vec::new();
    for a in spec.f11_ratio.values() {
        for b in spec.f22_ratio.values() {
            for &c in &r3 {
                points.push((a, b, c));
            }
        }
    }
    points.sort_by(|x, y| x.partial_cmp(y).unwrap());
    points
        .par_iter()
        .map(|&(a, b, c)| {
            let st = Stretches { dim: spec.dim, f11_plus: 1.0, f11_minus: a, f22: b, f33: c };
            let v = evaluate_stretches(&st)?;
            Ok(SweepRow {
                f11_ratio: a,
                f22_ratio: b,
                f33_ratio: c,
                lhs: v.lhs,
                rhs: v.rhs,
                margin: v.margin,
                satisfied: v.satisfied,
                boundary: v.classification == Classification::Boundary,
            })
        })
        .collect()
}

/// Write sweep rows as CSV.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Exact arithmetic for the `d = 3` constants.
///
/// Every constant has the form `q * sqrt(F_22^2 + F_33^2)` with `q` rational
/// when the stretches are rational, so products of two constants are rational.
pub mod exact {
    use super::*;

    /// Rational stretches `(F_11^+, F_11^-, F_22, F_33)`.
    #[derive(Clone, Debug, PartialEq)]
    pub struct RationalStretches {
        pub f11_plus: BigRational,
        pub f11_minus: BigRational,
        pub f22: BigRational,
        pub f33: BigRational,
    }

    /// Rational factors `q_k` with `C_k = q_k sqrt(F_22^2 + F_33^2)`.
    #[derive(Clone, Debug, PartialEq)]
    pub struct RationalConstants {
        pub q_bar: BigRational,
        pub q1: BigRational,
        pub q2: BigRational,
        pub q3: BigRational,
        pub q4: BigRational,
        /// `F_22^2 + F_33^2`.
        pub radicand: BigRational,
    }

    fn max(a: BigRational, b: BigRational) -> BigRational {
        if a >= b {
            a
        } else {
            b
        }
    }

    pub fn constants(s: &RationalStretches) -> RationalConstants {
        let (f11, f22, f33) = (&s.f11_plus, &s.f22, &s.f33);
        let jump = f11 - &s.f11_minus;
        let l = &jump / f11;
        let sq = |x: &BigRational| x * x;
        let m22 = max(sq(f11), sq(f22));
        let m33 = max(sq(f11), sq(f33));
        let one = BigRational::one();
        let q_bar = (max(one.clone(), sq(f11) / sq(f22)) + max(one, sq(f11) / sq(f33)) * f33 / f22) / f33;
        RationalConstants {
            q1: &m22 * &l / (sq(f22) * f33),
            q2: &m33 * &l / (sq(f22) * f33),
            q3: &m33 * &l / (f22 * sq(f33)),
            q4: &m22 * &l / (f22 * sq(f33)),
            q_bar,
            radicand: sq(f22) + sq(f33),
        }
    }

    /// `C1 C3` and `C2 C4`, both exactly rational.
    pub fn products(c: &RationalConstants) -> (BigRational, BigRational) {
        (&c.q1 * &c.q3 * &c.radicand, &c.q2 * &c.q4 * &c.radicand)
    }

    /// `d = 2` condition in the rearranged form `lhs (F_11^+)^2 < F_22^2`.
    pub fn satisfied_2d(f11_plus: &BigRational, f11_minus: &BigRational, f22: &BigRational) -> bool {
        let lhs = (f11_plus - f11_minus) / f11_plus;
        lhs * f11_plus * f11_plus < f22 * f22
    }

    /// Rational from a small fraction.
    pub fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }
}
