//! Wronskians of the ordered basis
//! `f0 = h - a`, `f1 = h^2 - a^2`, `f2 = sqrt(4-h^2) - sqrt(4-a^2)`,
//! `f3 = h sqrt(4-h^2) - a sqrt(4-a^2)` (anchor `a` = center level) and the
//! resulting extended-Chebyshev verdicts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{annulus, AnnulusSpec, AnnulusTag, Family, SystemParams};

/// Evaluation stays this far inside `(-2, 2)`.
pub const EDGE_CLAMP: f64 = 1e-9;

fn clamp(h: f64) -> f64 {
    h.clamp(-2.0 + EDGE_CLAMP, 2.0 - EDGE_CLAMP)
}

/// Basis function `f_j` at `h` for anchor `a`.
pub fn basis(j: usize, a: f64, h: f64) -> f64 {
    let sh = (4.0 - h * h).sqrt();
    let sa = (4.0 - a * a).sqrt();
    match j {
        0 => h - a,
        1 => h * h - a * a,
        2 => sh - sa,
        3 => h * sh - a * sa,
        _ => panic!("basis index {j} out of range"),
    }
}

/// Printed third Wronskian.
pub fn omega3_printed(a: f64, h: f64) -> f64 {
    let d = 4.0 - h * h;
    2.0 / d.powf(1.5) * (a * h.powi(3) - 6.0 * h * h + 16.0 - 2.0 * a * a) - 2.0 * (4.0 - a * a).sqrt()
}

/// Printed fourth Wronskian.
pub fn omega4_printed(a: f64, h: f64) -> f64 {
    let d = 4.0 - h * h;
    -24.0 / d.powi(3)
        * ((a * a - 2.0) * h * h - 4.0 * a * h + 16.0 - 2.0 * a * a
            + (4.0 - a * a).sqrt() * d.sqrt() * (-4.0 + a * h))
}

/// Printed X210 forms, written in `b`.
pub fn omega3_printed_x210(b: f64, h: f64) -> f64 {
    let b2 = b * b;
    let d = 4.0 - h * h;
    2.0 / d.powf(1.5) * ((2.0 - b2) * h.powi(3) - 6.0 * h * h - 2.0 * (-4.0 - 4.0 * b2 + b2 * b2))
        - 2.0 * b * (4.0 - b2).sqrt()
}

pub fn omega4_printed_x210(b: f64, h: f64) -> f64 {
    let b2 = b * b;
    let d = 4.0 - h * h;
    -24.0 / d.powi(3)
        * ((2.0 - 4.0 * b2 + b2 * b2) * h * h - 4.0 * (2.0 - b2) * h + 8.0 + 8.0 * b2 - 2.0 * b2 * b2
            + b * (4.0 - b2).sqrt() * d.sqrt() * (-4.0 + (2.0 - b2) * h))
}

fn omega3_anchor(a: f64, h: f64) -> f64 {
    let d = 4.0 - h * h;
    let s3 = d.powf(1.5);
    let t = (4.0 - a * a).sqrt();
    let p = a * h.powi(3) - 6.0 * h * h + 16.0 - 2.0 * a * a;
    if p > 0.0 {
        // P - S^3 T = 4 (a-h)^3 (a - h^3 + 3h) / (P + S^3 T)
        let num = 4.0 * (a - h).powi(3) * (a - h.powi(3) + 3.0 * h);
        2.0 * num / ((p + s3 * t) * s3)
    } else {
        2.0 * (p - s3 * t) / s3
    }
}

fn omega4_anchor(a: f64, h: f64) -> f64 {
    let d = 4.0 - h * h;
    let u = (a * a - 2.0) * h * h - 4.0 * a * h + 16.0 - 2.0 * a * a;
    let v = (4.0 - a * a).sqrt() * d.sqrt() * (a * h - 4.0);
    // U + V = 4 (a-h)^4 / (U - V), and U - V > 0 on (-2, 2)
    -96.0 * (a - h).powi(4) / (d.powi(3) * (u - v))
}

/// `Ω_i(h)` for the annulus anchor; `order` in `1..=4`.
pub fn omega(params: &SystemParams, spec: &AnnulusSpec, order: usize, h: f64) -> Result<f64> {
    let an = annulus(params, spec.tag)?;
    Ok(omega_at(an.center, order, h)?)
}

/// `Ω_i(h)` for an explicit anchor level.
pub fn omega_at(a: f64, order: usize, h: f64) -> Result<f64> {
    let h = clamp(h);
    match order {
        1 => Ok(h - a),
        2 => Ok((h - a) * (h - a)),
        3 => Ok(omega3_anchor(a, h)),
        4 => Ok(omega4_anchor(a, h)),
        _ => Err(Error::InvalidArgument(format!("Wronskian order must be 1..=4, got {order}"))),
    }
}

/// `Ω_3'(h) = -12 h (h - a)^2 / (4 - h^2)^(5/2)`.
pub fn omega3_derivative(params: &SystemParams, spec: &AnnulusSpec, h: f64) -> Result<f64> {
    let a = annulus(params, spec.tag)?.center;
    let h = clamp(h);
    Ok(-12.0 * h * (h - a).powi(2) / (4.0 - h * h).powf(2.5))
}

/// Derivative of order `r` (0..=3) by Ridders' extrapolation of central
/// differences, starting from step `s0`.
pub fn ridders_derivative<F: Fn(f64) -> f64>(f: &F, x: f64, r: usize, s0: f64) -> f64 {
    let stencil = |s: f64| -> f64 {
        match r {
            0 => f(x),
            1 => (f(x + s) - f(x - s)) / (2.0 * s),
            2 => (f(x + s) - 2.0 * f(x) + f(x - s)) / (s * s),
            3 => (f(x + 2.0 * s) - 2.0 * f(x + s) + 2.0 * f(x - s) - f(x - 2.0 * s)) / (2.0 * s * s * s),
            _ => panic!("derivative order {r} unsupported"),
        }
    };
    if r == 0 {
        return f(x);
    }
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 12;
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut s = s0;
    a[0][0] = stencil(s);
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        s /= CON;
        a[0][i] = stencil(s);
        let mut fac = CON2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (a[j][i] - a[j - 1][i]).abs().max((a[j][i] - a[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WronskianCheck {
    pub order: usize,
    pub h: f64,
    pub closed_form: f64,
    pub finite_difference: f64,
    pub abs_residual: f64,
    pub rel_residual: f64,
}

/// Smallest initial finite-difference step accepted.
pub const MIN_FD_STEP: f64 = 1e-6;

/// The `i x i` Wronskian of `f0..f_{i-1}` from numerical derivatives,
/// compared with [`omega`]. `step` is the initial extrapolation step; it
/// is shrunk automatically so the stencil stays inside `(-2, 2)`.
pub fn omega_vs_wronskian(
    params: &SystemParams,
    spec: &AnnulusSpec,
    order: usize,
    h: f64,
    step: f64,
) -> Result<WronskianCheck> {
    let a = annulus(params, spec.tag)?.center;
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidArgument(format!("Wronskian order must be 1..=4, got {order}")));
    }
    let room = (2.0 - h.abs()) / 4.0;
    let s0 = step.min(room);
    if !(s0 >= MIN_FD_STEP) {
        return Err(Error::StepTooSmall(s0));
    }
    let mut m = nalgebra::DMatrix::<f64>::zeros(order, order);
    for col in 0..order {
        let f = |x: f64| basis(col, a, x);
        for row in 0..order {
            m[(row, col)] = ridders_derivative(&f, h, row, s0);
        }
    }
    let fd = m.determinant();
    let cf = omega_at(a, order, h)?;
    let abs = (fd - cf).abs();
    Ok(WronskianCheck {
        order,
        h,
        closed_form: cf,
        finite_difference: fd,
        abs_residual: abs,
        rel_residual: if cf == 0.0 { abs } else { abs / cf.abs() },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "FullECT")]
    FullEct,
    /// ECT between the center and `d`, with `d ∈ [d_lo, d_hi]`.
    #[serde(rename = "PartialECT")]
    PartialEct { d_lo: f64, d_hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EctVerdict {
    pub annulus: AnnulusSpec,
    pub verdict: Verdict,
    /// Decimated `(h, sign Ω3)` samples from the scan.
    pub witness: Vec<(f64, i8)>,
    /// Whether the scan agrees with the sign structure implied by the roots
    /// `0` and `a` of `Ω3'`.
    pub analytic_agreement: bool,
}

impl EctVerdict {
    /// Subinterval on which the basis is an ECT-system.
    pub fn ect_interval(&self) -> (f64, f64) {
        let an = &self.annulus;
        match self.verdict {
            Verdict::FullEct => an.interval(),
            Verdict::PartialEct { d_lo, d_hi } => {
                if an.center == an.lo {
                    (an.lo, d_lo)
                } else {
                    (d_hi, an.hi)
                }
            }
        }
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Refines a sign change of `f` on `[lo, hi]` to width `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let slo = sign(f(lo));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let sm = sign(f(mid));
        if sm == slo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

pub const DEFAULT_SCAN: usize = 1000;

pub fn ect_verdict(params: &SystemParams, spec: &AnnulusSpec) -> Result<EctVerdict> {
    ect_verdict_with_grid(params, spec, DEFAULT_SCAN)
}

/// Scan of `Ω1..Ω4` on `n` interior points, with every sign change of any
/// Wronskian refined by bisection; the sign change nearest to the center
/// bounds the ECT subinterval.
pub fn ect_verdict_with_grid(params: &SystemParams, spec: &AnnulusSpec, n: usize) -> Result<EctVerdict> {
    let an = annulus(params, spec.tag)?;
    let a = an.center;
    let hs: Vec<f64> = (1..=n).map(|k| an.lo + an.width() * k as f64 / (n + 1) as f64).collect();
    let signs: Vec<[i8; 4]> = hs
        .par_iter()
        .map(|&h| {
            let mut s = [0i8; 4];
            for (o, slot) in s.iter_mut().enumerate() {
                *slot = sign(omega_at(a, o + 1, h).expect("order in range"));
            }
            s
        })
        .collect();
    // sign changes, walking away from the center
    let order: Vec<usize> = if a == an.lo { (0..n).collect() } else { (0..n).rev().collect() };
    let mut first_change: Option<(f64, f64)> = None;
    for o in 0..4 {
        let mut prev: Option<usize> = None;
        for &k in &order {
            if signs[k][o] == 0 {
                continue;
            }
            if let Some(p) = prev {
                if signs[p][o] != signs[k][o] {
                    let (x0, x1) = if hs[p] < hs[k] { (hs[p], hs[k]) } else { (hs[k], hs[p]) };
                    let br = bisect(|h| omega_at(a, o + 1, h).unwrap(), x0, x1, 1e-12);
                    let closer = match first_change {
                        None => true,
                        Some((lo, _)) => (br.0 - a).abs() < (lo - a).abs(),
                    };
                    if closer {
                        first_change = Some(br);
                    }
                    break;
                }
            }
            prev = Some(k);
        }
    }
    let verdict = match first_change {
        None => Verdict::FullEct,
        Some((d_lo, d_hi)) => Verdict::PartialEct { d_lo, d_hi },
    };
    let predicted_partial = an.tag != AnnulusTag::Minus && a < 0.0;
    let mut analytic_agreement = predicted_partial == matches!(verdict, Verdict::PartialEct { .. });
    if let Verdict::PartialEct { d_lo, .. } = verdict {
        // Ω3 decreases on (0, 2) and is positive at 0, so d must exceed 0
        analytic_agreement &= d_lo > 0.0 && omega_at(a, 3, 0.0)? > 0.0;
    }
    let stride = (n / 64).max(1);
    let witness = hs
        .iter()
        .zip(&signs)
        .step_by(stride)
        .map(|(&h, s)| (h, s[2]))
        .collect();
    Ok(EctVerdict {
        annulus: an,
        verdict,
        witness,
        analytic_agreement,
    })
}

/// Verdicts for every annulus of the family.
pub fn ect_verdicts(params: &SystemParams) -> Result<Vec<EctVerdict>> {
    params.annuli().iter().map(|a| ect_verdict(params, a)).collect()
}

/// Whether the analytic case split predicts a partial verdict.
pub fn expects_partial(params: &SystemParams, tag: AnnulusTag) -> bool {
    match (params.family(), tag) {
        (Family::X29, AnnulusTag::Plus) => params.b().powi(2) + params.c().powi(2) > 4.0,
        (Family::X210, AnnulusTag::Single) => params.b() > std::f64::consts::SQRT_2,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plus(p: &SystemParams) -> AnnulusSpec {
        annulus(p, AnnulusTag::Plus).unwrap()
    }

    #[test]
    fn low_order_wronskians() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        let up = plus(&p);
        assert_eq!(omega(&p, &up, 1, up.center).unwrap(), 0.0);
        for h in up.grid(200, 0.0) {
            let o1 = omega(&p, &up, 1, h).unwrap();
            assert_eq!(omega(&p, &up, 2, h).unwrap(), o1 * o1);
        }
        assert!(omega(&p, &up, 3, up.center).unwrap().abs() < 1e-15);
        assert!(omega(&p, &up, 5, 1.9).is_err());
    }

    #[test]
    fn stable_forms_match_printed_forms() {
        for a in [-1.7f64, -0.3, 0.4, 1.732] {
            for h in [-1.9f64, -1.0, 0.0, 0.7, 1.5, 1.95] {
                if (h - a).abs() < 0.2 {
                    continue;
                }
                let o3 = omega_at(a, 3, h).unwrap();
                let o4 = omega_at(a, 4, h).unwrap();
                assert!((o3 - omega3_printed(a, h)).abs() < 1e-11 * (1.0 + o3.abs()), "{a} {h}");
                assert!((o4 - omega4_printed(a, h)).abs() < 1e-10 * (1.0 + o4.abs()), "{a} {h}");
            }
        }
    }

    #[test]
    fn x210_printed_forms_are_anchor_forms() {
        for b in [0.5, 1.0, 1.5, 1.8] {
            let a = 2.0 - b * b;
            for h in [a + 0.1, 0.5 * (a + 2.0), 1.95] {
                assert!((omega3_printed_x210(b, h) - omega3_printed(a, h)).abs() < 1e-10);
                let o4 = omega4_printed(a, h);
                assert!((omega4_printed_x210(b, h) - o4).abs() < 1e-10 * (1.0 + o4.abs()));
            }
        }
    }

    #[test]
    fn omega4_has_only_the_fourfold_anchor_zero() {
        let p = SystemParams::x29(0.5, 1.5).unwrap();
        for an in p.annuli() {
            for h in an.grid(100, 0.01) {
                let r = omega(&p, &an, 4, h).unwrap() / (h - an.center).powi(4);
                assert!(r < -1e-3, "{r}");
            }
        }
    }

    #[test]
    fn omega3_derivative_signs() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        let up = plus(&p);
        assert_eq!(omega3_derivative(&p, &up, 0.0).unwrap(), 0.0);
        assert_eq!(omega3_derivative(&p, &up, up.center).unwrap(), 0.0);
        for h in [0.1, 1.0, 1.99] {
            assert!(omega3_derivative(&p, &up, h).unwrap() < 0.0);
        }
        for h in [1.8, 1.9] {
            let fd = ridders_derivative(&|x| omega(&p, &up, 3, x).unwrap(), h, 1, 1e-2);
            let cf = omega3_derivative(&p, &up, h).unwrap();
            assert!((fd - cf).abs() < 1e-6 * cf.abs());
        }
    }

    #[test]
    fn wronskian_finite_differences() {
        let p = SystemParams::x29(0.5, 1.5).unwrap();
        let up = plus(&p);
        let c1 = omega_vs_wronskian(&p, &up, 1, 1.8, 1e-2).unwrap();
        assert_eq!(c1.abs_residual, 0.0);
        let c3 = omega_vs_wronskian(&p, &up, 3, 1.8, 1e-2).unwrap();
        assert!(c3.rel_residual < 1e-6, "{c3:?}");
        let c4 = omega_vs_wronskian(&p, &up, 4, 1.8, 1e-2).unwrap();
        assert!(c4.rel_residual < 1e-4, "{c4:?}");
        assert!(matches!(
            omega_vs_wronskian(&p, &up, 3, 2.0 - 1e-7, 1e-2),
            Err(Error::StepTooSmall(_))
        ));
    }

    #[test]
    fn verdicts_follow_the_case_split() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        for v in ect_verdicts(&p).unwrap() {
            assert_eq!(v.verdict, Verdict::FullEct);
            assert!(v.analytic_agreement);
        }
        let q = SystemParams::x29(1.5, 1.9).unwrap();
        let vs = ect_verdicts(&q).unwrap();
        assert_eq!(vs[0].verdict, Verdict::FullEct);
        match vs[1].verdict {
            Verdict::PartialEct { d_lo, d_hi } => {
                assert!(d_hi - d_lo <= 1e-12 && d_lo > vs[1].annulus.lo && d_hi < 2.0);
            }
            _ => panic!("expected a partial verdict"),
        }
        assert!(vs[1].analytic_agreement);
        let x = SystemParams::x210(1.0).unwrap();
        assert_eq!(ect_verdicts(&x).unwrap()[0].verdict, Verdict::FullEct);
        let x = SystemParams::x210(1.8).unwrap();
        assert!(matches!(ect_verdicts(&x).unwrap()[0].verdict, Verdict::PartialEct { .. }));
    }

    #[test]
    fn omega3_positive_at_zero_when_anchor_negative() {
        let q = SystemParams::x29(1.5, 1.9).unwrap();
        let up = plus(&q);
        let hp = up.center;
        let v = omega(&q, &up, 3, 0.0).unwrap();
        let printed = ((4.0 - hp * hp).sqrt() - 2.0).powi(2) / 2.0;
        assert!((v - printed).abs() < 1e-12 && v > 0.0);
    }
}
