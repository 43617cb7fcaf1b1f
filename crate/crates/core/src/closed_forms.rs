//! Explicit formulas for `J_k`, `S_i`, `R_i` and the reduced cubic
//! Melnikov function
//! `M(h) = a1 + a2 h + a3 h^2 + (a4 + a5 h) sqrt(4 - h^2)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::coeffs::PerturbationCoeffs;
use crate::error::{Error, Result};
use crate::geometry::{annulus, delta_roots, AnnulusSpec, AnnulusTag, Family, SystemParams};

/// The annulus of `params` with `spec`'s tag, after checking `h` is inside.
fn checked(params: &SystemParams, spec: &AnnulusSpec, h: f64) -> Result<AnnulusSpec> {
    let a = annulus(params, spec.tag)?;
    if !a.contains(h) {
        return Err(Error::OutsideAnnulus { h });
    }
    Ok(a)
}

/// `+1` on `U+` and the single annulus, `-1` on `U-`.
fn branch_sign(tag: AnnulusTag) -> f64 {
    match tag {
        AnnulusTag::Minus => -1.0,
        _ => 1.0,
    }
}

pub fn cf_j01(params: &SystemParams, h: f64, annulus: &AnnulusSpec) -> Result<(f64, f64)> {
    let a = checked(params, annulus, h)?;
    let (b, c) = (params.b(), params.c());
    let sh = (4.0 - h * h).sqrt();
    Ok(match params.family() {
        Family::X29 => {
            let s = branch_sign(a.tag);
            let d = params.delta();
            let j0 = s * (2.0 * b + c * h) / (2.0 * d) * PI - sh / 2.0 * PI;
            let j1 = -(2.0 * b + c * h) / (2.0 * sh) * PI + s * d / 2.0 * PI;
            (j0, j1)
        }
        Family::X210 => {
            let g = params.gamma();
            let j0 = b * (2.0 + h) / (2.0 * g) * PI - sh / 2.0 * PI;
            let j1 = -b * (2.0 + h) / (2.0 * sh) * PI + g / 2.0 * PI;
            (j0, j1)
        }
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Γ(n + 1/2)`.
fn gamma_half(n: usize) -> f64 {
    factorial(2 * n) / (4f64.powi(n as i32) * factorial(n)) * PI.sqrt()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `J_k` for `2 <= k <= 8` through Beta-function moments of the
/// symmetric expansion over the roots `x1`, `x2`.
pub fn cf_jk(params: &SystemParams, h: f64, k: usize) -> Result<f64> {
    if !(2..=8).contains(&k) {
        return Err(Error::UnsupportedK(k));
    }
    let r = delta_roots(params, h)?;
    let (x1, x2) = (r.x1, r.x2);
    let e = k - 2;
    let mut sum = 0.0;
    for m in 0..=e {
        let sym = 0.5 * (x1.powi(m as i32) * x2.powi((e - m) as i32) + x2.powi(m as i32) * x1.powi((e - m) as i32));
        // B(m + 3/2, k - m - 1/2) / 2
        let beta = gamma_half(m + 1) * gamma_half(k - m - 1) / factorial(k);
        sum += binomial(e, m) * sym * 0.5 * beta;
    }
    Ok((4.0 - h * h).sqrt() * (x2 - x1).powi(2) * sum)
}

pub fn cf_s(params: &SystemParams, h: f64, annulus: &AnnulusSpec, i: usize) -> Result<f64> {
    let a = checked(params, annulus, h)?;
    let (b, c) = (params.b(), params.c());
    let g = params.gamma();
    let sh = (4.0 - h * h).sqrt();
    let v = match params.family() {
        Family::X29 => {
            let s = branch_sign(a.tag);
            let d = params.delta();
            match i {
                0 => ((b * b - 2.0) * c + b * h) / g * PI + s * ((c * c - 2.0) * b + c * h) / d * PI,
                1 => -(b * c + 2.0 * h) / g * PI + s * d * PI,
                2 => (2.0 * c + b * h) / g * PI - sh * PI,
                3 => -(b * c + (b * b - 2.0) * h) / g * PI - (-2.0 * b + c * h + b * h * h) / sh * PI,
                _ => return Err(Error::InvalidArgument(format!("S_i needs i <= 3, got {i}"))),
            }
        }
        Family::X210 => {
            let s0 = 2.0 * b * (h - (2.0 - b * b)) / g * PI;
            match i {
                0 => s0,
                1 => -s0 / b,
                2 => b * (2.0 + h) / g * PI - sh * PI,
                3 => -(b * b + (b * b - 2.0) * h) / g * PI - b * (-2.0 + h + h * h) / sh * PI,
                _ => return Err(Error::InvalidArgument(format!("S_i needs i <= 3, got {i}"))),
            }
        }
    };
    Ok(v)
}

pub fn cf_r(params: &SystemParams, h: f64, annulus: &AnnulusSpec, i: usize) -> Result<f64> {
    let a = checked(params, annulus, h)?;
    let (b, c) = (params.b(), params.c());
    let g = params.gamma();
    let g3 = g.powi(3);
    let sh = (4.0 - h * h).sqrt();
    let (b2, c2) = (b * b, c * c);
    let v = match params.family() {
        Family::X29 => {
            let s = branch_sign(a.tag);
            let d = params.delta();
            match i {
                0 => {
                    2.0 * (-8.0 + 6.0 * c2 - 6.0 * b2 * (-1.0 + c2) + b2 * b2 * (-1.0 + c2)) * PI / g3
                        - s * 2.0 * b * c * (-3.0 + c2) * PI / d
                        + h * (2.0 * b * (-6.0 + b2) * c * PI / g3 - s * 2.0 * (-2.0 + c2) * PI / d)
                        - 4.0 * h * h * PI / g3
                }
                1 => {
                    2.0 * b * c2 * PI / g3 + b * (c2 - 2.0) * PI / g - s * c * d * PI
                        + 8.0 * c * h * PI / g3
                        + 2.0 * b * h * h * PI / g3
                }
                2 => -4.0 * (-4.0 + b2 + c2 + b * c * h + h * h) * PI / g3,
                3 => {
                    2.0 * b * (-4.0 + b2 + c2) * PI / g3 + 8.0 * c * h * PI / g3
                        - b * (-6.0 + b2) * h * h * PI / g3
                        - h * sh * PI
                }
                _ => return Err(Error::InvalidArgument(format!("R_i needs i <= 3, got {i}"))),
            }
        }
        Family::X210 => {
            let z = h - (2.0 - b2);
            match i {
                0 => -4.0 * z * (h - b2 * b2 + 5.0 * b2 - 2.0) * PI / g3,
                1 => 2.0 * b * z * (h - b2 + 6.0) * PI / g3,
                2 => -4.0 * z * (h + 2.0) * PI / g3,
                3 => -b * (h + 2.0) * (b2 * h - 6.0 * h - 2.0 * b2 + 4.0) * PI / g3 - h * sh * PI,
                _ => return Err(Error::InvalidArgument(format!("R_i needs i <= 3, got {i}"))),
            }
        }
    };
    Ok(v)
}

/// Reduced cubic Melnikov function on one annulus.
///
/// `a1` is tied to the rest by `a1 = m a2 + n a3 + p a4 + q a5`, so that
/// `M` vanishes at the center level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelnikovN3 {
    annulus: AnnulusSpec,
    a: [f64; 5],
    anchor: [f64; 4],
}

/// `(m, n, p, q)` for the anchor level `hc`.
fn anchor_constants(hc: f64) -> [f64; 4] {
    let r = (4.0 - hc * hc).sqrt();
    [-hc, -hc * hc, -r, -hc * r]
}

impl MelnikovN3 {
    /// Builds the quintuple from `(a2, a3, a4, a5)`.
    pub fn from_free(annulus: AnnulusSpec, a2: f64, a3: f64, a4: f64, a5: f64) -> Self {
        Self::with_anchor(annulus, anchor_constants(annulus.center), [a2, a3, a4, a5])
    }

    fn with_anchor(annulus: AnnulusSpec, anchor: [f64; 4], free: [f64; 4]) -> Self {
        let [m, n, p, q] = anchor;
        let [a2, a3, a4, a5] = free;
        let a1 = m * a2 + n * a3 + p * a4 + q * a5;
        MelnikovN3 {
            annulus,
            a: [a1, a2, a3, a4, a5],
            anchor,
        }
    }

    /// Same function times `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self { a: self.a.map(|x| k * x), ..*self }
    }

    pub fn annulus(&self) -> &AnnulusSpec {
        &self.annulus
    }

    /// `[a1, a2, a3, a4, a5]`.
    pub fn coefficients(&self) -> [f64; 5] {
        self.a
    }

    /// `[m, n, p, q]`.
    pub fn anchor(&self) -> [f64; 4] {
        self.anchor
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().all(|&v| v == 0.0)
    }

    /// `M(h)`, evaluated in the centered basis so that `M(center) = 0`
    /// exactly and there is no cancellation close to the center.
    pub fn eval(&self, h: f64) -> f64 {
        let [_, a2, a3, a4, a5] = self.a;
        let hc = self.annulus.center;
        let sh = (4.0 - h * h).max(0.0).sqrt();
        let sc = (4.0 - hc * hc).sqrt();
        let t = h - hc;
        let droot = if sh + sc > 0.0 { -(t * (h + hc)) / (sh + sc) } else { 0.0 };
        a2 * t + a3 * t * (h + hc) + a4 * droot + a5 * (t * sh + hc * droot)
    }

    /// `M(h)` in the monomial form `a1 + a2 h + a3 h^2 + (a4 + a5 h) sqrt(4 - h^2)`.
    pub fn eval_monomial(&self, h: f64) -> f64 {
        let [a1, a2, a3, a4, a5] = self.a;
        a1 + a2 * h + a3 * h * h + (a4 + a5 * h) * (4.0 - h * h).max(0.0).sqrt()
    }

    /// Sum of the magnitudes of the terms summed by [`MelnikovN3::eval`];
    /// the natural unit for residuals of `M(h)`.
    pub fn scale(&self, h: f64) -> f64 {
        let [_, a2, a3, a4, a5] = self.a;
        let hc = self.annulus.center;
        let sh = (4.0 - h * h).max(0.0).sqrt();
        let sc = (4.0 - hc * hc).sqrt();
        let t = h - hc;
        let droot = if sh + sc > 0.0 { (t * (h + hc)).abs() / (sh + sc) } else { 0.0 };
        (a2 * t).abs() + (a3 * t * (h + hc)).abs() + (a4 * droot).abs() + a5.abs() * ((t * sh).abs() + (hc * droot).abs())
    }

    /// `|a1| + |a2 h| + |a3| h^2 + (|a4| + |a5 h|) sqrt(4 - h^2)`.
    pub fn monomial_scale(&self, h: f64) -> f64 {
        let [a1, a2, a3, a4, a5] = self.a;
        a1.abs() + (a2 * h).abs() + a3.abs() * h * h + (a4.abs() + (a5 * h).abs()) * (4.0 - h * h).max(0.0).sqrt()
    }
}

pub fn melnikov_n3_eval(q: &MelnikovN3, h: f64) -> f64 {
    q.eval(h)
}

/// `(a2, a3, a4, a5)` of one annulus from the cubic perturbation.
pub fn melnikov_n3_coeffs(params: &SystemParams, coeffs: &PerturbationCoeffs, spec: &AnnulusSpec) -> Result<MelnikovN3> {
    if coeffs.degree() > 3 {
        return Err(Error::DegreeMismatch {
            expected: 3,
            found: coeffs.degree(),
        });
    }
    let an = annulus(params, spec.tag)?;
    let a = |i, j| coeffs.a(i, j);
    let q = |i, j| coeffs.b(i, j);
    let (b, c) = (params.b(), params.c());
    let gb = params.gamma();
    let gb3 = gb.powi(3);
    match params.family() {
        Family::X29 => {
            let s = branch_sign(an.tag);
            let gc = params.delta();
            let gc3 = gc.powi(3);
            let a2 = q(0, 0) * (s * 2.0 * b * c * (6.0 - b * b) * PI / gb3 + 2.0 * (-2.0 + c * c) * PI / gc)
                + a(0, 0) * (-2.0 * b * c * (-6.0 + c * c) * PI / gc3 + s * 2.0 * (-2.0 + b * b) * PI / gb)
                - (q(0, 1) + a(1, 0)) * (s * b * PI / gb + c * PI / gc)
                + s * 2.0 * q(1, 1) * PI / gb
                + 2.0 * a(1, 1) * PI / gc
                + s * b * (-q(2, 1) + a(3, 0)) * PI / gb
                + s * 4.0 * c * (-2.0 * q(1, 0) + q(2, 0) * b - 2.0 * q(3, 0)) * PI / gb3
                - 4.0 * b * (2.0 * a(0, 1) - a(0, 2) * c + 2.0 * a(0, 3)) * PI / gc3
                - c * (a(1, 2) - q(0, 3)) * PI / gc;
            let a3 = s * 4.0 * (q(0, 0) + q(2, 0)) * PI / gb3 + 4.0 * (a(0, 0) + a(0, 2)) * PI / gc3
                - s * 2.0 * q(1, 0) * b * PI / gb3
                - 2.0 * a(0, 1) * c * PI / gc3
                + s * q(3, 0) * b * (-6.0 + b * b) * PI / gb3
                + a(0, 3) * c * (-6.0 + c * c) * PI / gc3;
            let a4 = s * (q(2, 1) - q(0, 3) + a(1, 2) - a(3, 0)) * PI;
            let a5 = s * (q(3, 0) + a(0, 3)) * PI;
            Ok(MelnikovN3::with_anchor(an, anchor_constants(an.center), [a2, a3, a4, a5]))
        }
        Family::X210 => {
            let b2 = b * b;
            let a2 = -4.0 * (q(0, 0) + a(0, 0)) * (4.0 - 6.0 * b2 + b2 * b2) * PI / gb3
                - 8.0 * (q(1, 0) + a(0, 1) + q(3, 0) + a(0, 3)) * b * PI / gb3
                - 2.0 * (q(0, 1) + a(1, 0)) * b * PI / gb
                + 4.0 * (q(2, 0) + a(0, 2)) * b2 * PI / gb3
                + 2.0 * (q(1, 1) + a(1, 1)) * PI / gb
                - (q(2, 1) + a(1, 2) - q(0, 3) - a(3, 0)) * b * PI / gb;
            let a3 = 4.0 * (q(0, 0) + q(2, 0) + a(0, 0) + a(0, 2)) * PI / gb3
                - 2.0 * (q(1, 0) + a(0, 1)) * b * PI / gb3
                + (q(3, 0) + a(0, 3)) * b * (-6.0 + b2) * PI / gb3;
            let a4 = (q(2, 1) - q(0, 3) + a(1, 2) - a(3, 0)) * PI;
            let a5 = (q(3, 0) + a(0, 3)) * PI;
            let anchor = [-2.0 + b2, -(-2.0 + b2).powi(2), -b * gb, b * gb * (-2.0 + b2)];
            Ok(MelnikovN3::with_anchor(an, anchor, [a2, a3, a4, a5]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{annulus, AnnulusTag};

    #[test]
    fn j01_with_b_zero_on_plus_annulus() {
        let p = SystemParams::x29(0.0, 1.3).unwrap();
        let up = annulus(&p, AnnulusTag::Plus).unwrap();
        let h = 1.8;
        let (_, j1) = cf_j01(&p, h, &up).unwrap();
        let expected = -(1.3 * h * PI) / (2.0 * (4.0 - h * h).sqrt()) + (4.0 - 1.69f64).sqrt() / 2.0 * PI;
        assert!((j1 - expected).abs() < 1e-14);
    }

    #[test]
    fn x210_j_finite_at_center_and_jk_vanishes() {
        let p = SystemParams::x210(1.0).unwrap();
        let u = annulus(&p, AnnulusTag::Single).unwrap();
        let (j0, j1) = cf_j01(&p, 1.0 + 1e-8, &u).unwrap();
        assert!(j0.is_finite() && j1.is_finite());
        for k in 2..=6 {
            assert!(cf_jk(&p, 1.0 + 1e-8, k).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn jk_rejects_unsupported_orders() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        assert!(matches!(cf_jk(&p, 1.9, 1), Err(Error::UnsupportedK(1))));
        assert!(matches!(cf_jk(&p, 1.9, 9), Err(Error::UnsupportedK(9))));
        assert!(matches!(cf_jk(&p, 0.0, 3), Err(Error::OutsideAnnulus { .. })));
    }

    #[test]
    fn j2_is_a_single_beta_moment() {
        let p = SystemParams::x29(0.5, 1.5).unwrap();
        let r = delta_roots(&p, 1.7).unwrap();
        let direct = (4.0 - 1.7f64 * 1.7).sqrt() * (r.x2 - r.x1).powi(2) * PI / 16.0;
        assert!((cf_jk(&p, 1.7, 2).unwrap() - direct).abs() < 1e-14 * direct.abs());
    }

    #[test]
    fn s2_and_s3_do_not_depend_on_the_annulus_branch() {
        let p = SystemParams::x29(0.5, 1.5).unwrap();
        let um = annulus(&p, AnnulusTag::Minus).unwrap();
        let up = annulus(&p, AnnulusTag::Plus).unwrap();
        let hm = um.quantile(0.5);
        let hp = up.quantile(0.5);
        let s2m = cf_s(&p, hm, &um, 2).unwrap();
        let s2p = cf_s(&p, hp, &up, 2).unwrap();
        let g = p.gamma();
        let f = |h: f64| (2.0 * 1.5 + 0.5 * h) / g * PI - (4.0 - h * h).sqrt() * PI;
        assert!((s2m - f(hm)).abs() < 1e-14 && (s2p - f(hp)).abs() < 1e-14);
    }

    #[test]
    fn x210_s0_vanishes_at_center() {
        let p = SystemParams::x210(1.2).unwrap();
        let u = annulus(&p, AnnulusTag::Single).unwrap();
        let s0 = cf_s(&p, u.center + 2e-9, &u, 0).unwrap();
        assert!(s0.abs() < 1e-8);
    }

    #[test]
    fn one_hot_b30_and_b21() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        for (tag, s) in [(AnnulusTag::Plus, 1.0), (AnnulusTag::Minus, -1.0)] {
            let an = annulus(&p, tag).unwrap();
            let mut c = PerturbationCoeffs::zeros(3);
            c.set_b(3, 0, 1.0 / PI);
            let q = melnikov_n3_coeffs(&p, &c, &an).unwrap();
            let [_, _, _, a4, a5] = q.coefficients();
            assert!((a5 - s).abs() < 1e-15 && a4 == 0.0);
            let mut c = PerturbationCoeffs::zeros(3);
            c.set_b(2, 1, 1.0 / PI);
            let q = melnikov_n3_coeffs(&p, &c, &an).unwrap();
            let [_, _, _, a4, a5] = q.coefficients();
            assert!((a4 - s).abs() < 1e-15 && a5 == 0.0);
        }
    }

    #[test]
    fn degree_four_is_rejected() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        let an = annulus(&p, AnnulusTag::Plus).unwrap();
        assert!(matches!(
            melnikov_n3_coeffs(&p, &PerturbationCoeffs::zeros(4), &an),
            Err(Error::DegreeMismatch { .. })
        ));
    }

    #[test]
    fn center_level_is_an_exact_zero() {
        let p = SystemParams::x29(0.3, 1.1).unwrap();
        for an in p.annuli() {
            let q = MelnikovN3::from_free(an, 0.7, -1.3, 2.1, 0.4);
            assert_eq!(q.eval(an.center), 0.0);
            assert!(q.eval_monomial(an.center).abs() < 1e-13 * q.monomial_scale(an.center));
        }
        let x = SystemParams::x210(1.0).unwrap();
        let u = x.annuli()[0];
        let mut c = PerturbationCoeffs::zeros(3);
        c.set_a(1, 1, 1.0);
        c.set_b(3, 0, -0.5);
        let q = melnikov_n3_coeffs(&x, &c, &u).unwrap();
        assert_eq!(q.eval(1.0), 0.0);
    }

    #[test]
    fn x210_anchor_matches_generic_form() {
        for b in [0.5, 1.0, 1.5, 1.8] {
            let p = SystemParams::x210(b).unwrap();
            let u = p.annuli()[0];
            let q = melnikov_n3_coeffs(&p, &PerturbationCoeffs::zeros(3), &u).unwrap();
            let generic = anchor_constants(2.0 - b * b);
            for (x, y) in q.anchor().iter().zip(generic) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn centered_and_monomial_forms_agree() {
        let p = SystemParams::x29(1.2, 1.8).unwrap();
        for an in p.annuli() {
            let q = MelnikovN3::from_free(an, 1.0, -2.0, 0.5, 3.0);
            for h in an.grid(7, 0.05) {
                assert!((q.eval(h) - q.eval_monomial(h)).abs() < 1e-13 * q.monomial_scale(h));
            }
        }
    }

    /// Determinant of `(a11, a01, a12, a03) -> (a2, a3, a4, a5)` by
    /// differences of the reduction.
    fn tail_jacobian_det(p: &SystemParams, tag: AnnulusTag) -> f64 {
        let an = annulus(p, tag).unwrap();
        let base = melnikov_n3_coeffs(p, &crate::coeffs::PerturbationCoeffs::zeros(3), &an).unwrap().coefficients();
        let mut m = nalgebra::Matrix4::<f64>::zeros();
        for (col, (i, j)) in [(1, 1), (0, 1), (1, 2), (0, 3)].into_iter().enumerate() {
            let mut c = crate::coeffs::PerturbationCoeffs::zeros(3);
            c.set_a(i, j, 1.0);
            let q = melnikov_n3_coeffs(p, &c, &an).unwrap().coefficients();
            for row in 0..4 {
                m[(row, col)] = q[row + 1] - base[row + 1];
            }
        }
        m.determinant()
    }

    #[test]
    fn tail_coefficients_are_independent() {
        for (b, c) in [(0.0, 1.0), (0.5, 1.5), (1.2, 1.8)] {
            let p = SystemParams::x29(b, c).unwrap();
            let want = -4.0 * c * PI.powi(4) / (4.0 - c * c).powi(2);
            for tag in [AnnulusTag::Minus, AnnulusTag::Plus] {
                let got = tail_jacobian_det(&p, tag);
                assert!((got - want).abs() <= 1e-6 * want.abs(), "{b} {c} {tag}: {got} vs {want}");
            }
        }
        for b in [0.5, 1.0, 1.8] {
            let p = SystemParams::x210(b).unwrap();
            let want = -4.0 * b * PI.powi(4) / (4.0 - b * b).powi(2);
            let got = tail_jacobian_det(&p, AnnulusTag::Single);
            assert!((got - want).abs() <= 1e-6 * want.abs(), "{b}: {got} vs {want}");
        }
    }
}
