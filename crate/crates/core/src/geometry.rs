//! Parameters, center levels, period annuli and level-curve geometry.
//!
//! The unperturbed systems have the first integral
//! `H(x, y) = (1 + b x + c y + x^2 + y^2) / (x y)` with integrating factor
//! `x^-2 y^-2`. A level set `H = h` inside a period annulus is an ellipse
//! `y = (h x - c)/2 ± sqrt(Δ(x))` over `[x1, x2]`, where
//! `Δ(x) = (h^2/4 - 1) x^2 - (c h/2 + b) x + c^2/4 - 1`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Levels closer than this to an annulus endpoint are rejected.
pub const ENDPOINT_GUARD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    X29,
    X210,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::X29 => write!(f, "X29"),
            Family::X210 => write!(f, "X210"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    family: Family,
    b: f64,
    c: f64,
}

impl SystemParams {
    /// Two-annulus family, `0 <= b < c < 2`.
    pub fn x29(b: f64, c: f64) -> Result<Self> {
        if !(b.is_finite() && c.is_finite() && 0.0 <= b && b < c && c < 2.0) {
            return Err(Error::InvalidParams(format!(
                "X29 needs 0 <= b < c < 2, got b = {b}, c = {c}"
            )));
        }
        Ok(SystemParams { family: Family::X29, b, c })
    }

    /// Single-annulus family, `0 < b = c < 2`.
    pub fn x210(b: f64) -> Result<Self> {
        if !(b.is_finite() && 0.0 < b && b < 2.0) {
            return Err(Error::InvalidParams(format!(
                "X210 needs 0 < b < 2, got b = {b}"
            )));
        }
        Ok(SystemParams { family: Family::X210, b, c: b })
    }

    pub fn new(family: Family, b: f64, c: f64) -> Result<Self> {
        match family {
            Family::X29 => Self::x29(b, c),
            Family::X210 => {
                if b != c {
                    return Err(Error::InvalidParams(format!(
                        "X210 needs b = c, got b = {b}, c = {c}"
                    )));
                }
                Self::x210(b)
            }
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn gamma(&self) -> f64 {
        (4.0 - self.b * self.b).sqrt()
    }

    pub fn delta(&self) -> f64 {
        (4.0 - self.c * self.c).sqrt()
    }

    /// All annuli of the family, `U-` before `U+`.
    pub fn annuli(&self) -> Vec<AnnulusSpec> {
        match self.family {
            Family::X29 => vec![
                annulus(self, AnnulusTag::Minus).expect("X29 has U-"),
                annulus(self, AnnulusTag::Plus).expect("X29 has U+"),
            ],
            Family::X210 => vec![annulus(self, AnnulusTag::Single).expect("X210 has U")],
        }
    }

    /// First integral `H(x, y)`.
    pub fn hamiltonian(&self, x: f64, y: f64) -> f64 {
        first_integral(self.b, self.c, x, y)
    }
}

pub fn first_integral(b: f64, c: f64, x: f64, y: f64) -> f64 {
    (1.0 + b * x + c * y + x * x + y * y) / (x * y)
}

/// Partial derivatives `(H_x, H_y)`.
pub fn first_integral_gradient(b: f64, c: f64, x: f64, y: f64) -> (f64, f64) {
    let hx = (x * x - 1.0 - c * y - y * y) / (x * x * y);
    let hy = (y * y - 1.0 - b * x - x * x) / (x * y * y);
    (hx, hy)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CenterLevels {
    Pair { minus: f64, plus: f64 },
    Single(f64),
}

pub fn center_levels(params: &SystemParams) -> CenterLevels {
    match params.family {
        Family::X29 => {
            let bc = params.b * params.c;
            let gd = params.gamma() * params.delta();
            CenterLevels::Pair {
                minus: (-bc - gd) / 2.0,
                plus: (-bc + gd) / 2.0,
            }
        }
        Family::X210 => CenterLevels::Single(2.0 - params.b * params.b),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnnulusTag {
    #[serde(rename = "U-")]
    Minus,
    #[serde(rename = "U+")]
    Plus,
    #[serde(rename = "U")]
    Single,
}

impl AnnulusTag {
    pub fn label(&self) -> &'static str {
        match self {
            AnnulusTag::Minus => "U-",
            AnnulusTag::Plus => "U+",
            AnnulusTag::Single => "U",
        }
    }
}

impl fmt::Display for AnnulusTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Direction of traversal of a closed level curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    CounterClockwise,
    Clockwise,
}

impl Orientation {
    pub fn sign(&self) -> f64 {
        match self {
            Orientation::CounterClockwise => 1.0,
            Orientation::Clockwise => -1.0,
        }
    }

    pub fn reversed(&self) -> Orientation {
        match self {
            Orientation::CounterClockwise => Orientation::Clockwise,
            Orientation::Clockwise => Orientation::CounterClockwise,
        }
    }

    pub fn from_sign(s: f64) -> Orientation {
        if s >= 0.0 {
            Orientation::CounterClockwise
        } else {
            Orientation::Clockwise
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub tag: AnnulusTag,
    pub lo: f64,
    pub hi: f64,
    /// Level of the center the annulus surrounds; one of `lo`, `hi`.
    pub center: f64,
}

impl AnnulusSpec {
    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, h: f64) -> bool {
        h - self.lo > ENDPOINT_GUARD && self.hi - h > ENDPOINT_GUARD
    }

    /// Point at fraction `q` of the way from `lo` to `hi`.
    pub fn quantile(&self, q: f64) -> f64 {
        self.lo + q * (self.hi - self.lo)
    }

    /// Orientation in which the unperturbed flow runs around the center.
    pub fn flow_orientation(&self) -> Orientation {
        match self.tag {
            AnnulusTag::Minus => Orientation::Clockwise,
            AnnulusTag::Plus | AnnulusTag::Single => Orientation::CounterClockwise,
        }
    }

    /// `n` equispaced levels over the interval with `margin` (a fraction of
    /// the width) kept clear at both ends.
    pub fn grid(&self, n: usize, margin: f64) -> Vec<f64> {
        let lo = self.lo + margin * self.width();
        let hi = self.hi - margin * self.width();
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

pub fn annulus(params: &SystemParams, tag: AnnulusTag) -> Result<AnnulusSpec> {
    let incompatible = || Error::IncompatibleTag {
        tag: tag.label().to_string(),
        family: params.family.to_string(),
    };
    match (center_levels(params), tag) {
        (CenterLevels::Pair { minus, .. }, AnnulusTag::Minus) => Ok(AnnulusSpec {
            tag,
            lo: -2.0,
            hi: minus,
            center: minus,
        }),
        (CenterLevels::Pair { plus, .. }, AnnulusTag::Plus) => Ok(AnnulusSpec {
            tag,
            lo: plus,
            hi: 2.0,
            center: plus,
        }),
        (CenterLevels::Single(hc), AnnulusTag::Single) => Ok(AnnulusSpec {
            tag,
            lo: hc,
            hi: 2.0,
            center: hc,
        }),
        _ => Err(incompatible()),
    }
}

/// The annulus whose open interval contains `h`.
pub fn locate(params: &SystemParams, h: f64) -> Result<AnnulusSpec> {
    params
        .annuli()
        .into_iter()
        .find(|a| a.contains(h))
        .ok_or(Error::OutsideAnnulus { h })
}

/// Equilibrium surrounded by the annulus.
pub fn center_point(params: &SystemParams, annulus: &AnnulusSpec) -> (f64, f64) {
    let (b, c, h) = (params.b, params.c, annulus.center);
    let a = h * h / 4.0 - 1.0;
    let bq = -(c * h / 2.0 + b);
    let x = -bq / (2.0 * a);
    (x, (h * x - c) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaRoots {
    pub h: f64,
    pub x1: f64,
    pub x2: f64,
    /// `[A, B, C]` of `Δ(x) = A x^2 + B x + C`.
    pub quad: [f64; 3],
}

impl DeltaRoots {
    pub fn delta(&self, x: f64) -> f64 {
        let [a, b, c] = self.quad;
        (a * x + b) * x + c
    }
}

fn delta_coefficients(b: f64, c: f64, h: f64) -> [f64; 3] {
    [h * h / 4.0 - 1.0, -(c * h / 2.0 + b), c * c / 4.0 - 1.0]
}

/// Roots of `Δ` for an arbitrary pair `(b, c)`; only requires a closed
/// component (`|h| < 2`, positive discriminant).
fn raw_roots(b: f64, c: f64, h: f64) -> Result<DeltaRoots> {
    if !(h.abs() < 2.0) {
        return Err(Error::OutsideAnnulus { h });
    }
    let quad = delta_coefficients(b, c, h);
    let [qa, qb, qc] = quad;
    let disc = qb * qb - 4.0 * qa * qc;
    if !(disc > 0.0) {
        return Err(Error::OutsideAnnulus { h });
    }
    let sd = disc.sqrt();
    // larger-magnitude root first, the other through the product
    let q = -0.5 * (qb + qb.signum() * sd);
    let (r1, r2) = if qb == 0.0 {
        let r = (-qc / qa).sqrt();
        (-r, r)
    } else {
        (q / qa, qc / q)
    };
    let (x1, x2) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    Ok(DeltaRoots { h, x1, x2, quad })
}

pub fn delta_roots(params: &SystemParams, h: f64) -> Result<DeltaRoots> {
    locate(params, h)?;
    raw_roots(params.b, params.c, h)
}

/// A closed level curve `H = h` of the conic family with parameters `(b, c)`.
///
/// Unlike [`SystemParams`], `b` and `c` are unrestricted apart from
/// `0 <= b, c < 2`, so the mirrored curve `Γ'` (roles of `b`, `c` exchanged)
/// is representable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Oval {
    b: f64,
    c: f64,
    roots: DeltaRoots,
    k: f64,
}

impl Oval {
    pub fn new(b: f64, c: f64, h: f64) -> Result<Self> {
        if !(0.0..2.0).contains(&b) || !(0.0..2.0).contains(&c) {
            return Err(Error::InvalidParams(format!(
                "oval needs 0 <= b, c < 2, got b = {b}, c = {c}"
            )));
        }
        let roots = raw_roots(b, c, h)?;
        Ok(Oval {
            b,
            c,
            roots,
            k: (1.0 - h * h / 4.0).sqrt(),
        })
    }

    /// The level curve of `params` at `h`; `h` must lie inside an annulus.
    pub fn at(params: &SystemParams, h: f64) -> Result<Self> {
        locate(params, h)?;
        Self::new(params.b, params.c, h)
    }

    /// Reflection of the curve in the diagonal.
    pub fn mirrored(&self) -> Oval {
        Oval::new(self.c, self.b, self.roots.h).expect("discriminant is symmetric in b, c")
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn h(&self) -> f64 {
        self.roots.h
    }

    pub fn roots(&self) -> &DeltaRoots {
        &self.roots
    }

    /// Branch data at `x = x1 + (x2 - x1) sin^2 θ`, `θ ∈ [0, π/2]`:
    /// `(x, dx/dθ, (h x - c)/2, sqrt(Δ), d sqrt(Δ)/dθ)`.
    pub fn branch_at(&self, theta: f64) -> BranchPoint {
        let (x1, x2) = (self.roots.x1, self.roots.x2);
        let w = x2 - x1;
        let (s, co) = theta.sin_cos();
        let x = x1 + w * s * s;
        let s2 = 2.0 * s * co;
        let c2 = co * co - s * s;
        BranchPoint {
            x,
            dx: w * s2,
            mid: (self.roots.h * x - self.c) / 2.0,
            root: 0.5 * self.k * w * s2,
            droot: self.k * w * c2,
        }
    }

    /// Counter-clockwise parametrization over `φ ∈ [0, 2π)`, starting at the
    /// leftmost point.
    pub fn point(&self, phi: f64) -> (f64, f64) {
        let h = self.roots.h;
        let m = 0.5 * (self.roots.x1 + self.roots.x2);
        let r = 0.5 * (self.roots.x2 - self.roots.x1);
        let x = m - r * phi.cos();
        (x, (h * x - self.c) / 2.0 - self.k * r * phi.sin())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BranchPoint {
    pub x: f64,
    pub dx: f64,
    pub mid: f64,
    pub root: f64,
    pub droot: f64,
}

impl BranchPoint {
    pub fn y_lower(&self) -> f64 {
        self.mid - self.root
    }

    pub fn y_upper(&self) -> f64 {
        self.mid + self.root
    }
}

/// `2m` points of `Γ_h`, counter-clockwise, without repeating the first one.
pub fn level_curve_sample(params: &SystemParams, h: f64, m: usize) -> Result<Vec<(f64, f64)>> {
    if m < 8 {
        return Err(Error::InvalidArgument(format!("need m >= 8 samples, got {m}")));
    }
    let oval = Oval::at(params, h)?;
    let n = 2 * m;
    Ok((0..n)
        .map(|k| oval.point(2.0 * PI * k as f64 / n as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_levels_of_reference_parameters() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        match center_levels(&p) {
            CenterLevels::Pair { minus, plus } => {
                assert!((minus + 3f64.sqrt()).abs() < 1e-15);
                assert!((plus - 3f64.sqrt()).abs() < 1e-15);
            }
            _ => panic!(),
        }
        let q = SystemParams::x210(1.0).unwrap();
        assert_eq!(center_levels(&q), CenterLevels::Single(1.0));
    }

    #[test]
    fn x29_levels_approach_x210_as_b_tends_to_c() {
        let p = SystemParams::x29(0.9, 0.9 + 1e-9).unwrap();
        let CenterLevels::Pair { minus, plus } = center_levels(&p) else { panic!() };
        assert!((plus - (2.0 - 0.81)).abs() < 1e-8);
        assert!((minus + 2.0).abs() < 1e-8);
    }

    #[test]
    fn annulus_intervals_and_tags() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        let m = annulus(&p, AnnulusTag::Minus).unwrap();
        assert_eq!(m.lo, -2.0);
        assert!((m.hi + 3f64.sqrt()).abs() < 1e-15);
        let q = SystemParams::x210(1.0).unwrap();
        let u = annulus(&q, AnnulusTag::Single).unwrap();
        assert_eq!((u.lo, u.hi), (1.0, 2.0));
        assert!(matches!(
            annulus(&q, AnnulusTag::Plus),
            Err(Error::IncompatibleTag { .. })
        ));
        assert!(matches!(
            annulus(&p, AnnulusTag::Single),
            Err(Error::IncompatibleTag { .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SystemParams::x29(1.0, 1.0).is_err());
        assert!(SystemParams::x29(-0.1, 1.0).is_err());
        assert!(SystemParams::x29(0.0, 2.0).is_err());
        assert!(SystemParams::x210(0.0).is_err());
        assert!(SystemParams::new(Family::X210, 1.0, 1.2).is_err());
    }

    #[test]
    fn vieta_at_reference_levels() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        let r = delta_roots(&p, 1.9).unwrap();
        assert!((r.x1 + r.x2 + 3.8 / 0.39).abs() < 1e-12 * 10.0);
        assert!((r.x1 * r.x2 - 3.0 / 0.39).abs() < 1e-12 * 10.0);
        let q = SystemParams::x210(1.0).unwrap();
        let r = delta_roots(&q, 1.5).unwrap();
        assert!((r.x1 + r.x2 + 4.0).abs() < 1e-12 * 4.0);
        assert!((r.x1 * r.x2 - 3.0 / 1.75).abs() < 1e-12 * 2.0);
        assert!(matches!(delta_roots(&p, 0.0), Err(Error::OutsideAnnulus { .. })));
    }

    #[test]
    fn endpoints_are_rejected() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        let hp = 3f64.sqrt();
        assert!(delta_roots(&p, hp + 5e-10).is_err());
        assert!(delta_roots(&p, 2.0 - 5e-10).is_err());
        assert!(delta_roots(&p, hp + 1e-6).is_ok());
    }

    #[test]
    fn center_point_is_an_equilibrium() {
        for p in [
            SystemParams::x29(0.0, 1.0).unwrap(),
            SystemParams::x29(1.2, 1.8).unwrap(),
            SystemParams::x210(1.5).unwrap(),
        ] {
            for a in p.annuli() {
                let (x, y) = center_point(&p, &a);
                let (b, c) = (p.b(), p.c());
                let fx = x * (1.0 + b * x + x * x - y * y);
                let fy = y * (-1.0 - c * y + x * x - y * y);
                assert!(fx.abs() < 1e-12 && fy.abs() < 1e-12, "{fx} {fy}");
                assert!((p.hamiltonian(x, y) - a.center).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn samples_lie_on_the_level_curve() {
        let q = SystemParams::x210(1.0).unwrap();
        let pts = level_curve_sample(&q, 1.5, 64).unwrap();
        assert_eq!(pts.len(), 128);
        for &(x, y) in &pts {
            assert!((q.hamiltonian(x, y) - 1.5).abs() < 1e-9 * 2.5);
            assert!(x != 0.0 && y != 0.0);
        }
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        let pts = level_curve_sample(&p, 1.9, 8).unwrap();
        assert!(pts.iter().all(|&(x, y)| x < 0.0 && y < 0.0));
        assert!(level_curve_sample(&p, 1.9, 7).is_err());
    }

    #[test]
    fn x210_sample_is_symmetric_under_swap() {
        let q = SystemParams::x210(1.3).unwrap();
        let pts = level_curve_sample(&q, 1.2, 32).unwrap();
        for &(x, y) in &pts {
            assert!((q.hamiltonian(y, x) - 1.2).abs() < 1e-9 * 2.2);
        }
        let xmax = pts.iter().map(|p| p.0).fold(f64::MIN, f64::max);
        let ymax = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        assert!((xmax - ymax).abs() < 1e-2 * xmax.abs());
    }

    #[test]
    fn curve_shrinks_towards_the_center() {
        let p = SystemParams::x29(0.0, 1.0).unwrap();
        let hp = 3f64.sqrt();
        let near = delta_roots(&p, hp + 1e-6).unwrap();
        let far = delta_roots(&p, hp + 1e-2).unwrap();
        assert!(near.x2 - near.x1 < 0.1 * (far.x2 - far.x1));
    }
}
