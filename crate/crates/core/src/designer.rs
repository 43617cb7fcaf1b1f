//! Construction of perturbations with prescribed numbers of zeros of the
//! reduced Melnikov function, on one annulus or on both annuli at once.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::closed_forms::{melnikov_n3_coeffs, melnikov_n3_eval, MelnikovN3};
use crate::coeffs::{monomials, PerturbationCoeffs};
use crate::ect::{basis, ect_verdict};
use crate::error::{Error, Result};
use crate::geometry::{annulus, AnnulusSpec, AnnulusTag, Family, SystemParams};
use crate::zeros::{count_zeros_n3, ZeroReport};

/// Taylor coefficients of `M` at the center level, `M ≈ Σ s_i (h - hc)^i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SExpansion {
    pub annulus: AnnulusSpec,
    pub s: [f64; 4],
}

pub fn s_expansion(q: &MelnikovN3) -> SExpansion {
    let [_, a2, a3, a4, a5] = q.coefficients();
    let hc = q.annulus().center;
    let d = 4.0 - hc * hc;
    let s1 = a2 + 2.0 * a3 * hc - (a4 * hc + 2.0 * a5 * (hc * hc - 2.0)) / d.sqrt();
    let s2 = a3 - (2.0 * a4 - a5 * hc * (hc * hc - 6.0)) / d.powf(1.5);
    let s3 = -2.0 * (a4 * hc + 4.0 * a5) / d.powf(2.5);
    let s4 = -2.0 * (a4 + 5.0 * a5 * hc + a4 * hc * hc) / d.powf(3.5);
    SExpansion {
        annulus: *q.annulus(),
        s: [s1, s2, s3, s4],
    }
}

/// Inverse of [`s_expansion`]: `(a2, a3, a4, a5)` with the given Taylor
/// coefficients at `hc`.
pub fn free_from_s(hc: f64, s: [f64; 4]) -> [f64; 4] {
    let d = 4.0 - hc * hc;
    let [s1, s2, s3, s4] = s;
    let m = Matrix2::new(1.0 + hc * hc, 5.0 * hc, hc, 4.0);
    let rhs = Vector2::new(-0.5 * s4 * d.powf(3.5), -0.5 * s3 * d.powf(2.5));
    let x = m.lu().solve(&rhs).expect("determinant is 4 - hc^2 > 0");
    let (a4, a5) = (x[0], x[1]);
    let a3 = s2 + (2.0 * a4 - a5 * hc * (hc * hc - 6.0)) / d.powf(1.5);
    let a2 = s1 - 2.0 * a3 * hc + (a4 * hc + 2.0 * a5 * (hc * hc - 2.0)) / d.sqrt();
    [a2, a3, a4, a5]
}

/// Zero of `M'''` shared by both annuli.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Inflection {
    At(f64),
    AtInfinity,
}

/// `h0 = -4 a5 / a4`, the only zero of `M'''` on `(-2, 2)` if it lies there.
pub fn shared_inflection(a4: f64, a5: f64) -> Inflection {
    if a4 == 0.0 {
        Inflection::AtInfinity
    } else {
        Inflection::At(-4.0 * a5 / a4)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum H0Location {
    Plus,
    Minus,
    Neither,
    AtInfinity,
}

pub fn h0_location(params: &SystemParams, a4: f64, a5: f64) -> H0Location {
    match shared_inflection(a4, a5) {
        Inflection::AtInfinity => H0Location::AtInfinity,
        Inflection::At(h0) => {
            let inside = |tag| annulus(params, tag).map(|a| h0 > a.lo && h0 < a.hi).unwrap_or(false);
            if inside(AnnulusTag::Plus) {
                H0Location::Plus
            } else if inside(AnnulusTag::Minus) {
                H0Location::Minus
            } else {
                H0Location::Neither
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Construction {
    /// Zeros placed at interval quantiles by solving the interpolation
    /// conditions in the Chebyshev basis.
    Interpolation,
    /// Zeros placed geometrically close to the center through the Taylor
    /// coefficients `s1..s4`.
    Cascade,
}

/// Ratios between consecutive target distances from the center tried by
/// the cascade, in order.
pub const CASCADE_RATIOS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Exactly `k` simple zeros, with `M` alternating in sign between them.
pub fn certify_count(q: &MelnikovN3, k: usize) -> Option<ZeroReport> {
    let rep = count_zeros_n3(q).ok()?;
    if rep.count != k || !rep.all_simple() || rep.zeros.len() != k {
        return None;
    }
    let an = q.annulus();
    let mut knots = vec![an.lo];
    knots.extend(rep.zeros.iter().map(|z| z.h));
    knots.push(an.hi);
    let mids: Vec<f64> = knots.windows(2).map(|w| q.eval(0.5 * (w[0] + w[1]))).collect();
    let alternating = mids.windows(2).all(|w| w[0] * w[1] < 0.0) && mids.iter().all(|v| *v != 0.0);
    alternating.then_some(rep)
}

fn ect_window(params: &SystemParams, an: &AnnulusSpec) -> Result<(f64, f64)> {
    Ok(ect_verdict(params, an)?.ect_interval())
}

/// `fraction` of `window`, measured from the center end.
fn shrink(an: &AnnulusSpec, window: (f64, f64), fraction: f64) -> (f64, f64) {
    let (lo, hi) = window;
    if an.center == an.lo {
        (lo, lo + fraction * (hi - lo))
    } else {
        (hi - fraction * (hi - lo), hi)
    }
}

fn quantiles(k: usize) -> &'static [f64] {
    match k {
        1 => &[0.5],
        2 => &[0.25, 0.75],
        _ => &[0.25, 0.5, 0.75],
    }
}

/// Coefficients `c_0..c_k` (`c_k = 1`) of `Σ c_j f_j` vanishing at `targets`.
fn interpolate(anchor: f64, targets: &[f64]) -> Option<[f64; 4]> {
    let k = targets.len();
    let f = |j, t| basis(j, anchor, t);
    let mut out = [0.0; 4];
    out[k] = 1.0;
    match k {
        0 => {}
        1 => out[0] = -f(1, targets[0]) / f(0, targets[0]),
        2 => {
            let m = Matrix2::from_fn(|r, c| f(c, targets[r]));
            let rhs = Vector2::from_fn(|r, _| -f(2, targets[r]));
            let x = m.lu().solve(&rhs)?;
            out[0] = x[0];
            out[1] = x[1];
        }
        3 => {
            let m = Matrix3::from_fn(|r, c| f(c, targets[r]));
            let rhs = Vector3::from_fn(|r, _| -f(3, targets[r]));
            let x = m.lu().solve(&rhs)?;
            out[..3].copy_from_slice(x.as_slice());
        }
        _ => return None,
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Taylor coefficients of `t Π (t - τ_i)` (leading coefficient one).
fn cascade_s(taus: &[f64]) -> [f64; 4] {
    // polynomial coefficients of Π (t - τ_i), lowest first
    let mut p = vec![1.0];
    for &tau in taus {
        let mut n = vec![0.0; p.len() + 1];
        for (k, &v) in p.iter().enumerate() {
            n[k + 1] += v;
            n[k] -= tau * v;
        }
        p = n;
    }
    let mut s = [0.0; 4];
    for (k, v) in p.into_iter().enumerate() {
        s[k] = v;
    }
    s
}

fn interpolation_candidates(an: &AnnulusSpec, window: (f64, f64), k: usize) -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    for fraction in [1.0, 0.6, 0.3, 0.1] {
        let (lo, hi) = shrink(an, window, fraction);
        let targets: Vec<f64> = quantiles(k).iter().map(|q| lo + q * (hi - lo)).collect();
        if let Some(c) = interpolate(an.center, &targets) {
            out.push(c);
        }
    }
    out
}

fn cascade_candidates(an: &AnnulusSpec, window: (f64, f64), k: usize) -> Vec<[f64; 4]> {
    let dir = if an.center == an.lo { 1.0 } else { -1.0 };
    let width = window.1 - window.0;
    let mut out = Vec::new();
    for ratio in CASCADE_RATIOS {
        for w in [0.5, 0.2, 0.05] {
            let taus: Vec<f64> = (0..k).map(|i| dir * w * width * ratio.powi(i as i32)).collect();
            out.push(free_from_s(an.center, cascade_s(&taus)));
        }
    }
    out
}

pub fn realize_zero_count(params: &SystemParams, spec: &AnnulusSpec, k: usize) -> Result<MelnikovN3> {
    realize_zero_count_with(params, spec, k, Construction::Interpolation)
        .or_else(|_| realize_zero_count_with(params, spec, k, Construction::Cascade))
}

/// A quintuple on `spec` with exactly `k <= 3` certified simple zeros.
pub fn realize_zero_count_with(
    params: &SystemParams,
    spec: &AnnulusSpec,
    k: usize,
    construction: Construction,
) -> Result<MelnikovN3> {
    if k > 3 {
        return Err(Error::InvalidArgument(format!("at most 3 zeros are possible, asked for {k}")));
    }
    let an = annulus(params, spec.tag)?;
    if k == 0 {
        return Ok(MelnikovN3::from_free(an, 1.0, 0.0, 0.0, 0.0));
    }
    let window = if k >= 2 { ect_window(params, &an)? } else { an.interval() };
    let candidates = match construction {
        Construction::Interpolation => interpolation_candidates(&an, window, k),
        Construction::Cascade => cascade_candidates(&an, window, k),
    };
    for c in candidates {
        let q = MelnikovN3::from_free(an, c[0], c[1], c[2], c[3]);
        if certify_count(&q, k).is_some() {
            return Ok(q);
        }
    }
    Err(Error::Unachievable(format!("{k} zeros on {} by {construction:?}", an.tag)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    /// Zeros on `U+`.
    pub u: usize,
    /// Zeros on `U-`.
    pub v: usize,
}

impl Configuration {
    pub fn new(u: usize, v: usize) -> Self {
        Configuration { u, v }
    }

    /// All `(u, v)` with `u, v <= 3`, `u + v <= 5`.
    pub fn realizable() -> Vec<Configuration> {
        let mut out = Vec::new();
        for u in 0..=3 {
            for v in 0..=3 {
                if u + v <= 5 {
                    out.push(Configuration { u, v });
                }
            }
        }
        out
    }
}

/// Free perturbation coefficients, in order: `a11, b11, b00, a01, b21, b30`.
pub const FREE_COEFFICIENTS: [(char, usize, usize); 6] = [
    ('a', 1, 1),
    ('b', 1, 1),
    ('b', 0, 0),
    ('a', 0, 1),
    ('b', 2, 1),
    ('b', 3, 0),
];

fn unit(k: usize) -> PerturbationCoeffs {
    let mut p = PerturbationCoeffs::zeros(3);
    let (which, i, j) = FREE_COEFFICIENTS[k];
    if which == 'a' {
        p.set_a(i, j, 1.0);
    } else {
        p.set_b(i, j, 1.0);
    }
    p
}

/// `(a2+, a2-, a3+, a3-, a4+, a5+)` of a cubic perturbation.
pub fn design_vector(params: &SystemParams, coeffs: &PerturbationCoeffs) -> Result<[f64; 6]> {
    let plus = melnikov_n3_coeffs(params, coeffs, &annulus(params, AnnulusTag::Plus)?)?;
    let minus = melnikov_n3_coeffs(params, coeffs, &annulus(params, AnnulusTag::Minus)?)?;
    let [_, p2, p3, p4, p5] = plus.coefficients();
    let [_, m2, m3, _, _] = minus.coefficients();
    Ok([p2, m2, p3, m3, p4, p5])
}

/// Jacobian of [`design_vector`] with respect to the free coefficients.
pub fn free_coefficient_jacobian(params: &SystemParams) -> Result<SMatrix<f64, 6, 6>> {
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    for k in 0..6 {
        let col = design_vector(params, &unit(k))?;
        for r in 0..6 {
            m[(r, k)] = col[r];
        }
    }
    Ok(m)
}

/// The cubic perturbation, supported on the free coefficients, whose design
/// vector is `target`.
pub fn coefficients_for(params: &SystemParams, target: [f64; 6]) -> Result<PerturbationCoeffs> {
    let m = free_coefficient_jacobian(params)?;
    let x = m
        .lu()
        .solve(&SVector::<f64, 6>::from_column_slice(&target))
        .ok_or_else(|| Error::Unachievable("free-coefficient map is singular".into()))?;
    let mut p = PerturbationCoeffs::zeros(3);
    for (k, &(which, i, j)) in FREE_COEFFICIENTS.iter().enumerate() {
        if which == 'a' {
            p.set_a(i, j, x[k]);
        } else {
            p.set_b(i, j, x[k]);
        }
    }
    Ok(p)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InflectionWitness {
    pub configuration: Configuration,
    pub a4_plus: f64,
    pub a5_plus: f64,
    pub h0: Inflection,
    pub location: H0Location,
    /// Annulus not containing `h0`, and its certified zero count (at most 2).
    pub capped: AnnulusTag,
    pub capped_count: usize,
}

/// Why `(3, 3)` cannot occur: `M+'''` and `M-'''` share the single zero
/// `h0 = -4 a5+/a4+`, the annuli are disjoint, and on an annulus free of
/// `h0` the function has at most two interior zeros.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImpossibilityCertificate {
    pub h_minus: f64,
    pub h_plus: f64,
    pub annuli_disjoint: bool,
    pub witnesses: Vec<InflectionWitness>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Realization {
    pub target: Configuration,
    #[serde(skip)]
    pub coeffs: PerturbationCoeffs,
    /// `(a2+, a2-, a3+, a3-, a4+, a5+)` that was aimed for.
    pub design: [f64; 6],
    pub plus: MelnikovN3,
    pub minus: MelnikovN3,
    pub plus_report: ZeroReport,
    pub minus_report: ZeroReport,
    pub construction: Construction,
    pub attempts: usize,
}

/// Own coefficients `(a2, a3, a4)` of a quintuple with `a5 = 0`, `a4 != 0`
/// and `k <= 2` zeros.
fn quadratic_tail_candidates(params: &SystemParams, an: &AnnulusSpec, k: usize) -> Result<Vec<[f64; 3]>> {
    let hc = an.center;
    let mut out = Vec::new();
    match k {
        2 => {
            let window = ect_window(params, an)?;
            for c in interpolation_candidates(an, window, 2) {
                out.push([c[0], c[1], c[2]]);
            }
        }
        1 => {
            let t = an.quantile(0.5);
            let base = [-(t + hc), 1.0];
            for delta in [1e-2, -1e-2, 1e-3, -1e-3, 1e-4, -1e-4, 1e-6, -1e-6] {
                out.push([base[0], base[1], delta]);
            }
        }
        _ => {
            for delta in [1e-2, -1e-2, 1e-3, -1e-3, 1e-4, -1e-4, 1e-6, -1e-6] {
                out.push([1.0, 0.0, delta]);
            }
        }
    }
    Ok(out)
}

fn other(tag: AnnulusTag) -> AnnulusTag {
    match tag {
        AnnulusTag::Plus => AnnulusTag::Minus,
        _ => AnnulusTag::Plus,
    }
}

/// `(a2, a3)` on `an` giving `k` zeros of `a2 f0 + a3 f1 + a4 f2 + a5 f3` for
/// fixed `(a4, a5)`.
fn secondary_candidates(an: &AnnulusSpec, k: usize, a4: f64, a5: f64, construction: Construction) -> Vec<[f64; 2]> {
    let hc = an.center;
    let g = |t: f64| a4 * basis(2, hc, t) + a5 * basis(3, hc, t);
    let f0 = |t: f64| basis(0, hc, t);
    let f1 = |t: f64| basis(1, hc, t);
    let mut out = Vec::new();
    match k {
        2 => {
            let mut pairs: Vec<(f64, f64)> = Vec::new();
            let near = |q: f64| if hc == an.lo { an.quantile(q) } else { an.quantile(1.0 - q) };
            if construction == Construction::Cascade {
                for ratio in CASCADE_RATIOS {
                    for w in [0.3, 0.1, 0.03] {
                        pairs.push((near(w), near(w * ratio)));
                    }
                }
            }
            for (x, y) in [(0.25, 0.75), (0.2, 0.5), (0.5, 0.8), (0.1, 0.3), (0.3, 0.6), (0.05, 0.15), (0.02, 0.06)] {
                pairs.push((near(x), near(y)));
            }
            for (t1, t2) in pairs {
                let m = Matrix2::new(f0(t1), f1(t1), f0(t2), f1(t2));
                if let Some(x) = m.lu().solve(&Vector2::new(-g(t1), -g(t2))) {
                    out.push([x[0], x[1]]);
                }
            }
        }
        1 => {
            let gscale = an.grid(50, 0.01).iter().map(|&t| (g(t) / f0(t)).abs()).fold(0.0, f64::max).max(1.0);
            for q in [0.5, 0.25, 0.75, 0.1, 0.9] {
                let t = an.quantile(q);
                for a3 in [0.0, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0, 0.1, -0.1] {
                    let a3 = a3 * gscale;
                    out.push([-(a3 * f1(t) + g(t)) / f0(t), a3]);
                }
            }
        }
        _ => {
            // |a2 f0| dominates |g| on the whole annulus
            let sup = an.grid(400, 0.0005).iter().map(|&t| (g(t) / f0(t)).abs()).fold(0.0, f64::max);
            let base = sup.max(1e-300);
            for m in [2.0, 8.0, 64.0, 1024.0] {
                out.push([m * base, 0.0]);
                out.push([-m * base, 0.0]);
            }
        }
    }
    out
}

/// Steps of the target grid used by [`spread_triples`].
const TRIPLE_GRID: usize = 20;

/// Every triple of interior grid points of `window` at least one step apart.
fn spread_triples(window: (f64, f64)) -> Vec<[f64; 3]> {
    let (lo, hi) = window;
    let at = |i: usize| lo + (hi - lo) * i as f64 / TRIPLE_GRID as f64;
    let mut out = Vec::new();
    for i in 1..TRIPLE_GRID {
        for j in i + 1..TRIPLE_GRID {
            for k in j + 1..TRIPLE_GRID {
                out.push([at(i), at(j), at(k)]);
            }
        }
    }
    out
}

/// Own `(a2, a3, a4, a5)` candidates for the annulus carrying three zeros.
fn triple_candidates(params: &SystemParams, an: &AnnulusSpec, construction: Construction) -> Result<Vec<[f64; 4]>> {
    let window = ect_window(params, an)?;
    Ok(match construction {
        Construction::Interpolation => {
            let mut out = interpolation_candidates(an, window, 3);
            out.extend(spread_triples(window).iter().filter_map(|t| interpolate(an.center, t)));
            out
        }
        Construction::Cascade => cascade_candidates(an, window, 3),
    })
}

/// Per-annulus own coefficient candidates `(plus, minus)`.
fn design_candidates(
    params: &SystemParams,
    target: Configuration,
    construction: Construction,
) -> Result<Vec<([f64; 4], [f64; 4])>> {
    let up = annulus(params, AnnulusTag::Plus)?;
    let um = annulus(params, AnnulusTag::Minus)?;
    let (u, v) = (target.u, target.v);
    let mut out = Vec::new();
    if u.max(v) <= 1 {
        let one = |an: &AnnulusSpec, k: usize| -> [f64; 4] {
            if k == 0 {
                [1.0, 0.0, 0.0, 0.0]
            } else {
                [-(an.quantile(0.5) + an.center), 1.0, 0.0, 0.0]
            }
        };
        out.push((one(&up, u), one(&um, v)));
    } else if u.max(v) == 2 {
        let ps = quadratic_tail_candidates(params, &up, u)?;
        let ms = quadratic_tail_candidates(params, &um, v)?;
        for rho in &ps {
            for sigma in &ms {
                // rescale the U- element so its a4 is the negative of U+'s
                let lambda = -rho[2] / sigma[2];
                out.push((
                    [rho[0], rho[1], rho[2], 0.0],
                    [lambda * sigma[0], lambda * sigma[1], -rho[2], 0.0],
                ));
            }
        }
    } else {
        let (primary, k) = if u == 3 { (up, v) } else { (um, u) };
        let secondary = annulus(params, other(primary.tag))?;
        for c in triple_candidates(params, &primary, construction)? {
            let primary_q = MelnikovN3::from_free(primary, c[0], c[1], c[2], c[3]);
            if certify_count(&primary_q, 3).is_none() {
                continue;
            }
            let (a4s, a5s) = (-c[2], -c[3]);
            for s in secondary_candidates(&secondary, k, a4s, a5s, construction) {
                let sec = [s[0], s[1], a4s, a5s];
                if primary.tag == AnnulusTag::Plus {
                    out.push((c, sec));
                } else {
                    out.push((sec, c));
                }
            }
        }
    }
    Ok(out)
}

pub fn realize_configuration(params: &SystemParams, target: Configuration) -> Result<Realization> {
    match realize_configuration_with(params, target, Construction::Interpolation) {
        Err(Error::Unachievable(_)) => realize_configuration_with(params, target, Construction::Cascade),
        r => r,
    }
}

/// Coefficients realizing `target`, certified by zero counting on both
/// annuli after the round trip through the perturbation coefficients.
pub fn realize_configuration_with(
    params: &SystemParams,
    target: Configuration,
    construction: Construction,
) -> Result<Realization> {
    if params.family() != Family::X29 {
        return Err(Error::InvalidParams("configurations need the two-annulus family".into()));
    }
    if target.u > 3 || target.v > 3 {
        return Err(Error::InvalidArgument(format!(
            "({}, {}) exceeds three zeros on an annulus",
            target.u, target.v
        )));
    }
    if target.u + target.v > 5 {
        return Err(Error::TargetImpossible(Box::new(impossibility_certificate(params)?)));
    }
    let up = annulus(params, AnnulusTag::Plus)?;
    let um = annulus(params, AnnulusTag::Minus)?;
    let mut attempts = 0;
    let mut best: Option<((bool, f64), Realization)> = None;
    for (p, m) in design_candidates(params, target, construction)? {
        attempts += 1;
        let design = [p[0], m[0], p[1], m[1], p[2], p[3]];
        let coeffs = coefficients_for(params, design)?;
        let plus = melnikov_n3_coeffs(params, &coeffs, &up)?;
        let minus = melnikov_n3_coeffs(params, &coeffs, &um)?;
        let (Some(plus_report), Some(minus_report)) = (certify_count(&plus, target.u), certify_count(&minus, target.v))
        else {
            continue;
        };
        let score = (
            separated(&plus_report) && separated(&minus_report),
            resolution(&coeffs, &plus, &plus_report).min(resolution(&coeffs, &minus, &minus_report)),
        );
        if best.as_ref().is_some_and(|(s, _)| *s >= score) {
            continue;
        }
        let r = Realization {
            target,
            coeffs,
            design,
            plus,
            minus,
            plus_report,
            minus_report,
            construction,
            attempts: 0,
        };
        best = Some((score, r));
    }
    match best {
        Some((_, r)) => normalized(r, attempts),
        None => Err(Error::Unachievable(format!(
            "configuration ({}, {}) by {construction:?} after {attempts} attempts",
            target.u, target.v
        ))),
    }
}

/// Smallest fraction of the width between consecutive zeros, counting the
/// annulus ends.
pub fn zero_separation(rep: &ZeroReport) -> f64 {
    let an = rep.annulus;
    let mut knots = vec![an.lo];
    knots.extend(rep.zeros.iter().map(|z| z.h));
    knots.push(an.hi);
    knots.windows(2).map(|w| (w[1] - w[0]) / an.width()).fold(f64::INFINITY, f64::min)
}

/// Zeros far enough apart to be told apart on a coarse grid.
pub const MIN_SEPARATION: f64 = 0.05;

fn separated(rep: &ZeroReport) -> bool {
    zero_separation(rep) >= MIN_SEPARATION
}

fn max_abs_coefficient(coeffs: &PerturbationCoeffs) -> f64 {
    monomials(coeffs.degree())
        .map(|(i, j)| coeffs.a(i, j).abs().max(coeffs.b(i, j).abs()))
        .fold(0.0, f64::max)
}

/// Weakest lobe of `M` per unit coefficient size: the smallest, over the
/// pieces cut out by the zeros, of the largest `|M|` on that piece. Higher
/// order terms of the displacement grow quadratically in the coefficients,
/// so this measures how small `eps` must be before every sign change of `M`
/// shows up as a limit cycle.
fn resolution(coeffs: &PerturbationCoeffs, q: &MelnikovN3, rep: &ZeroReport) -> f64 {
    let an = q.annulus();
    let mut knots = vec![an.lo];
    knots.extend(rep.zeros.iter().map(|z| z.h));
    knots.push(an.hi);
    let weakest = knots
        .windows(2)
        .map(|w| {
            (1..40)
                .map(|i| melnikov_n3_eval(q, w[0] + (w[1] - w[0]) * i as f64 / 40.0).abs())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    weakest / max_abs_coefficient(coeffs).max(f64::MIN_POSITIVE)
}

/// Rescales to unit largest coefficient. Zero counts are invariant under
/// positive scaling.
fn normalized(mut r: Realization, attempts: usize) -> Result<Realization> {
    let k = 1.0 / max_abs_coefficient(&r.coeffs);
    for (i, j) in monomials(r.coeffs.degree()) {
        let (a, b) = (r.coeffs.a(i, j), r.coeffs.b(i, j));
        r.coeffs.set_a(i, j, k * a);
        r.coeffs.set_b(i, j, k * b);
    }
    r.design = r.design.map(|x| k * x);
    r.plus = r.plus.scaled(k);
    r.minus = r.minus.scaled(k);
    r.attempts = attempts;
    match (certify_count(&r.plus, r.target.u), certify_count(&r.minus, r.target.v)) {
        (Some(p), Some(m)) => {
            r.plus_report = p;
            r.minus_report = m;
            Ok(r)
        }
        _ => Err(Error::Unachievable("certification lost under rescaling".into())),
    }
}

/// Builds the `(3, 3)` certificate, with witnesses from `(3, 2)` and
/// `(2, 3)` realizations.
pub fn impossibility_certificate(params: &SystemParams) -> Result<ImpossibilityCertificate> {
    let up = annulus(params, AnnulusTag::Plus)?;
    let um = annulus(params, AnnulusTag::Minus)?;
    let mut witnesses = Vec::new();
    for target in [Configuration::new(3, 2), Configuration::new(2, 3)] {
        if let Ok(r) = realize_configuration(params, target) {
            let [_, _, _, a4, a5] = r.plus.coefficients();
            let location = h0_location(params, a4, a5);
            let (capped, capped_count) = match location {
                H0Location::Plus => (AnnulusTag::Minus, r.minus_report.count),
                _ => (AnnulusTag::Plus, r.plus_report.count),
            };
            witnesses.push(InflectionWitness {
                configuration: target,
                a4_plus: a4,
                a5_plus: a5,
                h0: shared_inflection(a4, a5),
                location,
                capped,
                capped_count,
            });
        }
    }
    Ok(ImpossibilityCertificate {
        h_minus: um.hi,
        h_plus: up.lo,
        annuli_disjoint: um.hi < up.lo,
        witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ref_params() -> SystemParams {
        SystemParams::x29(0.0, 1.0).unwrap()
    }

    #[test]
    fn s_expansion_of_basis_elements() {
        let p = ref_params();
        for an in p.annuli() {
            let e = s_expansion(&MelnikovN3::from_free(an, 1.0, 0.0, 0.0, 0.0));
            assert_eq!(e.s, [1.0, 0.0, 0.0, 0.0]);
        }
        // a4+ = 1 gives own a4 = +1 on U+ and -1 on U-
        let hp = 3f64.sqrt();
        let up = annulus(&p, AnnulusTag::Plus).unwrap();
        let um = annulus(&p, AnnulusTag::Minus).unwrap();
        let s3p = s_expansion(&MelnikovN3::from_free(up, 0.0, 0.0, 1.0, 0.0)).s[2];
        let s3m = s_expansion(&MelnikovN3::from_free(um, 0.0, 0.0, -1.0, 0.0)).s[2];
        assert!((s3p + 2.0 * hp / (4.0 - 3.0f64).powf(2.5)).abs() < 1e-14);
        assert!((s3m - 2.0 * (-hp) / (4.0 - 3.0f64).powf(2.5)).abs() < 1e-14);
    }

    #[test]
    fn s_expansion_inverts() {
        let up = annulus(&ref_params(), AnnulusTag::Plus).unwrap();
        let free = free_from_s(up.center, [0.3, -1.2, 2.0, 0.7]);
        let s = s_expansion(&MelnikovN3::from_free(up, free[0], free[1], free[2], free[3])).s;
        for (x, y) in s.iter().zip([0.3, -1.2, 2.0, 0.7]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn inflection_cases() {
        assert_eq!(shared_inflection(1.0, 0.0), Inflection::At(0.0));
        assert_eq!(shared_inflection(0.0, 2.0), Inflection::AtInfinity);
        let p = ref_params();
        assert_eq!(h0_location(&p, 1.0, 0.0), H0Location::Neither);
        assert_eq!(h0_location(&p, -4.0, 1.9 * 1.0), H0Location::Plus);
        assert_eq!(h0_location(&p, 4.0, 1.9), H0Location::Minus);
    }

    #[test]
    fn zero_count_realizations() {
        let p = ref_params();
        for an in p.annuli() {
            for k in 0..=3 {
                let q = realize_zero_count(&p, &an, k).unwrap();
                assert_eq!(count_zeros_n3(&q).unwrap().count, k);
            }
        }
        let x = SystemParams::x210(1.0).unwrap();
        let q = realize_zero_count(&x, &x.annuli()[0], 3).unwrap();
        assert_eq!(certify_count(&q, 3).unwrap().count, 3);
    }

    #[test]
    fn cascade_realizes_three_zeros() {
        let p = ref_params();
        for an in p.annuli() {
            let q = realize_zero_count_with(&p, &an, 3, Construction::Cascade).unwrap();
            assert!(certify_count(&q, 3).is_some());
        }
    }

    #[test]
    fn jacobian_determinant() {
        for (b, c) in [(0.0, 1.0), (0.5, 1.5), (1.2, 1.8)] {
            let p = SystemParams::x29(b, c).unwrap();
            let det = free_coefficient_jacobian(&p).unwrap().determinant();
            let want = 128.0 * c * PI.powi(6) / ((4.0 - b * b).powi(2) * (4.0 - c * c).powi(2));
            assert!((det - want).abs() < 1e-10 * want, "{det} {want}");
        }
    }

    #[test]
    fn zero_zero_configuration_has_a2_structure() {
        let r = realize_configuration(&ref_params(), Configuration::new(0, 0)).unwrap();
        let d = r.design;
        assert!(d[0] > 0.0 && d[0] == d[1] && d[2..].iter().all(|x| *x == 0.0), "{d:?}");
        assert_eq!((r.plus_report.count, r.minus_report.count), (0, 0));
    }

    #[test]
    fn three_three_is_impossible() {
        match realize_configuration(&ref_params(), Configuration::new(3, 3)) {
            Err(Error::TargetImpossible(cert)) => {
                assert!(cert.annuli_disjoint);
                assert_eq!(cert.witnesses.len(), 2);
                for w in &cert.witnesses {
                    assert!(w.capped_count <= 2);
                    assert!(matches!(w.location, H0Location::Plus | H0Location::Minus));
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn x210_has_no_configurations() {
        let x = SystemParams::x210(1.0).unwrap();
        assert!(realize_configuration(&x, Configuration::new(1, 0)).is_err());
    }
}
