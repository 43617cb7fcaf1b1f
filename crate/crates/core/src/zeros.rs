//! Zero isolation for the reduced cubic Melnikov function and sign-change
//! counting for sampled functions.

use serde::{Deserialize, Serialize};

use crate::closed_forms::MelnikovN3;
use crate::error::{Error, Result};
use crate::geometry::{AnnulusSpec, ENDPOINT_GUARD};

/// Relative residual below which a candidate is a zero of `M`.
pub const ACCEPT_TOL: f64 = 1e-10;
/// Relative residual above which a candidate is a spurious quartic root.
pub const REJECT_TOL: f64 = 1e-6;

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Rounding bound for evaluating `c` at `x` by Horner's rule.
fn horner_bound(c: &[f64], x: f64) -> f64 {
    let ax = x.abs();
    let s = c.iter().rev().fold(0.0, |acc, &v| acc * ax + v.abs());
    8.0 * (c.len() as f64) * f64::EPSILON * s
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
}

/// A real root of a polynomial inside an interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyRoot {
    pub x: f64,
    /// Found at a critical point (even multiplicity, or numerically so).
    pub touch: bool,
}

/// Real roots of `Σ c_k x^k` in `[lo, hi]`, in increasing order.
///
/// The interval is split at the real critical points (found recursively);
/// on each monotone piece a sign change is refined by bisection, and a
/// critical point whose value is within rounding of zero is a touching root.
pub fn real_roots(c: &[f64], lo: f64, hi: f64) -> Vec<PolyRoot> {
    let mut c = c.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    if c.len() <= 1 {
        return Vec::new();
    }
    if c.len() == 2 {
        let x = -c[0] / c[1];
        return if (lo..=hi).contains(&x) { vec![PolyRoot { x, touch: false }] } else { Vec::new() };
    }
    let crit = real_roots(&derivative(&c), lo, hi);
    let mut knots = vec![lo];
    knots.extend(crit.iter().map(|r| r.x).filter(|&x| x > lo && x < hi));
    knots.push(hi);
    let vals: Vec<f64> = knots
        .iter()
        .map(|&x| {
            let v = horner(&c, x);
            if v.abs() <= horner_bound(&c, x) { 0.0 } else { v }
        })
        .collect();
    let mut out: Vec<PolyRoot> = Vec::new();
    for k in 0..knots.len() {
        if vals[k] == 0.0 {
            let interior = k > 0 && k + 1 < knots.len();
            out.push(PolyRoot { x: knots[k], touch: interior });
        }
        if k + 1 < knots.len() && vals[k] * vals[k + 1] < 0.0 {
            let (mut a, mut b) = (knots[k], knots[k + 1]);
            let sa = vals[k].signum();
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let v = horner(&c, m);
                if v == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if v.signum() == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(PolyRoot { x: 0.5 * (a + b), touch: false });
        }
    }
    out.sort_by(|p, q| p.x.total_cmp(&q.x));
    out.dedup_by(|p, q| (p.x - q.x).abs() <= 1e-14 * (1.0 + q.x.abs()));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroKind {
    Simple,
    EvenTouch,
    Uncertain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub h: f64,
    pub kind: ZeroKind,
    /// `|M(h)| / scale(h)`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroReport {
    pub annulus: AnnulusSpec,
    pub zeros: Vec<Zero>,
    pub count: usize,
}

impl ZeroReport {
    pub fn simple_count(&self) -> usize {
        self.zeros.iter().filter(|z| z.kind == ZeroKind::Simple).count()
    }

    pub fn all_simple(&self) -> bool {
        self.zeros.iter().all(|z| z.kind == ZeroKind::Simple)
    }

    pub fn has_uncertain(&self) -> bool {
        self.zeros.iter().any(|z| z.kind == ZeroKind::Uncertain)
    }
}

/// Coefficients of `(a1 + a2 h + a3 h^2)^2 - (a4 + a5 h)^2 (4 - h^2)`.
pub fn squared_quartic(a: [f64; 5]) -> [f64; 5] {
    let [a1, a2, a3, a4, a5] = a;
    [
        a1 * a1 - 4.0 * a4 * a4,
        2.0 * a1 * a2 - 8.0 * a4 * a5,
        a2 * a2 + 2.0 * a1 * a3 - 4.0 * a5 * a5 + a4 * a4,
        2.0 * a2 * a3 + 2.0 * a4 * a5,
        a3 * a3 + a5 * a5,
    ]
}

/// Coefficients in `t = h - hc` of the squared quartic divided by `t`.
///
/// With `M = t α(t) + B(t) (sqrt(4-h^2) - sqrt(4-hc^2))`, squaring gives
/// `t [t α^2 - 2 sc α B + B^2 (2 hc + t)]`, so the structural root at the
/// center drops out exactly and zeros close to it stay resolvable.
pub fn centered_cubic(q: &MelnikovN3) -> [f64; 4] {
    let [_, a2, a3, a4, a5] = q.coefficients();
    let hc = q.annulus().center;
    let sc = (4.0 - hc * hc).sqrt();
    let (p0, p1) = (a2 + 2.0 * a3 * hc + a5 * sc, a3);
    let (b0, b1) = (a4 + a5 * hc, a5);
    // α^2, α B, B^2 as quadratics in t
    let aa = [p0 * p0, 2.0 * p0 * p1, p1 * p1];
    let ab = [p0 * b0, p0 * b1 + p1 * b0, p1 * b1];
    let bb = [b0 * b0, 2.0 * b0 * b1, b1 * b1];
    [
        -2.0 * sc * ab[0] + 2.0 * hc * bb[0],
        aa[0] - 2.0 * sc * ab[1] + 2.0 * hc * bb[1] + bb[0],
        aa[1] - 2.0 * sc * ab[2] + 2.0 * hc * bb[2] + bb[1],
        aa[2] + bb[2],
    ]
}

/// Interior zeros of `M` on its annulus.
pub fn count_zeros_n3(q: &MelnikovN3) -> Result<ZeroReport> {
    if q.is_zero() {
        return Err(Error::DegenerateAllZero);
    }
    let an = *q.annulus();
    let lo = an.lo + ENDPOINT_GUARD;
    let hi = an.hi - ENDPOINT_GUARD;
    let hc = an.center;
    let roots = real_roots(&centered_cubic(q), lo - hc, hi - hc);
    let mut candidates: Vec<(f64, bool)> = Vec::new();
    for r in roots {
        let r = PolyRoot { x: hc + r.x, touch: r.touch };
        if !(r.x > lo && r.x < hi) {
            continue;
        }
        let mut h = r.x;
        // a few guarded Newton steps on M itself
        for _ in 0..3 {
            let d = derivative_m(q, h);
            if d == 0.0 {
                break;
            }
            let next = h - q.eval(h) / d;
            if !(next > lo && next < hi) || (next - r.x).abs() > 1e-6 * an.width() {
                break;
            }
            if q.eval(next).abs() < q.eval(h).abs() {
                h = next;
            } else {
                break;
            }
        }
        candidates.push((h, r.touch));
    }
    let mut zeros = Vec::new();
    for (idx, &(h, touch)) in candidates.iter().enumerate() {
        let scale = q.scale(h).max(f64::MIN_POSITIVE);
        let residual = q.eval(h).abs() / scale;
        if residual > REJECT_TOL {
            continue;
        }
        if residual > ACCEPT_TOL {
            zeros.push(Zero { h, kind: ZeroKind::Uncertain, residual });
            continue;
        }
        // probe distance: well below the gap to neighbours and to the ends
        let mut gap = (h - lo).min(hi - h);
        for (k, &(o, _)) in candidates.iter().enumerate() {
            if k != idx && o != h {
                gap = gap.min((o - h).abs());
            }
        }
        let delta = (0.25 * gap).min(1e-6 * an.width());
        let left = q.eval(h - delta);
        let right = q.eval(h + delta);
        let kind = if left * right < 0.0 {
            ZeroKind::Simple
        } else if touch || left * right > 0.0 {
            ZeroKind::EvenTouch
        } else {
            ZeroKind::Uncertain
        };
        zeros.push(Zero { h, kind, residual });
    }
    zeros.sort_by(|a, b| a.h.total_cmp(&b.h));
    zeros.dedup_by(|a, b| (a.h - b.h).abs() <= 1e-9);
    let count = zeros.iter().filter(|z| z.kind != ZeroKind::Uncertain).count();
    Ok(ZeroReport { annulus: an, zeros, count })
}

/// `M'(h)`.
pub fn derivative_m(q: &MelnikovN3, h: f64) -> f64 {
    let [_, a2, a3, a4, a5] = q.coefficients();
    let s = (4.0 - h * h).sqrt();
    a2 + 2.0 * a3 * h - a4 * h / s + a5 * (s - h * h / s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignChanges {
    pub count: usize,
    pub brackets: Vec<(f64, f64)>,
}

/// Grid points `lo + k (hi - lo)/(n + 1)`, `k = 1..=n`.
pub fn interior_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| lo + (hi - lo) * k as f64 / (n + 1) as f64).collect()
}

/// Strict sign alternations of `f` over an interior grid, each refined by
/// bisection. A lower bound for the number of zeros.
pub fn count_sign_changes<F: Fn(f64) -> f64>(f: F, interval: (f64, f64), grid_size: usize) -> SignChanges {
    let hs = interior_grid(interval.0, interval.1, grid_size);
    let vals: Vec<f64> = hs.iter().map(|&h| f(h)).collect();
    count_sign_changes_sampled(f, &hs, &vals)
}

/// As [`count_sign_changes`], with the grid values already computed.
/// Zero and non-finite samples are skipped.
pub fn count_sign_changes_sampled<F: Fn(f64) -> f64>(f: F, hs: &[f64], vals: &[f64]) -> SignChanges {
    let mut brackets = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (&h, &v) in hs.iter().zip(vals) {
        if v == 0.0 || !v.is_finite() {
            continue;
        }
        if let Some((ph, pv)) = prev {
            if pv * v < 0.0 {
                brackets.push(refine(&f, ph, h, pv));
            }
        }
        prev = Some((h, v));
    }
    SignChanges { count: brackets.len(), brackets }
}

fn refine<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, fa: f64) -> (f64, f64) {
    let tol = 1e-12 * (1.0 + a.abs().max(b.abs()));
    for _ in 0..100 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let v = f(m);
        if !v.is_finite() {
            break;
        }
        if v == 0.0 {
            return (m, m);
        }
        if v.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    (a, b)
}
