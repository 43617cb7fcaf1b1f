//! Direct integration of the perturbed cubic system and Poincaré return
//! maps measured in the first integral `H`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_forms::MelnikovN3;
use crate::coeffs::PerturbationCoeffs;
use crate::error::{Error, Result};
use crate::geometry::{annulus, center_point, first_integral_gradient, AnnulusSpec, Orientation, Oval, SystemParams};

/// Largest admissible `ε`.
pub const MAX_EPS: f64 = 1e-2;
/// Relative and absolute tolerance of the adaptive stepper.
pub const RTOL: f64 = 1e-12;
pub const ATOL: f64 = 1e-13;
/// Fraction of the annulus width kept clear at both ends by cycle detection.
pub const GRID_MARGIN: f64 = 0.02;
const SECTION_TOL: f64 = 1e-12;
const MAX_STEPS: usize = 2_000_000;
const MAX_TIME: f64 = 1e5;

#[derive(Clone, Debug)]
pub struct PerturbedField {
    params: SystemParams,
    coeffs: PerturbationCoeffs,
    eps: f64,
}

impl PerturbedField {
    pub fn new(params: SystemParams, coeffs: PerturbationCoeffs, eps: f64) -> Result<Self> {
        if !(0.0..=MAX_EPS).contains(&eps) {
            return Err(Error::InvalidArgument(format!("eps must lie in [0, {MAX_EPS}], got {eps}")));
        }
        Ok(PerturbedField { params, coeffs, eps })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn coeffs(&self) -> &PerturbationCoeffs {
        &self.coeffs
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.params, self.coeffs.clone(), eps)
    }

    /// Right-hand side augmented with `Ż = H_x f + H_y g`, so that
    /// `dH/dt = ε Ż` along trajectories.
    fn rhs(&self, s: &[f64; 3]) -> [f64; 3] {
        let (x, y) = (s[0], s[1]);
        let (b, c) = (self.params.b(), self.params.c());
        let (f, g) = self.coeffs.eval(x, y);
        let (hx, hy) = first_integral_gradient(b, c, x, y);
        [
            x * (1.0 + b * x + x * x - y * y) + self.eps * f,
            y * (-1.0 - c * y + x * x - y * y) + self.eps * g,
            hx * f + hy * g,
        ]
    }
}

pub fn field_eval(pf: &PerturbedField, x: f64, y: f64) -> (f64, f64) {
    let r = pf.rhs(&[x, y, 0.0]);
    (r[0], r[1])
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One Dormand–Prince 5(4) step; returns the new state and the scaled error.
fn dopri_step(pf: &PerturbedField, y: &[f64; 3], k1: &[f64; 3], h: f64) -> ([f64; 3], [f64; 3], f64) {
    let mut k = [[0.0; 3]; 7];
    k[0] = *k1;
    let mut out = *y;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for d in 0..3 {
                    ys[d] += h * a * kj[d];
                }
            }
        }
        if s == 6 {
            out = ys;
        }
        k[s] = pf.rhs(&ys);
    }
    let mut err = 0.0;
    for d in 0..3 {
        let e: f64 = h * (0..7).map(|s| E[s] * k[s][d]).sum::<f64>();
        let sc = ATOL + RTOL * y[d].abs().max(out[d].abs());
        err += (e / sc).powi(2);
    }
    (out, k[6], (err / 3.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSample {
    pub h_start: f64,
    /// `H` measured at the return point.
    pub h_return: f64,
    /// `(h_return - h_start) / ε`, accumulated as the integral of `Ż`
    /// rather than by differencing `H`.
    pub scaled_displacement: f64,
    pub flight_time: f64,
    pub revolutions: u32,
    pub steps: usize,
}

/// Direction of time along the unperturbed orbits of `spec`, read from the
/// tangent at the section point of the middle level.
pub fn time_orientation(params: &SystemParams, spec: &AnnulusSpec) -> Result<Orientation> {
    let an = annulus(params, spec.tag)?;
    let pf = PerturbedField::new(*params, PerturbationCoeffs::zeros(0), 0.0)?;
    let (c, p0) = section(params, &an, an.quantile(0.5))?;
    let v = field_eval(&pf, p0.0, p0.1);
    Ok(Orientation::from_sign(cross((p0.0 - c.0, p0.1 - c.1), v)))
}

/// `+1` when time runs in the orientation used for `M`, `-1` otherwise;
/// displacements compare to `sign * M`.
pub fn orientation_relation(params: &SystemParams, spec: &AnnulusSpec) -> Result<f64> {
    let an = annulus(params, spec.tag)?;
    Ok(time_orientation(params, &an)?.sign() * an.flow_orientation().sign())
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Center of `spec` and the point of `Γ_h` with largest `x`.
fn section(params: &SystemParams, spec: &AnnulusSpec, h: f64) -> Result<((f64, f64), (f64, f64))> {
    let oval = Oval::at(params, h)?;
    let x2 = oval.roots().x2;
    Ok((center_point(params, spec), (x2, (h * x2 - params.c()) / 2.0)))
}

/// One revolution from the section point of `Γ_{h_start}` back to the ray
/// from the center through it.
pub fn poincare_return(pf: &PerturbedField, h_start: f64, spec: &AnnulusSpec) -> Result<ReturnSample> {
    let params = pf.params;
    let an = annulus(&params, spec.tag)?;
    if !an.contains(h_start) {
        return Err(Error::OutsideAnnulus { h: h_start });
    }
    let (c, p0) = section(&params, &an, h_start)?;
    let dir = (p0.0 - c.0, p0.1 - c.1);
    let sect = |s: &[f64; 3]| cross(dir, (s[0] - c.0, s[1] - c.1));
    let ahead = |s: &[f64; 3]| dir.0 * (s[0] - c.0) + dir.1 * (s[1] - c.1) > 0.0;
    let v0 = field_eval(&pf.with_eps(0.0)?, p0.0, p0.1);
    let sigma = cross(dir, v0).signum();
    if sigma == 0.0 {
        return Err(Error::IntegrationFailure("flow tangent to the section".into()));
    }
    let quadrant = (p0.0.signum(), p0.1.signum());
    let (b, cc) = (params.b(), params.c());
    let escaped = |s: &[f64; 3]| {
        let hv = crate::geometry::first_integral(b, cc, s[0], s[1]);
        s[0].signum() != quadrant.0 || s[1].signum() != quadrant.1 || !(hv > an.lo && hv < an.hi) || !hv.is_finite()
    };

    let mut y = [p0.0, p0.1, 0.0];
    let mut k1 = pf.rhs(&y);
    let mut t = 0.0;
    let scale = (dir.0.hypot(dir.1)).max(1e-3);
    let mut step = 1e-3 * scale;
    let mut opposite = false;
    for n in 0..MAX_STEPS {
        if t > MAX_TIME {
            break;
        }
        let (y_new, k_new, err) = dopri_step(pf, &y, &k1, step);
        if !err.is_finite() {
            step *= 0.2;
            continue;
        }
        if err > 1.0 {
            step *= (0.9 * err.powf(-0.2)).max(0.2);
            if step < 1e-14 * (1.0 + t) {
                return Err(Error::IntegrationFailure(format!("step size underflow at t = {t}")));
            }
            continue;
        }
        if escaped(&y_new) {
            return Err(Error::LeftAnnulus { h: h_start });
        }
        let g_old = sect(&y);
        let g_new = sect(&y_new);
        if !opposite && g_new * sigma < 0.0 && !ahead(&y_new) {
            opposite = true;
        }
        if opposite && g_old * sigma <= 0.0 && g_new * sigma > 0.0 && ahead(&y_new) {
            let (tau, ys) = refine_crossing(pf, &y, &k1, step, &sect);
            return Ok(ReturnSample {
                h_start,
                h_return: crate::geometry::first_integral(b, cc, ys[0], ys[1]),
                scaled_displacement: ys[2],
                flight_time: t + tau,
                revolutions: 1,
                steps: n + 1,
            });
        }
        y = y_new;
        k1 = k_new;
        t += step;
        step *= (0.9 * err.max(1e-10).powf(-0.2)).min(5.0);
    }
    Err(Error::LeftAnnulus { h: h_start })
}

/// Step length `τ` in `(0, h]` at which the section function vanishes,
/// re-stepping from the start of the step.
fn refine_crossing<F: Fn(&[f64; 3]) -> f64>(
    pf: &PerturbedField,
    y: &[f64; 3],
    k1: &[f64; 3],
    h: f64,
    sect: &F,
) -> (f64, [f64; 3]) {
    let at = |tau: f64| dopri_step(pf, y, k1, tau).0;
    let (mut lo, mut hi) = (0.0, h);
    let (mut glo, mut ghi) = (sect(y), sect(&at(h)));
    let mut side = 0i32;
    let mut best = (h, at(h));
    for _ in 0..200 {
        let tau = if ghi != glo { hi - ghi * (hi - lo) / (ghi - glo) } else { 0.5 * (lo + hi) };
        let tau = if tau > lo && tau < hi { tau } else { 0.5 * (lo + hi) };
        let ys = at(tau);
        let g = sect(&ys);
        best = (tau, ys);
        if g.abs() <= SECTION_TOL || hi - lo <= SECTION_TOL * h.max(1.0) {
            break;
        }
        if (g > 0.0) == (ghi > 0.0) {
            hi = tau;
            ghi = g;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        } else {
            lo = tau;
            glo = g;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        }
    }
    best
}

/// Sign changes of the displacement over a grid of the annulus, each one
/// refined to a bracket.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CycleReport {
    pub annulus: AnnulusSpec,
    pub count: usize,
    pub brackets: Vec<(f64, f64)>,
    pub samples: Vec<ReturnSample>,
}

/// Bisection steps applied to each bracket.
pub const BRACKET_REFINEMENTS: usize = 12;

/// Shrinks a sign-change bracket of the displacement by bisection; `dlo` is
/// the displacement at `lo`.
pub fn refine_bracket(pf: &PerturbedField, spec: &AnnulusSpec, mut lo: f64, mut hi: f64, mut dlo: f64) -> Result<(f64, f64)> {
    for _ in 0..BRACKET_REFINEMENTS {
        let mid = 0.5 * (lo + hi);
        let d = poincare_return(pf, mid, spec)?.scaled_displacement;
        if d * dlo > 0.0 {
            lo = mid;
            dlo = d;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

pub fn detect_cycles(pf: &PerturbedField, spec: &AnnulusSpec, grid_size: usize) -> Result<CycleReport> {
    let an = annulus(&pf.params, spec.tag)?;
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!("grid needs at least 2 levels, got {grid_size}")));
    }
    let hs = an.grid(grid_size, GRID_MARGIN);
    let samples = hs
        .par_iter()
        .map(|&h| poincare_return(pf, h, &an))
        .collect::<Result<Vec<_>>>()?;
    let mut brackets = Vec::new();
    for w in samples.windows(2) {
        let (d0, d1) = (w[0].scaled_displacement, w[1].scaled_displacement);
        if d0 * d1 < 0.0 || (d1 == 0.0 && d0 != 0.0) {
            brackets.push((w[0].h_start, w[1].h_start, d0));
        }
    }
    let brackets = brackets
        .into_par_iter()
        .map(|(lo, hi, dlo)| refine_bracket(pf, &an, lo, hi, dlo))
        .collect::<Result<Vec<_>>>()?;
    Ok(CycleReport {
        annulus: an,
        count: brackets.len(),
        brackets,
        samples,
    })
}

/// Limit of `m(ε) = m0 + O(ε)` from values at two step sizes.
pub fn richardson(eps1: f64, m1: f64, eps2: f64, m2: f64) -> f64 {
    (eps1 * m2 - eps2 * m1) / (eps1 - eps2)
}

/// `n` interior levels where `|M|` is largest, at least a tenth of the
/// width apart, taken from a grid with the cycle-detection margin.
pub fn validation_levels(q: &MelnikovN3, n: usize) -> Vec<f64> {
    let an = q.annulus();
    let mut grid: Vec<(f64, f64)> = an.grid(80, 0.05).into_iter().map(|h| (h, q.eval(h).abs())).collect();
    grid.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out: Vec<f64> = Vec::new();
    for sep in [0.1, 0.05, 0.02, 0.0] {
        for &(h, _) in &grid {
            if out.len() == n {
                break;
            }
            if out.iter().all(|o| (o - h).abs() > sep * an.width()) {
                out.push(h);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::melnikov_n3_coeffs;
    use crate::geometry::{first_integral, AnnulusTag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ref_params() -> SystemParams {
        SystemParams::x29(0.0, 1.0).unwrap()
    }

    #[test]
    fn center_is_equilibrium() {
        let p = ref_params();
        let pf = PerturbedField::new(p, PerturbationCoeffs::zeros(3), 0.0).unwrap();
        for an in p.annuli() {
            let (x, y) = center_point(&p, &an);
            let (u, v) = field_eval(&pf, x, y);
            assert!(u.abs() < 1e-13 && v.abs() < 1e-13);
        }
    }

    #[test]
    fn eps_guard() {
        assert!(PerturbedField::new(ref_params(), PerturbationCoeffs::zeros(3), 0.1).is_err());
        assert!(PerturbedField::new(ref_params(), PerturbationCoeffs::zeros(3), -1e-3).is_err());
    }

    #[test]
    fn h_is_conserved_without_perturbation() {
        let p = ref_params();
        let pf = PerturbedField::new(p, PerturbationCoeffs::random_normal(3, &mut ChaCha8Rng::seed_from_u64(1)), 0.0)
            .unwrap();
        for an in p.annuli() {
            for q in [0.2, 0.5, 0.8] {
                let r = poincare_return(&pf, an.quantile(q), &an).unwrap();
                assert!((r.h_return - r.h_start).abs() <= 1e-9);
                assert!(r.flight_time > 0.0);
            }
        }
    }

    #[test]
    fn dh_dt_matches_gradient_identity() {
        let p = ref_params();
        let coeffs = PerturbationCoeffs::random_normal(3, &mut ChaCha8Rng::seed_from_u64(2));
        let eps = 1e-3;
        let pf = PerturbedField::new(p, coeffs.clone(), eps).unwrap();
        let an = annulus(&p, AnnulusTag::Plus).unwrap();
        let (_, p0) = section(&p, &an, an.quantile(0.5)).unwrap();
        let y = [p0.0, p0.1, 0.0];
        let k1 = pf.rhs(&y);
        let dt = 1e-4;
        let (y1, _, _) = dopri_step(&pf, &y, &k1, dt);
        let (ym, _, _) = dopri_step(&pf, &y, &k1, -dt);
        let fd = (first_integral(0.0, 1.0, y1[0], y1[1]) - first_integral(0.0, 1.0, ym[0], ym[1])) / (2.0 * dt);
        let (f, g) = coeffs.eval(p0.0, p0.1);
        let (hx, hy) = first_integral_gradient(0.0, 1.0, p0.0, p0.1);
        let want = eps * (hx * f + hy * g);
        assert!((fd - want).abs() < 1e-6 * want.abs().max(1e-6), "{fd} {want}");
    }

    #[test]
    fn time_runs_with_the_flow_orientation() {
        let p = ref_params();
        for an in p.annuli() {
            assert_eq!(orientation_relation(&p, &an).unwrap(), 1.0);
        }
        let x = SystemParams::x210(1.0).unwrap();
        assert_eq!(orientation_relation(&x, &x.annuli()[0]).unwrap(), 1.0);
    }

    #[test]
    fn displacement_tracks_melnikov() {
        let p = ref_params();
        let coeffs = PerturbationCoeffs::random_normal(3, &mut ChaCha8Rng::seed_from_u64(3));
        let pf = PerturbedField::new(p, coeffs.clone(), 1e-5).unwrap();
        for an in p.annuli() {
            let q = melnikov_n3_coeffs(&p, &coeffs, &an).unwrap();
            for h in validation_levels(&q, 3) {
                let r = poincare_return(&pf, h, &an).unwrap();
                let m = q.eval(h);
                assert!((r.scaled_displacement - m).abs() < 1e-2 * m.abs(), "{h}: {} {m}", r.scaled_displacement);
                assert_eq!((r.h_return - h).signum(), m.signum());
            }
        }
    }

    #[test]
    fn richardson_removes_linear_term() {
        let m = |e: f64| 2.0 + 3.0 * e;
        assert!((richardson(1e-4, m(1e-4), 1e-5, m(1e-5)) - 2.0).abs() < 1e-12);
    }
}
