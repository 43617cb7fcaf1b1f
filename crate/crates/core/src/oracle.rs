//! Direct quadrature of the line integrals over a level curve.
//!
//! Every integral is split into the lower and upper branch over `[x1, x2]`
//! and mapped to `θ ∈ [0, π/2]` by `x = x1 + (x2 - x1) sin^2 θ`, which turns
//! the square-root endpoint behaviour into a smooth integrand.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::coeffs::{monomials, PerturbationCoeffs};
use crate::error::{Error, Result};
use crate::geometry::{AnnulusSpec, Oval, Orientation, SystemParams};
use crate::quadrature::{integrate, integrate_vec, QuadratureConfig};

/// Highest perturbation degree the oracle accepts.
pub const MAX_DEGREE: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MomentIndex {
    pub i: usize,
    pub j: usize,
}

impl MomentIndex {
    pub fn new(i: usize, j: usize) -> Self {
        MomentIndex { i, j }
    }
}

fn pow(x: f64, e: usize) -> f64 {
    x.powi(e as i32 - 2)
}

/// `∮ x^(i-2) y^(j-2) dx` over the oval.
pub fn oracle_i_on(oval: &Oval, idx: MomentIndex, orientation: Orientation, cfg: &QuadratureConfig) -> Result<f64> {
    let v = integrate(
        |t| {
            let p = oval.branch_at(t);
            let xi = pow(p.x, idx.i);
            (xi * pow(p.y_lower(), idx.j) - xi * pow(p.y_upper(), idx.j)) * p.dx
        },
        0.0,
        FRAC_PI_2,
        cfg,
    )?;
    Ok(orientation.sign() * v)
}

/// `∮ x^(i-2) y^(j-2) dy` over the oval.
pub fn oracle_dy_moment_on(
    oval: &Oval,
    idx: MomentIndex,
    orientation: Orientation,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let half_h = 0.5 * oval.h();
    let v = integrate(
        |t| {
            let p = oval.branch_at(t);
            let xi = pow(p.x, idx.i);
            let dy_lo = half_h * p.dx - p.droot;
            let dy_up = half_h * p.dx + p.droot;
            xi * pow(p.y_lower(), idx.j) * dy_lo - xi * pow(p.y_upper(), idx.j) * dy_up
        },
        0.0,
        FRAC_PI_2,
        cfg,
    )?;
    Ok(orientation.sign() * v)
}

pub fn oracle_i(
    params: &SystemParams,
    h: f64,
    idx: MomentIndex,
    orientation: Orientation,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    oracle_i_on(&Oval::at(params, h)?, idx, orientation, cfg)
}

pub fn oracle_dy_moment(
    params: &SystemParams,
    h: f64,
    idx: MomentIndex,
    orientation: Orientation,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    oracle_dy_moment_on(&Oval::at(params, h)?, idx, orientation, cfg)
}

fn weighted<F>(params: &SystemParams, h: f64, cfg: &QuadratureConfig, weight: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let oval = Oval::at(params, h)?;
    integrate(
        |t| {
            let p = oval.branch_at(t);
            weight(p.x) * p.root * p.dx
        },
        0.0,
        FRAC_PI_2,
        cfg,
    )
}

/// `J_k = ∫ x^(k-2) sqrt(Δ) dx` over `[x1, x2]`.
pub fn oracle_j(params: &SystemParams, h: f64, k: usize, cfg: &QuadratureConfig) -> Result<f64> {
    weighted(params, h, cfg, |x| pow(x, k))
}

fn assert_no_real_pole(b: f64) {
    assert!(b * b < 4.0, "x^2 + b x + 1 has a real root for b = {b}");
}

/// `S_i = ∫ 2 x^(i-2) sqrt(Δ) / (x^2 + b x + 1) dx`.
pub fn oracle_s(params: &SystemParams, h: f64, i: usize, cfg: &QuadratureConfig) -> Result<f64> {
    let b = params.b();
    assert_no_real_pole(b);
    weighted(params, h, cfg, |x| 2.0 * pow(x, i) / (x * x + b * x + 1.0))
}

/// `R_i = ∫ 2 x^(i-2) (h x - c) sqrt(Δ) / (x^2 + b x + 1)^2 dx`.
pub fn oracle_r(params: &SystemParams, h: f64, i: usize, cfg: &QuadratureConfig) -> Result<f64> {
    let (b, c) = (params.b(), params.c());
    assert_no_real_pole(b);
    weighted(params, h, cfg, |x| {
        let q = x * x + b * x + 1.0;
        2.0 * pow(x, i) * (h * x - c) / (q * q)
    })
}

/// All `I_ij` and dy-moments with `i + j <= degree` at one level, from a
/// single adaptive pass.
#[derive(Clone, Debug)]
pub struct MomentTable {
    degree: usize,
    index: Vec<(usize, usize)>,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl MomentTable {
    pub fn compute(oval: &Oval, degree: usize, orientation: Orientation, cfg: &QuadratureConfig) -> Result<Self> {
        let index: Vec<_> = monomials(degree).collect();
        let m = index.len();
        let half_h = 0.5 * oval.h();
        let np = degree + 3;
        let raw = integrate_vec(
            |t, out: &mut [f64]| {
                let p = oval.branch_at(t);
                let (yl, yu) = (p.y_lower(), p.y_upper());
                // powers from -2 up to degree
                let mut xs = [0.0; MAX_DEGREE + 3];
                let mut ls = [0.0; MAX_DEGREE + 3];
                let mut us = [0.0; MAX_DEGREE + 3];
                xs[0] = 1.0 / (p.x * p.x);
                ls[0] = 1.0 / (yl * yl);
                us[0] = 1.0 / (yu * yu);
                for e in 1..np {
                    xs[e] = xs[e - 1] * p.x;
                    ls[e] = ls[e - 1] * yl;
                    us[e] = us[e - 1] * yu;
                }
                let dy_lo = half_h * p.dx - p.droot;
                let dy_up = half_h * p.dx + p.droot;
                for (k, &(i, j)) in index.iter().enumerate() {
                    let lo = xs[i] * ls[j];
                    let up = xs[i] * us[j];
                    out[k] = (lo - up) * p.dx;
                    out[m + k] = lo * dy_lo - up * dy_up;
                }
            },
            2 * m,
            0.0,
            FRAC_PI_2,
            cfg,
        )?;
        let s = orientation.sign();
        Ok(MomentTable {
            degree,
            index,
            dx: raw[..m].iter().map(|v| s * v).collect(),
            dy: raw[m..].iter().map(|v| s * v).collect(),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn i(&self, i: usize, j: usize) -> Option<f64> {
        self.index.iter().position(|&p| p == (i, j)).map(|k| self.dx[k])
    }

    pub fn dy(&self, i: usize, j: usize) -> Option<f64> {
        self.index.iter().position(|&p| p == (i, j)).map(|k| self.dy[k])
    }

    /// `Σ a_ij ∮x^(i-2)y^(j-2)dy - b_ij ∮x^(i-2)y^(j-2)dx`.
    pub fn melnikov(&self, coeffs: &PerturbationCoeffs) -> f64 {
        self.index
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| coeffs.a(i, j) * self.dy[k] - coeffs.b(i, j) * self.dx[k])
            .sum()
    }
}

fn check_degree(coeffs: &PerturbationCoeffs) -> Result<()> {
    if coeffs.degree() > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "oracle supports degree <= {MAX_DEGREE}, got {}",
            coeffs.degree()
        )));
    }
    Ok(())
}

/// `M(h) = ∮ x^-2 y^-2 (f dy - g dx)`, taken in the direction of the
/// unperturbed flow on `annulus`.
pub fn oracle_melnikov(
    params: &SystemParams,
    coeffs: &PerturbationCoeffs,
    h: f64,
    annulus: &AnnulusSpec,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_degree(coeffs)?;
    if !annulus.contains(h) {
        return Err(Error::OutsideAnnulus { h });
    }
    let oval = Oval::at(params, h)?;
    let table = MomentTable::compute(&oval, coeffs.degree(), annulus.flow_orientation(), cfg)?;
    Ok(table.melnikov(coeffs))
}

/// Moment tables on a set of levels, computed in parallel.
pub fn moment_tables(
    params: &SystemParams,
    annulus: &AnnulusSpec,
    degree: usize,
    hs: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<MomentTable>> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "oracle supports degree <= {MAX_DEGREE}, got {degree}"
        )));
    }
    hs.par_iter()
        .map(|&h| {
            if !annulus.contains(h) {
                return Err(Error::OutsideAnnulus { h });
            }
            let oval = Oval::at(params, h)?;
            MomentTable::compute(&oval, degree, annulus.flow_orientation(), cfg)
        })
        .collect()
}
