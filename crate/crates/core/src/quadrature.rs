//! Globally adaptive Gauss-Kronrod (7/15) quadrature for scalar and
//! vector-valued integrands.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 500,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F>(f: &F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Panel
where
    F: Fn(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f(c, buf);
    for d in 0..dim {
        kron[d] = WGK[7] * buf[d];
        gauss[d] = WG[3] * buf[d];
    }
    for j in 0..7 {
        let dx = r * XGK[j];
        for x in [c - dx, c + dx] {
            f(x, buf);
            for d in 0..dim {
                kron[d] += WGK[j] * buf[d];
                if j % 2 == 1 {
                    gauss[d] += WG[j / 2] * buf[d];
                }
            }
        }
    }
    let mut error: f64 = 0.0;
    for d in 0..dim {
        kron[d] *= r;
        gauss[d] *= r;
        error = error.max((kron[d] - gauss[d]).abs());
    }
    Panel { a, b, value: kron, error }
}

/// Integrates the `dim` components written by `f(x, out)` over `[a, b]`.
///
/// The error target is `max(abs_tol, rel_tol * max_k |I_k|)`, measured in
/// the max-norm over components.
pub fn integrate_vec<F>(f: F, dim: usize, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
{
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    let first = gk15(&f, a, b, dim, &mut buf);
    let mut total = first.value.clone();
    let mut total_err = first.error;
    heap.push(first);
    let mut subdivisions = 0;
    loop {
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = cfg.abs_tol.max(cfg.rel_tol * scale);
        if total_err <= target {
            return Ok(total);
        }
        if subdivisions >= cfg.max_subdivisions {
            return Err(Error::NonConvergence {
                error: total_err,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&f, worst.a, mid, dim, &mut buf);
        let right = gk15(&f, mid, worst.b, dim, &mut buf);
        for d in 0..dim {
            total[d] += left.value[d] + right.value[d] - worst.value[d];
        }
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        // resum periodically so the running error does not drift
        if subdivisions % 64 == 0 {
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
}

pub fn integrate<F>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_vec(|x, out: &mut [f64]| out[0] = f(x), 1, a, b, cfg).map(|v| v[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_are_exact() {
        let cfg = QuadratureConfig::default();
        let v = integrate(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, &cfg).unwrap();
        assert!((v - (32.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn smooth_periodic_integrand() {
        let cfg = QuadratureConfig::default();
        let v = integrate(|t| 1.0 / (2.0 + t.cos()), 0.0, 2.0 * PI, &cfg).unwrap();
        assert!((v - 2.0 * PI / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand_needs_subdivision() {
        let cfg = QuadratureConfig::default();
        let v = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, &cfg).unwrap();
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn vector_components_share_panels() {
        let cfg = QuadratureConfig::default();
        let v = integrate_vec(
            |x, out: &mut [f64]| {
                out[0] = x.sin();
                out[1] = x.exp();
            },
            2,
            0.0,
            1.0,
            &cfg,
        )
        .unwrap();
        assert!((v[0] - (1.0 - 1f64.cos())).abs() < 1e-13);
        assert!((v[1] - (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let cfg = QuadratureConfig {
            abs_tol: 1e-15,
            rel_tol: 1e-15,
            max_subdivisions: 3,
        };
        let r = integrate(|x| x.sqrt().recip(), 0.0, 1.0, &cfg);
        assert!(matches!(r, Err(Error::NonConvergence { .. })));
    }
}
