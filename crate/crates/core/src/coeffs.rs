//! Perturbation polynomials `f = Σ a_ij x^i y^j`, `g = Σ b_ij x^i y^j` and
//! their JSON file format.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{Family, SystemParams};

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationCoeffs {
    degree: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PerturbationCoeffs {
    pub fn zeros(degree: usize) -> Self {
        let len = (degree + 1) * (degree + 1);
        PerturbationCoeffs {
            degree,
            a: vec![0.0; len],
            b: vec![0.0; len],
        }
    }

    /// Standard normal entries for every monomial of total degree `<= degree`.
    pub fn random_normal<R: Rng + ?Sized>(degree: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(degree);
        for (i, j) in monomials(degree) {
            p.set_a(i, j, rng.sample(StandardNormal));
            p.set_b(i, j, rng.sample(StandardNormal));
        }
        p
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        (i + j <= self.degree).then(|| i * (self.degree + 1) + j)
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.a[k])
    }

    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.b[k])
    }

    /// Panics if `i + j` exceeds the degree.
    pub fn set_a(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).expect("monomial above degree");
        self.a[k] = v;
    }

    pub fn set_b(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).expect("monomial above degree");
        self.b[k] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(&self.b).all(|&v| v == 0.0)
    }

    /// `f(x, y)` and `g(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let n = self.degree;
        let mut f = 0.0;
        let mut g = 0.0;
        let mut xi = 1.0;
        for i in 0..=n {
            let mut yj = 1.0;
            for j in 0..=(n - i) {
                let k = i * (n + 1) + j;
                f += self.a[k] * xi * yj;
                g += self.b[k] * xi * yj;
                yj *= y;
            }
            xi *= x;
        }
        (f, g)
    }
}

/// All `(i, j)` with `i + j <= degree`.
pub fn monomials(degree: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=degree).flat_map(move |i| (0..=(degree - i)).map(move |j| (i, j)))
}

/// On-disk coefficient set:
/// `{"family":"X29","b":0.0,"c":1.0,"n":3,"a":{"1,1":0.5},"b_coeffs":{"3,0":1.0}}`.
/// Omitted entries are zero. For `X210`, `c` may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffFile {
    pub family: Family,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub n: usize,
    #[serde(default)]
    pub a: BTreeMap<String, f64>,
    #[serde(default)]
    pub b_coeffs: BTreeMap<String, f64>,
}

fn parse_key(key: &str, n: usize) -> Result<(usize, usize)> {
    let bad = || Error::CoeffFile(format!("bad monomial key {key:?}, expected \"i,j\""));
    let (i, j) = key.split_once(',').ok_or_else(bad)?;
    let i: usize = i.trim().parse().map_err(|_| bad())?;
    let j: usize = j.trim().parse().map_err(|_| bad())?;
    if i + j > n {
        return Err(Error::CoeffFile(format!(
            "monomial {key:?} exceeds degree n = {n}"
        )));
    }
    Ok((i, j))
}

impl CoeffFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::CoeffFile(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficient file serializes")
    }

    pub fn params(&self) -> Result<SystemParams> {
        match self.family {
            Family::X29 => {
                let c = self
                    .c
                    .ok_or_else(|| Error::CoeffFile("X29 file needs \"c\"".into()))?;
                SystemParams::x29(self.b, c)
            }
            Family::X210 => SystemParams::new(Family::X210, self.b, self.c.unwrap_or(self.b)),
        }
    }

    pub fn coeffs(&self) -> Result<PerturbationCoeffs> {
        let mut p = PerturbationCoeffs::zeros(self.n);
        for (key, &v) in &self.a {
            let (i, j) = parse_key(key, self.n)?;
            p.set_a(i, j, v);
        }
        for (key, &v) in &self.b_coeffs {
            let (i, j) = parse_key(key, self.n)?;
            p.set_b(i, j, v);
        }
        Ok(p)
    }

    /// Only nonzero entries are written.
    pub fn from_parts(params: &SystemParams, coeffs: &PerturbationCoeffs) -> Self {
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        for (i, j) in monomials(coeffs.degree()) {
            if coeffs.a(i, j) != 0.0 {
                a.insert(format!("{i},{j}"), coeffs.a(i, j));
            }
            if coeffs.b(i, j) != 0.0 {
                b.insert(format!("{i},{j}"), coeffs.b(i, j));
            }
        }
        CoeffFile {
            family: params.family(),
            b: params.b(),
            c: Some(params.c()),
            n: coeffs.degree(),
            a,
            b_coeffs: b,
        }
    }
}
