//! Certification suites: batches of numerical checks with measured values,
//! each reported as pass or fail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::closed_forms::{cf_j01, cf_jk, cf_r, cf_s, melnikov_n3_coeffs, MelnikovN3};
use crate::coeffs::{monomials, PerturbationCoeffs};
use crate::designer::{design_vector, realize_configuration, Configuration};
use crate::ect::{ect_verdict, expects_partial, omega_at, omega_vs_wronskian, Verdict};
use crate::error::{Error, Result};
use crate::geometry::{annulus, AnnulusSpec, AnnulusTag, Family, SystemParams};
use crate::oracle::{moment_tables, oracle_j, oracle_r, oracle_s, MomentTable};
use crate::quadrature::QuadratureConfig;
use crate::zeros::count_zeros_n3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ClosedForms,
    Ect,
    Bounds,
    Configs,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::ClosedForms => "closed-forms",
            Suite::Ect => "ect",
            Suite::Bounds => "bounds",
            Suite::Configs => "configs",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        [Suite::ClosedForms, Suite::Ect, Suite::Bounds, Suite::Configs]
            .into_iter()
            .find(|x| x.name() == s)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random draws for the sampled checks.
    pub draws: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { seed: 20240917, draws: 10_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            passed: ok,
            measured: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> SuiteReport {
        SuiteReport {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// `|a - b| / max(1, |a|, |b|)`.
pub fn scaled_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
    if d.is_nan() {
        f64::INFINITY
    } else {
        d
    }
}

pub fn x29_defaults() -> Vec<SystemParams> {
    [(0.0, 1.0), (0.5, 1.5), (1.2, 1.8), (1.5, 1.9)]
        .into_iter()
        .map(|(b, c)| SystemParams::x29(b, c).expect("valid defaults"))
        .collect()
}

pub fn x210_defaults() -> Vec<SystemParams> {
    [0.5, 1.0, 1.5, 1.8]
        .into_iter()
        .map(|b| SystemParams::x210(b).expect("valid defaults"))
        .collect()
}

pub fn default_param_sets() -> Vec<SystemParams> {
    let mut v = x29_defaults();
    v.extend(x210_defaults());
    v
}

/// Levels used by the sampled checks: `n` points with a 2% margin.
pub fn sample_levels(an: &AnnulusSpec, n: usize) -> Vec<f64> {
    an.grid(n, 0.02)
}

fn label(p: &SystemParams) -> String {
    match p.family() {
        Family::X29 => format!("X29(b={}, c={})", p.b(), p.c()),
        Family::X210 => format!("X210(b={})", p.b()),
    }
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, f64::max)
}

/// Largest scaled deviation of every closed form from its oracle on one
/// annulus: `[J0/J1, J2..J6, S0..S3, R0..R3]`.
pub fn closed_form_deviation(params: &SystemParams, an: &AnnulusSpec, n: usize) -> Result<[f64; 4]> {
    let cfg = QuadratureConfig::default();
    let per_h = sample_levels(an, n)
        .par_iter()
        .map(|&h| -> Result<[f64; 4]> {
            let (j0, j1) = cf_j01(params, h, an)?;
            let dj01 = scaled_diff(j0, oracle_j(params, h, 0, &cfg)?).max(scaled_diff(j1, oracle_j(params, h, 1, &cfg)?));
            let mut djk: f64 = 0.0;
            for k in 2..=6 {
                djk = djk.max(scaled_diff(cf_jk(params, h, k)?, oracle_j(params, h, k, &cfg)?));
            }
            let (mut ds, mut dr): (f64, f64) = (0.0, 0.0);
            for i in 0..4 {
                ds = ds.max(scaled_diff(cf_s(params, h, an, i)?, oracle_s(params, h, i, &cfg)?));
                dr = dr.max(scaled_diff(cf_r(params, h, an, i)?, oracle_r(params, h, i, &cfg)?));
            }
            Ok([dj01, djk, ds, dr])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = [0.0f64; 4];
    for d in per_h {
        for k in 0..4 {
            out[k] = out[k].max(d[k]);
        }
    }
    Ok(out)
}

fn draw_cubic(rng: &mut ChaCha8Rng) -> PerturbationCoeffs {
    PerturbationCoeffs::random_normal(3, rng)
}

/// Largest scaled deviation between the reduced and the oracle Melnikov
/// function, over `draws` random cubic perturbations at `n` levels.
pub fn reduction_deviation(params: &SystemParams, an: &AnnulusSpec, draws: &[PerturbationCoeffs], n: usize) -> Result<f64> {
    let hs = sample_levels(an, n);
    let tables = moment_tables(params, an, 3, &hs, &QuadratureConfig::default())?;
    let mut worst: f64 = 0.0;
    for c in draws {
        let q = melnikov_n3_coeffs(params, c, an)?;
        for (h, t) in hs.iter().zip(&tables) {
            worst = worst.max(scaled_diff(q.eval(*h), t.melnikov(c)));
        }
    }
    Ok(worst)
}

/// One-hot perturbations for each of the 20 cubic coefficients.
pub fn one_hot_cubics() -> Vec<(String, PerturbationCoeffs)> {
    let mut out = Vec::new();
    for (i, j) in monomials(3) {
        let mut p = PerturbationCoeffs::zeros(3);
        p.set_a(i, j, 1.0);
        out.push((format!("a{i}{j}"), p));
        let mut p = PerturbationCoeffs::zeros(3);
        p.set_b(i, j, 1.0);
        out.push((format!("b{i}{j}"), p));
    }
    out
}

pub fn closed_forms_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    const TOL: f64 = 1e-8;
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draws: Vec<_> = (0..opts.draws.clamp(1, 50)).map(|_| draw_cubic(&mut rng)).collect();
    let hots = one_hot_cubics();
    for p in default_param_sets() {
        for an in p.annuli() {
            let tag = format!("{} {}", label(&p), an.tag);
            let d = closed_form_deviation(&p, &an, 20)?;
            for (name, v) in ["J0,J1", "J2..J6", "S0..S3", "R0..R3"].iter().zip(d) {
                checks.push(Check::at_most(format!("{tag} {name}"), v, TOL, "20 levels vs quadrature"));
            }
            let dm = reduction_deviation(&p, &an, &draws, 10)?;
            checks.push(Check::at_most(
                format!("{tag} reduced M"),
                dm,
                TOL,
                format!("{} random cubics, 10 levels", draws.len()),
            ));
            let hot_coeffs: Vec<_> = hots.iter().map(|(_, c)| c.clone()).collect();
            let dh = reduction_deviation(&p, &an, &hot_coeffs, 10)?;
            checks.push(Check::at_most(format!("{tag} one-hot M"), dh, TOL, "20 monomials, 10 levels"));
        }
    }
    Ok(SuiteReport::new(Suite::ClosedForms, checks))
}

/// Largest relative Wronskian residual of order `order` on `n` levels.
pub fn wronskian_residual(params: &SystemParams, an: &AnnulusSpec, order: usize, n: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for h in an.grid(n, 0.05) {
        worst = worst.max(omega_vs_wronskian(params, an, order, h, 0.1)?.rel_residual);
    }
    Ok(worst)
}

pub fn ect_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for p in default_param_sets() {
        for an in p.annuli() {
            let tag = format!("{} {}", label(&p), an.tag);
            let v = ect_verdict(&p, &an)?;
            let partial = matches!(v.verdict, Verdict::PartialEct { .. });
            let want = expects_partial(&p, an.tag);
            checks.push(Check::holds(
                format!("{tag} verdict"),
                partial == want,
                format!("{:?}, expected {}", v.verdict, if want { "PartialECT" } else { "FullECT" }),
            ));
            if let Verdict::PartialEct { d_lo, d_hi } = v.verdict {
                checks.push(Check::holds(
                    format!("{tag} d inside"),
                    d_lo > an.lo && d_hi < an.hi && d_hi - d_lo <= 1e-12,
                    format!("d in [{d_lo}, {d_hi}]"),
                ));
            }
            checks.push(Check::holds(format!("{tag} analytic structure"), v.analytic_agreement, ""));
            let sq = max_of(an.grid(200, 0.0).into_iter().map(|h| {
                let o1 = omega_at(an.center, 1, h).unwrap_or(f64::NAN);
                let o2 = omega_at(an.center, 2, h).unwrap_or(f64::NAN);
                scaled_diff(o2, o1 * o1)
            }));
            checks.push(Check::at_most(format!("{tag} Ω2 = Ω1²"), sq, f64::EPSILON, "200 levels"));
            checks.push(Check::at_most(
                format!("{tag} Ω3 vs Wronskian"),
                wronskian_residual(&p, &an, 3, 10)?,
                1e-6,
                "relative, 10 levels",
            ));
            checks.push(Check::at_most(
                format!("{tag} Ω4 vs Wronskian"),
                wronskian_residual(&p, &an, 4, 10)?,
                1e-4,
                "relative, 10 levels",
            ));
        }
    }
    Ok(SuiteReport::new(Suite::Ect, checks))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Largest per-annulus zero count over random quintuples.
pub fn max_count_random(an: &AnnulusSpec, draws: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qs: Vec<MelnikovN3> = (0..draws)
        .map(|_| MelnikovN3::from_free(*an, normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng)))
        .collect();
    let counts = qs
        .par_iter()
        .map(|q| count_zeros_n3(q).map(|r| r.count))
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.into_iter().max().unwrap_or(0))
}

/// Largest total count over random draws of `(a2±, a3±, a4+, a5+)`, with
/// the U- tail tied to U+ by `a4- = -a4+`, `a5- = -a5+`.
pub fn max_total_shared(params: &SystemParams, draws: usize, seed: u64) -> Result<(usize, bool)> {
    let up = annulus(params, AnnulusTag::Plus)?;
    let um = annulus(params, AnnulusTag::Minus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sextuples: Vec<[f64; 6]> = (0..draws)
        .map(|_| std::array::from_fn(|_| normal(&mut rng)))
        .collect();
    let totals = sextuples
        .par_iter()
        .map(|s| -> Result<(usize, bool)> {
            let plus = count_zeros_n3(&MelnikovN3::from_free(up, s[0], s[2], s[4], s[5]))?.count;
            let minus = count_zeros_n3(&MelnikovN3::from_free(um, s[1], s[3], -s[4], -s[5]))?.count;
            Ok((plus + minus, plus == 3 && minus == 3))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        totals.iter().map(|t| t.0).max().unwrap_or(0),
        totals.iter().any(|t| t.1),
    ))
}

/// Strict sign alternations in a sample sequence, skipping zeros.
pub fn alternations(vals: &[f64]) -> usize {
    let signs: Vec<f64> = vals.iter().filter(|v| **v != 0.0 && v.is_finite()).map(|v| v.signum()).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Bound on zeros per annulus for degree `n`.
pub fn general_bound(family: Family, n: usize) -> usize {
    match family {
        Family::X29 => 2 * n - 3,
        Family::X210 => (3 * n - 3) / 2,
    }
}

/// Largest grid sign-change count of the oracle Melnikov function over
/// random degree-`n` perturbations.
pub fn max_sign_changes_general(
    params: &SystemParams,
    an: &AnnulusSpec,
    n: usize,
    draws: usize,
    grid: usize,
    seed: u64,
) -> Result<usize> {
    let hs: Vec<f64> = an.grid(grid, 0.005);
    let tables: Vec<MomentTable> = moment_tables(params, an, n, &hs, &QuadratureConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<_> = (0..draws).map(|_| PerturbationCoeffs::random_normal(n, &mut rng)).collect();
    let counts: Vec<usize> = coeffs
        .par_iter()
        .map(|c| {
            let vals: Vec<f64> = tables.iter().map(|t| t.melnikov(c)).collect();
            alternations(&vals)
        })
        .collect();
    Ok(counts.into_iter().max().unwrap_or(0))
}

pub fn bounds_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for (k, p) in default_param_sets().into_iter().enumerate() {
        for an in p.annuli() {
            let m = max_count_random(&an, opts.draws, opts.seed.wrapping_add(k as u64))?;
            checks.push(Check::at_most(
                format!("{} {} zeros per annulus", label(&p), an.tag),
                m as f64,
                3.0,
                format!("{} random quintuples", opts.draws),
            ));
        }
        if p.family() == Family::X29 {
            let (total, both_three) = max_total_shared(&p, opts.draws, opts.seed.wrapping_add(100 + k as u64))?;
            checks.push(Check::at_most(
                format!("{} total over both annuli", label(&p)),
                total as f64,
                5.0,
                format!("{} shared draws, (3,3) seen: {both_three}", opts.draws),
            ));
        }
    }
    let general_draws = (opts.draws / 10).max(1);
    for p in [SystemParams::x29(0.0, 1.0)?, SystemParams::x210(1.0)?] {
        for n in [4, 5] {
            let bound = general_bound(p.family(), n);
            for an in p.annuli() {
                let m = max_sign_changes_general(&p, &an, n, general_draws, 200, opts.seed.wrapping_add(n as u64))?;
                checks.push(Check::at_most(
                    format!("{} {} degree {n} sign changes", label(&p), an.tag),
                    m as f64,
                    bound as f64,
                    format!("{general_draws} draws, 200 levels"),
                ));
            }
        }
    }
    Ok(SuiteReport::new(Suite::Bounds, checks))
}

pub fn configs_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for p in [SystemParams::x29(0.0, 1.0)?, SystemParams::x29(0.5, 1.5)?] {
        let results: Vec<_> = Configuration::realizable()
            .into_par_iter()
            .map(|t| (t, realize_configuration(&p, t)))
            .collect();
        for (t, r) in results {
            let name = format!("{} ({}, {})", label(&p), t.u, t.v);
            match r {
                Ok(r) => {
                    let round = design_vector(&p, &r.coeffs)?;
                    let dev = max_of(round.iter().zip(r.design).map(|(x, y)| scaled_diff(*x, y)));
                    let counted = r.plus_report.count == t.u && r.minus_report.count == t.v;
                    checks.push(Check::holds(
                        format!("{name} certified"),
                        counted,
                        format!("{:?} after {} attempts", r.construction, r.attempts),
                    ));
                    checks.push(Check::at_most(format!("{name} round trip"), dev, 1e-10, "design vector"));
                }
                Err(e) => checks.push(Check::holds(format!("{name} certified"), false, e.to_string())),
            }
        }
        let name = format!("{} (3, 3) excluded", label(&p));
        match realize_configuration(&p, Configuration::new(3, 3)) {
            Err(Error::TargetImpossible(cert)) => {
                let ok = cert.annuli_disjoint && cert.witnesses.iter().all(|w| w.capped_count <= 2);
                checks.push(Check::holds(
                    name,
                    ok,
                    format!("h- = {}, h+ = {}, {} witnesses", cert.h_minus, cert.h_plus, cert.witnesses.len()),
                ));
            }
            other => checks.push(Check::holds(name, false, format!("{other:?}"))),
        }
    }
    Ok(SuiteReport::new(Suite::Configs, checks))
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport> {
    match suite {
        Suite::ClosedForms => closed_forms_suite(opts),
        Suite::Ect => ect_suite(),
        Suite::Bounds => bounds_suite(opts),
        Suite::Configs => configs_suite(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::ClosedForms, Suite::Ect, Suite::Bounds, Suite::Configs] {
            assert_eq!(Suite::parse(s.name()), Some(s));
        }
        assert_eq!(Suite::parse("nope"), None);
    }

    #[test]
    fn scaled_diff_mixes_absolute_and_relative() {
        assert_eq!(scaled_diff(1e-12, 0.0), 1e-12);
        assert!((scaled_diff(1e6, 1e6 + 1.0) - 1e-6).abs() < 1e-12);
        assert_eq!(scaled_diff(f64::NAN, 0.0), f64::INFINITY);
    }

    #[test]
    fn general_bounds() {
        assert_eq!(general_bound(Family::X29, 4), 5);
        assert_eq!(general_bound(Family::X210, 4), 4);
        assert_eq!(general_bound(Family::X210, 5), 6);
    }
}
