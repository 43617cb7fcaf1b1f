use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use melnikov::certify::{run_suite, Suite, SuiteOptions};
use melnikov::closed_forms::melnikov_n3_coeffs;
use melnikov::ect::ect_verdict;
use melnikov::ode::{orientation_relation, poincare_return, refine_bracket, GRID_MARGIN};
use melnikov::oracle::oracle_melnikov;
use melnikov::{
    annulus, realize_configuration, AnnulusSpec, AnnulusTag, CoeffFile, Configuration, Error, Family,
    PerturbationCoeffs, PerturbedField, QuadratureConfig, SystemParams,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_IMPOSSIBLE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "melnikov", version, about = "Melnikov functions and limit-cycle counts for cubic Lotka-Volterra centers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate M(h) from the closed form and from quadrature.
    Eval(EvalArgs),
    /// Chebyshev verdict for each period annulus, as JSON.
    Ect(ParamArgs),
    /// Build and certify a cubic perturbation with u zeros on U+ and v on U-.
    Realize(RealizeArgs),
    /// Integrate the perturbed system and tabulate return-map displacements.
    Simulate(SimulateArgs),
    /// Run a certification suite and print a JSON report.
    Certify(CertifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    #[value(name = "X29")]
    X29,
    #[value(name = "X210")]
    X210,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::X29 => Family::X29,
            FamilyArg::X210 => Family::X210,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AnnulusArg {
    #[value(name = "U-")]
    Minus,
    #[value(name = "U+")]
    Plus,
    #[value(name = "U")]
    Single,
}

impl From<AnnulusArg> for AnnulusTag {
    fn from(a: AnnulusArg) -> AnnulusTag {
        match a {
            AnnulusArg::Minus => AnnulusTag::Minus,
            AnnulusArg::Plus => AnnulusTag::Plus,
            AnnulusArg::Single => AnnulusTag::Single,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    ClosedForms,
    Ect,
    Bounds,
    Configs,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, value_enum, default_value = "X29")]
    family: FamilyArg,
    #[arg(long, allow_negative_numbers = true)]
    b: f64,
    /// Ignored for X210 (c = b).
    #[arg(long, allow_negative_numbers = true)]
    c: Option<f64>,
}

impl ParamArgs {
    fn params(&self) -> anyhow::Result<SystemParams> {
        Ok(match self.family {
            FamilyArg::X29 => {
                let c = self.c.context("--c is required for X29")?;
                SystemParams::x29(self.b, c)?
            }
            FamilyArg::X210 => SystemParams::x210(self.b)?,
        })
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Overrides the family stored in the coefficient file.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Overrides b from the coefficient file.
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    /// Overrides c from the coefficient file.
    #[arg(long, allow_negative_numbers = true)]
    c: Option<f64>,
    #[arg(long)]
    coeffs: PathBuf,
    /// Defaults to every annulus of the family.
    #[arg(long, value_enum)]
    annulus: Option<AnnulusArg>,
    #[arg(long, default_value_t = 20)]
    grid: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct RealizeArgs {
    #[arg(long, allow_negative_numbers = true)]
    b: f64,
    #[arg(long, allow_negative_numbers = true)]
    c: f64,
    #[arg(long)]
    u: usize,
    #[arg(long)]
    v: usize,
    /// Where to write the coefficient file; stdout report only if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    coeffs: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    eps: f64,
    #[arg(long, value_enum)]
    annulus: Option<AnnulusArg>,
    #[arg(long, default_value_t = 40)]
    grid: usize,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long, default_value_t = SuiteOptions::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = SuiteOptions::default().draws)]
    draws: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Ect(a) => cmd_ect(a),
        Command::Realize(a) => cmd_realize(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Certify(a) => cmd_certify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("MEL_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("MEL_THREADS={v:?} is not a thread count"))?;
    if n == 0 {
        bail!("MEL_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn read_coeff_file(path: &PathBuf) -> anyhow::Result<CoeffFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(CoeffFile::from_json(&text)?)
}

fn selected_annuli(params: &SystemParams, tag: Option<AnnulusArg>) -> anyhow::Result<Vec<AnnulusSpec>> {
    Ok(match tag {
        Some(t) => vec![annulus(params, t.into())?],
        None => params.annuli(),
    })
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<u8> {
    let file = read_coeff_file(&a.coeffs)?;
    let family = a.family.map(Family::from).unwrap_or(file.family);
    let b = a.b.unwrap_or(file.b);
    let params = match family {
        Family::X29 => {
            let c = a.c.or(file.c).context("X29 needs c, from --c or the file")?;
            SystemParams::x29(b, c)?
        }
        Family::X210 => SystemParams::x210(b)?,
    };
    let coeffs = file.coeffs()?;
    let closed = coeffs.degree() == 3;
    let cfg = QuadratureConfig::default();
    let mut out = io::stdout().lock();
    if closed {
        writeln!(out, "annulus,h,M_closed,M_oracle,abs_diff")?;
    } else {
        writeln!(out, "annulus,h,M_oracle")?;
    }
    let mut worst: f64 = 0.0;
    for an in selected_annuli(&params, a.annulus)? {
        let q = if closed { Some(melnikov_n3_coeffs(&params, &coeffs, &an)?) } else { None };
        let hs = an.grid(a.grid, 0.02);
        let oracle = hs
            .par_iter()
            .map(|&h| oracle_melnikov(&params, &coeffs, h, &an, &cfg))
            .collect::<Result<Vec<_>, _>>()?;
        for (h, m) in hs.iter().zip(oracle) {
            match &q {
                Some(q) => {
                    let mc = q.eval(*h);
                    let d = (mc - m).abs();
                    worst = worst.max(d);
                    writeln!(out, "{},{h},{mc},{m},{d}", an.tag)?;
                }
                None => writeln!(out, "{},{h},{m}", an.tag)?,
            }
        }
    }
    if worst > a.tol {
        eprintln!("abs_diff {worst:e} exceeds tolerance {:e}", a.tol);
        return Ok(EXIT_FAILURE);
    }
    Ok(0)
}

fn cmd_ect(a: ParamArgs) -> anyhow::Result<u8> {
    let params = a.params()?;
    let mut obj = Map::new();
    for an in params.annuli() {
        let v = ect_verdict(&params, &an)?;
        obj.insert(an.tag.label().to_string(), serde_json::to_value(v.verdict)?);
    }
    println!("{}", serde_json::to_string_pretty(&Value::Object(obj))?);
    Ok(0)
}

fn cmd_realize(a: RealizeArgs) -> anyhow::Result<u8> {
    let params = SystemParams::x29(a.b, a.c)?;
    match realize_configuration(&params, Configuration::new(a.u, a.v)) {
        Ok(r) => {
            let file = CoeffFile::from_parts(&params, &r.coeffs);
            if let Some(path) = &a.out {
                fs::write(path, file.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            let report = json!({
                "status": "certified",
                "coefficients": serde_json::to_value(&file)?,
                "realization": serde_json::to_value(&r)?,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Err(Error::TargetImpossible(cert)) => {
            let report = json!({ "status": "impossible", "certificate": serde_json::to_value(&*cert)? });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_IMPOSSIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

fn prediction(params: &SystemParams, coeffs: &PerturbationCoeffs, an: &AnnulusSpec, h: f64) -> f64 {
    let sign = orientation_relation(params, an).unwrap_or(f64::NAN);
    let m = if coeffs.degree() == 3 {
        melnikov_n3_coeffs(params, coeffs, an).map(|q| q.eval(h))
    } else {
        oracle_melnikov(params, coeffs, h, an, &QuadratureConfig::default())
    };
    sign * m.unwrap_or(f64::NAN)
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<u8> {
    let file = read_coeff_file(&a.coeffs)?;
    let params = file.params()?;
    let coeffs = file.coeffs()?;
    let pf = PerturbedField::new(params, coeffs.clone(), a.eps)?;
    let mut out = io::stdout().lock();
    writeln!(out, "annulus,h,displacement,displacement_over_eps,m_prediction")?;
    let mut summary = Map::new();
    let mut failures = 0usize;
    for an in selected_annuli(&params, a.annulus)? {
        let hs = an.grid(a.grid.max(2), GRID_MARGIN);
        let rows: Vec<_> = hs.par_iter().map(|&h| (h, poincare_return(&pf, h, &an))).collect();
        let mut valid: Vec<(f64, f64)> = Vec::new();
        for (h, r) in &rows {
            let m = prediction(&params, &coeffs, &an, *h);
            match r {
                Ok(s) => {
                    writeln!(out, "{},{h},{},{},{m}", an.tag, s.h_return - s.h_start, s.scaled_displacement)?;
                    valid.push((*h, s.scaled_displacement));
                }
                Err(e) => {
                    failures += 1;
                    eprintln!("warning: {} h = {h}: {e}", an.tag);
                    writeln!(out, "{},{h},NaN,NaN,{m}", an.tag)?;
                }
            }
        }
        let mut brackets = Vec::new();
        for w in valid.windows(2) {
            if w[0].1 * w[1].1 < 0.0 {
                match refine_bracket(&pf, &an, w[0].0, w[1].0, w[0].1) {
                    Ok(b) => brackets.push(b),
                    Err(e) => {
                        eprintln!("warning: refining [{}, {}]: {e}", w[0].0, w[1].0);
                        brackets.push((w[0].0, w[1].0));
                    }
                }
            }
        }
        summary.insert(
            an.tag.label().to_string(),
            json!({ "brackets": brackets, "count": brackets.len() }),
        );
    }
    let summary = json!({ "eps": a.eps, "failed_rows": failures, "annuli": Value::Object(summary) });
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(if failures > 0 { EXIT_FAILURE } else { 0 })
}

fn cmd_certify(a: CertifyArgs) -> anyhow::Result<u8> {
    let suite = match a.suite {
        SuiteArg::ClosedForms => Suite::ClosedForms,
        SuiteArg::Ect => Suite::Ect,
        SuiteArg::Bounds => Suite::Bounds,
        SuiteArg::Configs => Suite::Configs,
    };
    let report = run_suite(suite, &SuiteOptions { seed: a.seed, draws: a.draws })?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    for c in report.failures() {
        eprintln!("FAIL {}: measured {:e}, tolerance {:e} ({})", c.name, c.measured, c.tolerance, c.detail);
    }
    Ok(if report.passed { 0 } else { EXIT_FAILURE })
}
