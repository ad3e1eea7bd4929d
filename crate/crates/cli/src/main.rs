//! `ppe-gmm`: dataset generation, private GMM fitting, calibration,
//! distances and audits.
//!
//! Exit codes: 0 on success or release, 2 when the private fit returns the
//! failure symbol, 1 on any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ppe_gmm::audit::{default_triple_sampler, neighbor_at_distance};
use ppe_gmm::calibration::composed_budget;
use ppe_gmm::model::GmmRecord;
use ppe_gmm::ppe::PhaseTimings;
use ppe_gmm::{
    audit_concentration, audit_indistinguishability, audit_triangle, calibrate_gamma, calibrate_mask_config,
    compose_epsilon, dist_mixture, fit_gmm_private, make_separated_gmm, mask_gmm, min_subsets, sample_gmm, BotReason,
    CalibrationInput, Dataset64, Diagnostics, FitPlan, Gmm64, MaskConfig, PrivateFitConfig, RandomStream,
    SemimetricParams, Verdict,
};

const EXIT_BOT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "ppe-gmm",
    version,
    about = "Differentially private Gaussian mixture estimation"
)]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a well-separated mixture.
    Gen(GenArgs),
    /// Fit a mixture privately and print a run record.
    Fit(FitArgs),
    /// Print calibration outputs.
    Calibrate(CalibArgs),
    /// Print the distance between two mixture files.
    Dist(DistArgs),
    /// Run an empirical audit and print a JSON-lines report.
    #[command(subcommand)]
    Audit(AuditCommand),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long)]
    seed: u64,
    /// CSV, or binary when the extension is .bin or .f64.
    #[arg(long)]
    out_data: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Args, Clone, Copy, Serialize)]
struct CalibFlags {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 10.0)]
    c2: f64,
}

impl CalibFlags {
    fn input(&self, k: usize, d: usize) -> CalibrationInput {
        CalibrationInput {
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            delta: self.delta,
            k,
            d,
            c2: self.c2,
        }
    }
}

#[derive(Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: usize,
    /// Expected dimension; checked against the data when given.
    #[arg(long)]
    d: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    calib: CalibFlags,
    #[arg(long)]
    seed: u64,
    /// Chunk count override.
    #[arg(long)]
    t: Option<usize>,
    /// Agreement radius. Masking is then calibrated for accuracy only.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    /// Include agreement counts in the record. These are not covered by the
    /// privacy guarantee.
    #[arg(long)]
    #[serde(skip)]
    unsafe_diagnostics: bool,
    /// Include wall-clock phase timings in the record.
    #[arg(long)]
    #[serde(skip)]
    timings: bool,
}

#[derive(Args)]
struct CalibArgs {
    #[command(flatten)]
    calib: CalibFlags,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
}

#[derive(Args)]
struct DistArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Exceedance rate of the masker around a reference mixture.
    Concentration(ConcentrationArgs),
    /// Histogram log-ratio between masked neighbors at distance gamma.
    Indistinguishability(IndistArgs),
    /// Restricted approximate triangle inequality on sampled triples.
    Triangle(TriangleArgs),
}

#[derive(Args)]
struct EtaFlags {
    /// Explicit noise levels; all three replace the calibrated ones.
    #[arg(long, requires_all = ["eta_mean", "eta_cov"])]
    eta_w: Option<f64>,
    #[arg(long, requires_all = ["eta_w", "eta_cov"])]
    eta_mean: Option<f64>,
    #[arg(long, requires_all = ["eta_w", "eta_mean"])]
    eta_cov: Option<f64>,
}

impl EtaFlags {
    fn config(&self) -> Result<Option<MaskConfig>> {
        match (self.eta_w, self.eta_mean, self.eta_cov) {
            (Some(w), Some(m), Some(c)) => Ok(Some(MaskConfig::new(w, m, c)?)),
            _ => Ok(None),
        }
    }
}

#[derive(Args)]
struct ConcentrationArgs {
    #[arg(long)]
    gmm: PathBuf,
    #[command(flatten)]
    calib: CalibFlags,
    #[command(flatten)]
    eta: EtaFlags,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct IndistArgs {
    #[arg(long)]
    gmm: PathBuf,
    /// Neighbor mixture; defaults to a copy at distance gamma.
    #[arg(long)]
    gmm_prime: Option<PathBuf>,
    #[command(flatten)]
    calib: CalibFlags,
    #[command(flatten)]
    eta: EtaFlags,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TriangleArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 1.5)]
    z: f64,
    /// Largest masking scale used to spread each triple.
    #[arg(long, default_value_t = 0.5)]
    max_scale: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

/// Everything needed to reproduce a fit, plus its result.
#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a FitArgs,
    outcome: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    plan: Option<PlanEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bot_reason: Option<BotReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    released: Option<GmmRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<PhaseTimings>,
}

#[derive(Serialize)]
struct PlanEcho {
    #[serde(flatten)]
    plan: FitPlan,
    threshold: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => return cmd_fit(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Dist(a) => cmd_dist(a),
        Command::Audit(a) => cmd_audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_gmm(path: &Path) -> Result<Gmm64> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Gmm64::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `x` with 12 significant digits, in positional notation when reasonable.
fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.11}", x);
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        format!("{:.*}", (11 - exp) as usize, x)
    } else {
        format!("{:.11e}", x)
    }
}

/// JSON number with 12 significant digits.
fn json12(x: f64) -> String {
    format!("{:.11e}", x)
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let root = RandomStream::from_seed(a.seed);
    let truth: Gmm64 = make_separated_gmm(a.k, a.d, a.separation, &mut root.substream(0))?;
    let data = sample_gmm(&truth, a.n, &mut root.substream(1))?;
    data.save(&a.out_data)
        .with_context(|| format!("writing {}", a.out_data.display()))?;
    std::fs::write(&a.out_truth, truth.to_json()).with_context(|| format!("writing {}", a.out_truth.display()))?;
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> ExitCode {
    let mut record = RunRecord {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: a,
        outcome: "error",
        plan: None,
        bot_reason: None,
        released: None,
        error: None,
        diagnostics: None,
        timings: None,
    };
    let code = match run_fit(a, &mut record) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_BOT),
        Err(e) => {
            eprintln!("error: {e:#}");
            record.outcome = "error";
            record.error = Some(format!("{e:#}"));
            ExitCode::FAILURE
        }
    };
    println!("{}", serde_json::to_string_pretty(&record).expect("record serializes"));
    code
}

fn run_fit(a: &FitArgs, record: &mut RunRecord) -> Result<bool> {
    let data = Dataset64::load(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    if let Some(d) = a.d {
        if d != data.dim() {
            bail!("--d {d} does not match the data dimension {}", data.dim());
        }
    }
    let mut cfg = PrivateFitConfig::new(a.calib.input(a.k, data.dim()));
    cfg.t = a.t;
    cfg.radius = a.radius;
    cfg.learner.max_iters = a.max_iters;
    cfg.learner.restarts = a.restarts;
    let (plan, out) = fit_gmm_private(&data, &cfg, &RandomStream::from_seed(a.seed))?;
    record.plan = Some(PlanEcho {
        plan,
        threshold: out.diagnostics.threshold,
    });
    if a.unsafe_diagnostics {
        record.diagnostics = Some(out.diagnostics.clone());
    }
    if a.timings {
        record.timings = Some(out.timings);
    }
    Ok(match out.verdict {
        Verdict::Released(g) => {
            record.outcome = "released";
            record.released = Some(g.to_record());
            true
        }
        Verdict::Bot(reason) => {
            record.outcome = "bot";
            record.bot_reason = Some(reason);
            false
        }
    })
}

/// Prints every calibration output that is defined for the input. A
/// rejected input still prints the formula values that do not depend on the
/// rejected constraint, then fails.
fn cmd_calibrate(a: &CalibArgs) -> Result<()> {
    let inp = a.calib.input(a.k, a.d);
    let t_min = min_subsets(inp.epsilon, inp.delta)?;
    let eps_composed = compose_epsilon(inp.k, inp.component_epsilon(), inp.delta)?;
    let null = || "null".to_string();
    let (gamma, etas, failure) = match calibrate_gamma(&inp) {
        Err(e) => (null(), [null(), null(), null()], Some(e)),
        Ok(gamma) => match calibrate_mask_config(&inp) {
            Ok(m) => (
                json12(gamma),
                [json12(m.eta_w), json12(m.eta_mean), json12(m.eta_cov)],
                None,
            ),
            Err(e) => (json12(gamma), [null(), null(), null()], Some(e)),
        },
    };
    let [eta_w, eta_mean, eta_cov] = etas;
    let mut fields = vec![
        ("gamma", gamma),
        ("t_min", t_min.to_string()),
        ("eta_w", eta_w),
        ("eta_mean", eta_mean),
        ("eta_cov", eta_cov),
        ("epsilon_composed", json12(eps_composed)),
    ];
    if let Some(e) = &failure {
        fields.push(("error", serde_json::to_string(&e.to_string())?));
    }
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("\"{k}\": {v}")).collect();
    println!("{{{}}}", body.join(", "));
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_dist(a: &DistArgs) -> Result<()> {
    let ga = load_gmm(&a.a)?;
    let gb = load_gmm(&a.b)?;
    println!("{}", sig12(dist_mixture(&ga, &gb)?));
    Ok(())
}

fn cmd_audit(cmd: &AuditCommand) -> Result<()> {
    let report = match cmd {
        AuditCommand::Concentration(a) => {
            let g = load_gmm(&a.gmm)?;
            let cfg = match a.eta.config()? {
                Some(c) => c,
                None => calibrate_mask_config(&a.calib.input(g.k(), g.dim()))?,
            };
            let masker = |g: &Gmm64, s: &mut RandomStream| mask_gmm(g, &cfg, s);
            audit_concentration(
                masker,
                &g,
                a.calib.alpha,
                a.calib.beta,
                a.trials,
                &RandomStream::from_seed(a.seed),
            )?
        }
        AuditCommand::Indistinguishability(a) => {
            let f = load_gmm(&a.gmm)?;
            let inp = a.calib.input(f.k(), f.dim());
            let gamma = calibrate_gamma(&inp)?;
            let cfg = match a.eta.config()? {
                Some(c) => c,
                None => calibrate_mask_config(&inp)?,
            };
            let fp = match &a.gmm_prime {
                Some(p) => load_gmm(p)?,
                None => neighbor_at_distance(&f, gamma)?,
            };
            let (eps, delta) = composed_budget(&inp)?;
            let masker = |g: &Gmm64, s: &mut RandomStream| mask_gmm(g, &cfg, s);
            audit_indistinguishability(
                masker,
                &f,
                &fp,
                gamma,
                eps,
                delta,
                a.trials,
                &RandomStream::from_seed(a.seed),
            )?
        }
        AuditCommand::Triangle(a) => {
            let params = SemimetricParams::new(a.r, a.z)?;
            let sampler = default_triple_sampler::<f64>(a.k, a.d, a.max_scale);
            audit_triangle(sampler, &params, a.trials, &RandomStream::from_seed(a.seed))?
        }
    };
    println!("{}", report.to_json_line());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.5), "0.500000000000");
        assert_eq!(sig12(0.0), "0.00000000000");
        assert_eq!(sig12(123.456), "123.456000000");
        assert_eq!(sig12(6.011202350951e-6), "6.01120235095e-6");
        assert_eq!(json12(1.0933727211816454), "1.09337272118e0");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
