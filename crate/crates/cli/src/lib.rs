//! `eprsim` command-line front-end.
//!
//! Flags override a JSON `--config` file, which overrides `EPRSIM_SEED`
//! (seed only), which overrides the built-in defaults. Exit status is 0 on
//! success, 2 when either arm is inconclusive and 1 on any error.

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eprsim_core::bellstats::{
    classify_with_margin, decimal, estimate, exact_bell_mean, exact_correlators, format_decimal, true_fidelity,
    BellEstimate, BellReport,
};
use eprsim_core::linalg::{random_density_operators, StateVector};
use eprsim_core::protocol::{
    outcome_probabilities, sample_records, schematic_outcome, Arm, ArmBuilder, ExperimentConfig, FunctionType,
    SampleRun, SchematicDetector,
};
use eprsim_core::qoptics::{hwp, Basis, OpticalElement, PathMode, Polarization};
use serde::Deserialize;
use serde_json::{json, Value};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INCONCLUSIVE: u8 = 2;

pub const SEED_ENV: &str = "EPRSIM_SEED";
pub const DEFAULT_RECORDS_PATH: &str = "records.csv";

#[derive(Debug, Parser)]
#[command(name = "eprsim", version, about = "Two-arm EPR Deutsch experiment simulator with Bell-test analysis")]
#[command(args_conflicts_with_subcommands = true, allow_negative_numbers = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate, analyse and write records and report (the default).
    Run(RunArgs),
    /// Check the ideal cases and the Bell-bound invariants.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with any of the run fields; flags take precedence.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Function in arm A: balanced or constant.
    #[arg(long)]
    pub fn_a: Option<FunctionType>,
    /// Function in arm B: balanced or constant.
    #[arg(long)]
    pub fn_b: Option<FunctionType>,
    /// Werner weight of the source in [0, 1].
    #[arg(long)]
    pub noise_p: Option<f64>,
    /// Detector click probability in (0, 1].
    #[arg(long)]
    pub efficiency: Option<f64>,
    /// Shots per arm and basis.
    #[arg(long)]
    pub shots: Option<usize>,
    /// RNG seed; falls back to EPRSIM_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence multiplier k for violations and decisions.
    #[arg(long)]
    pub confidence_k: Option<f64>,
    /// CSV destination for sampled records [default: records.csv].
    #[arg(long, value_name = "PATH")]
    pub out_records: Option<PathBuf>,
    /// Report destination; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out_report: Option<PathBuf>,
    /// Report format [default: json].
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Skip sampling and report exact expectations only.
    #[arg(long)]
    pub exact_only: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelftestArgs {
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Text,
}

/// Deliberate defects for checking that the selftest notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Hadamard plates rotated to minus their angle.
    HwpSign,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    fn_a: Option<FunctionType>,
    fn_b: Option<FunctionType>,
    noise_p: Option<f64>,
    efficiency: Option<f64>,
    shots: Option<usize>,
    seed: Option<u64>,
    confidence_k: Option<f64>,
    out_records: Option<PathBuf>,
    out_report: Option<PathBuf>,
    format: Option<ReportFormat>,
    exact_only: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub confidence_k: f64,
    /// `None` only in exact-only mode.
    pub out_records: Option<PathBuf>,
    pub out_report: Option<PathBuf>,
    pub format: ReportFormat,
    pub exact_only: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            confidence_k: 0.0,
            out_records: Some(PathBuf::from(DEFAULT_RECORDS_PATH)),
            out_report: None,
            format: ReportFormat::Json,
            exact_only: false,
        }
    }
}

impl RunConfig {
    /// Merges flags, optional config file and the seed environment value.
    pub fn resolve(args: &RunArgs, env_seed: Option<&str>) -> anyhow::Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str::<FileConfig>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let env_seed = env_seed
            .map(|s| s.trim().parse::<u64>().with_context(|| format!("{SEED_ENV}={s:?} is not a u64")))
            .transpose()?;
        let defaults = Self::default();
        let exact_only = args.exact_only || file.exact_only.unwrap_or(false);
        let experiment = ExperimentConfig {
            fn_a: args.fn_a.or(file.fn_a).unwrap_or(defaults.experiment.fn_a),
            fn_b: args.fn_b.or(file.fn_b).unwrap_or(defaults.experiment.fn_b),
            noise_p: args.noise_p.or(file.noise_p).unwrap_or(defaults.experiment.noise_p),
            detector_efficiency: args
                .efficiency
                .or(file.efficiency)
                .unwrap_or(defaults.experiment.detector_efficiency),
            shots_per_basis: args.shots.or(file.shots).unwrap_or(defaults.experiment.shots_per_basis),
            seed: args.seed.or(file.seed).or(env_seed).unwrap_or(defaults.experiment.seed),
        };
        let cfg = Self {
            experiment,
            confidence_k: args.confidence_k.or(file.confidence_k).unwrap_or(defaults.confidence_k),
            out_records: if exact_only {
                None
            } else {
                args.out_records.clone().or(file.out_records).or(defaults.out_records)
            },
            out_report: args.out_report.clone().or(file.out_report),
            format: args.format.or(file.format).unwrap_or_default(),
            exact_only,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.experiment.validate()?;
        if !(self.confidence_k >= 0.0 && self.confidence_k.is_finite()) {
            bail!("confidence k must be a finite number >= 0, got {}", self.confidence_k);
        }
        Ok(())
    }
}

/// Exact expectations of one arm's detector pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactArm {
    pub zz: f64,
    pub xx: f64,
    pub bell_mean: f64,
    pub fidelity_balanced: f64,
    pub fidelity_constant: f64,
}

pub fn exact_arm(builder: &ArmBuilder, cfg: &ExperimentConfig, arm: Arm) -> anyhow::Result<ExactArm> {
    let rho = builder.joint_output_state(cfg, arm)?;
    let (zz, xx) = exact_correlators(&rho)?;
    Ok(ExactArm {
        zz,
        xx,
        bell_mean: exact_bell_mean(&rho)?,
        fidelity_balanced: true_fidelity(&rho, FunctionType::Balanced)?,
        fidelity_constant: true_fidelity(&rho, FunctionType::Constant)?,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: BellReport,
    pub exact: [ExactArm; 2],
    pub sample: Option<SampleRun>,
    /// Rendered report, exactly as written.
    pub rendered: String,
}

impl RunOutput {
    pub fn exit_code(&self) -> u8 {
        if self.report.is_conclusive() {
            EXIT_OK
        } else {
            EXIT_INCONCLUSIVE
        }
    }
}

/// Runs the exact analysis and, unless exact-only, the sampled one; writes
/// the CSV and the report. Without `out_report` the report goes to `stdout`.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    let builder = ArmBuilder::default();
    let exact = [
        exact_arm(&builder, &cfg.experiment, Arm::A)?,
        exact_arm(&builder, &cfg.experiment, Arm::B)?,
    ];

    let (est_a, est_b, sample) = if cfg.exact_only {
        (BellEstimate::exact(Arm::A, exact[0].bell_mean), BellEstimate::exact(Arm::B, exact[1].bell_mean), None)
    } else {
        let sample = sample_records(&cfg.experiment)?;
        let est_a = estimate(&sample.records, Arm::A)?;
        let est_b = estimate(&sample.records, Arm::B)?;
        if let Some(path) = &cfg.out_records {
            let file = create(path)?;
            let mut w = BufWriter::new(file);
            sample.write_csv(&mut w)?;
            w.flush().with_context(|| format!("writing {}", path.display()))?;
        }
        (est_a, est_b, Some(sample))
    };
    let report = classify_with_margin(&est_a, &est_b, cfg.confidence_k);

    let rendered = match cfg.format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report_json(cfg, &report, &exact, sample.as_ref()))?;
            s.push('\n');
            s
        }
        ReportFormat::Text => report_text(cfg, &report, &exact, sample.as_ref()),
    };
    match &cfg.out_report {
        Some(path) => {
            let mut f = create(path)?;
            f.write_all(rendered.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        }
        None => stdout.write_all(rendered.as_bytes())?,
    }
    Ok(RunOutput { report, exact, sample, rendered })
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn exact_json(e: &ExactArm) -> Value {
    json!({
        "zz": decimal(e.zz),
        "xx": decimal(e.xx),
        "mean": decimal(e.bell_mean),
        "fidelity_balanced": decimal(e.fidelity_balanced),
        "fidelity_constant": decimal(e.fidelity_constant),
    })
}

fn dropped_counts(sample: &SampleRun, arm: Arm) -> usize {
    sample.dropped.iter().filter(|d| d.arm == arm).count()
}

pub fn report_json(cfg: &RunConfig, report: &BellReport, exact: &[ExactArm; 2], sample: Option<&SampleRun>) -> Value {
    let e = &cfg.experiment;
    let mut out = report.to_json_value();
    out["mode"] = json!(if cfg.exact_only { "exact" } else { "sampled" });
    out["config"] = json!({
        "fn_a": e.fn_a.as_str(),
        "fn_b": e.fn_b.as_str(),
        "noise_p": decimal(e.noise_p),
        "efficiency": decimal(e.detector_efficiency),
        "shots": e.shots_per_basis,
        "seed": e.seed,
    });
    out["exact"] = json!({ "arm_a": exact_json(&exact[0]), "arm_b": exact_json(&exact[1]) });
    if let Some(s) = sample {
        out["dropped"] = json!({ "arm_a": dropped_counts(s, Arm::A), "arm_b": dropped_counts(s, Arm::B) });
    }
    out
}

pub fn report_text(cfg: &RunConfig, report: &BellReport, exact: &[ExactArm; 2], sample: Option<&SampleRun>) -> String {
    let e = &cfg.experiment;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "fn_a = {}  fn_b = {}  p = {}  efficiency = {}  shots = {}  seed = {}  k = {}",
        e.fn_a, e.fn_b, e.noise_p, e.detector_efficiency, e.shots_per_basis, e.seed, cfg.confidence_k
    );
    let _ = writeln!(out, "mode: {}", if cfg.exact_only { "exact" } else { "sampled" });
    out.push_str(&report.to_text());
    let _ = writeln!(out, "exact:");
    for (name, x) in [("A", &exact[0]), ("B", &exact[1])] {
        let _ = writeln!(
            out,
            "  arm {name}: zz = {}  xx = {}  <B> = {}  F(balanced) = {}  F(constant) = {}",
            format_decimal(x.zz, 15),
            format_decimal(x.xx, 15),
            format_decimal(x.bell_mean, 15),
            format_decimal(x.fidelity_balanced, 15),
            format_decimal(x.fidelity_constant, 15),
        );
    }
    if let Some(s) = sample {
        let _ = writeln!(out, "dropped shots: A = {}  B = {}", dropped_counts(s, Arm::A), dropped_counts(s, Arm::B));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

fn tampered_plate(angle_deg: f64) -> OpticalElement {
    hwp(-angle_deg)
}

fn builder_for(fault: Option<Fault>) -> ArmBuilder {
    match fault {
        None => ArmBuilder::default(),
        Some(Fault::HwpSign) => ArmBuilder::with_hadamard_plate(tampered_plate),
    }
}

fn joint_ket(pol: Polarization, path: PathMode) -> StateVector {
    pol.ket().tensor(&path.ket()).expect("two-qubit ket")
}

/// All selftest checks, in table order.
pub fn selftest_checks(fault: Option<Fault>) -> Vec<Check> {
    let builder = builder_for(fault);
    let mut checks = Vec::new();

    // outcome signs in z: +1 always for balanced, -1 always for constant
    for fn_a in FunctionType::ALL {
        for fn_b in FunctionType::ALL {
            let cfg = ExperimentConfig { fn_a, fn_b, ..Default::default() };
            for arm in Arm::ALL {
                let f = cfg.function(arm);
                let name = format!("ideal {fn_a}/{fn_b} arm {arm} z-sign");
                let check = builder.joint_output_state(&cfg, arm).and_then(|rho| {
                    let [pp, pm, mp, mm] = outcome_probabilities(&rho, Basis::Z)?;
                    let wrong = if f.ideal_sign() > 0 { pm + mp } else { pp + mm };
                    let mean = exact_bell_mean(&rho)?;
                    let target = f64::from(f.ideal_sign()) * SQRT_2;
                    Ok(Check::new(
                        &name,
                        wrong < 1e-12 && (mean - target).abs() < 1e-12,
                        format!("P(wrong sign) = {wrong:.3e}, <B> = {mean:.12}"),
                    ))
                });
                checks.push(check.unwrap_or_else(|e| Check::new(&name, false, e.to_string())));
            }
        }
    }

    // second Hadamard plate of each arm: ((|H>+|V>)_2 + (|H>-|V>)_2')/2
    let want = StateVector::from_real(&[0.5, 0.5, 0.5, -0.5]).expect("normalised");
    let input = joint_ket(Polarization::H, PathMode::P2);
    for arm in Arm::ALL {
        let label = match arm {
            Arm::A => "HWP2",
            Arm::B => "HWP5",
        };
        let name = format!("hwp2-sign arm {arm} ({label})");
        let mut ok = true;
        let mut detail = String::new();
        for f in FunctionType::ALL {
            match builder.build(f, arm).state_after(&input, label) {
                Ok(got) => {
                    let dev = got
                        .amplitudes()
                        .iter()
                        .zip(want.amplitudes())
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max);
                    ok &= dev < 1e-12;
                    let _ = write!(detail, "{f}: max dev {dev:.3e} ");
                }
                Err(e) => {
                    ok = false;
                    let _ = write!(detail, "{f}: {e} ");
                }
            }
        }
        checks.push(Check::new(name, ok, detail.trim_end()));
    }

    // schematic interferometer: constant → D2, balanced → D2' for α = 1
    for (f, want) in [(FunctionType::Constant, SchematicDetector::D2), (FunctionType::Balanced, SchematicDetector::D2Prime)] {
        let name = format!("schematic {f}");
        match schematic_outcome(f, 1) {
            Ok(o) => checks.push(Check::new(name, o.detector == want, format!("{:?}", o.detector))),
            Err(e) => checks.push(Check::new(name, false, e.to_string())),
        }
    }

    let (mut tsirelson_worst, mut sandwich_worst) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut failure = None;
    match random_density_operators(2024, 100, 4) {
        Ok(states) => {
            for rho in &states {
                let res = (|| -> eprsim_core::Result<()> {
                    let m = exact_bell_mean(rho)?;
                    tsirelson_worst = tsirelson_worst.max(m.abs() - SQRT_2);
                    for f in FunctionType::ALL {
                        let w = f64::from(f.ideal_sign()) * m / SQRT_2;
                        let fid = true_fidelity(rho, f)?;
                        sandwich_worst = sandwich_worst.max(w - fid).max(fid - (w + 1.0) / 2.0);
                    }
                    Ok(())
                })();
                if let Err(e) = res {
                    failure = Some(e.to_string());
                }
            }
        }
        Err(e) => failure = Some(e.to_string()),
    }
    let detail = |worst: f64| failure.clone().unwrap_or_else(|| format!("worst excess {worst:.3e}"));
    checks.push(Check::new(
        "tsirelson (100 random states)",
        failure.is_none() && tsirelson_worst <= 1e-10,
        detail(tsirelson_worst),
    ));
    checks.push(Check::new(
        "fidelity sandwich (100 random states)",
        failure.is_none() && sandwich_worst <= 1e-10,
        detail(sandwich_worst),
    ));
    checks
}

pub fn render_checks(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        let _ = writeln!(out, "{:<4}  {:<width$}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        let _ = writeln!(out, "all {} checks passed", checks.len());
    } else {
        let _ = writeln!(out, "{} of {} checks failed: {}", failed.len(), checks.len(), failed.join(", "));
    }
    out
}

pub fn selftest(args: &SelftestArgs, stdout: &mut dyn Write) -> anyhow::Result<u8> {
    let start = Instant::now();
    let checks = selftest_checks(args.inject_fault);
    stdout.write_all(render_checks(&checks).as_bytes())?;
    writeln!(stdout, "elapsed {:.3} s", start.elapsed().as_secs_f64())?;
    Ok(if checks.iter().all(|c| c.passed) { EXIT_OK } else { EXIT_ERROR })
}

/// Dispatches a parsed command line.
pub fn execute(cli: &Cli, env_seed: Option<&str>, stdout: &mut dyn Write) -> anyhow::Result<u8> {
    match &cli.command {
        Some(Command::Selftest(args)) => selftest(args, stdout),
        Some(Command::Run(args)) => Ok(run(&RunConfig::resolve(args, env_seed)?, stdout)?.exit_code()),
        None => Ok(run(&RunConfig::resolve(&cli.run, env_seed)?, stdout)?.exit_code()),
    }
}

pub fn main_with(cli: &Cli) -> ExitCode {
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, env_seed.as_deref(), &mut lock) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("eprsim").chain(list.iter().copied())).unwrap()
    }

    #[test]
    fn flags_parse_without_subcommand() {
        let cli = args(&["--fn-a", "constant", "--noise-p", "0.7", "--exact-only"]);
        assert!(cli.command.is_none());
        let cfg = RunConfig::resolve(&cli.run, None).unwrap();
        assert_eq!(cfg.experiment.fn_a, FunctionType::Constant);
        assert_eq!(cfg.experiment.noise_p, 0.7);
        assert!(cfg.exact_only && cfg.out_records.is_none());
    }

    #[test]
    fn env_seed_is_a_fallback() {
        let cli = args(&[]);
        assert_eq!(RunConfig::resolve(&cli.run, Some("17")).unwrap().experiment.seed, 17);
        let cli = args(&["--seed", "2"]);
        assert_eq!(RunConfig::resolve(&cli.run, Some("17")).unwrap().experiment.seed, 2);
        assert!(RunConfig::resolve(&cli.run, Some("x")).is_err());
    }

    #[test]
    fn exit_code_tracks_inconclusive() {
        let mut sink = Vec::new();
        for (p, want) in [(1.0, EXIT_OK), (0.7, EXIT_INCONCLUSIVE), (0.75, EXIT_OK)] {
            let cfg = RunConfig {
                experiment: ExperimentConfig { noise_p: p, ..Default::default() },
                exact_only: true,
                out_records: None,
                ..Default::default()
            };
            assert_eq!(run(&cfg, &mut sink).unwrap().exit_code(), want, "p = {p}");
        }
    }

    #[test]
    fn selftest_table() {
        let checks = selftest_checks(None);
        assert!(checks.iter().all(|c| c.passed), "{}", render_checks(&checks));
        let tampered = selftest_checks(Some(Fault::HwpSign));
        let failed: Vec<_> = tampered.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert!(failed.iter().any(|n| n.starts_with("hwp2-sign")), "{failed:?}");
    }
}
