//! Command-line front end.
//!
//! Exit codes: 0 success, 1 `compare --strict` found unmatched poles, 2 invalid
//! input, 3 no eigenvalue cluster survived, 4 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::continuation::{estimate_two_channel, extend_model, extend_response, TwoChannelOptions};
use crate::error::Error;
use crate::io::{self, ModelDocument, TraceDocument};
use crate::model::{model_distance, ExpPolyModel};
use crate::pencil::PencilConfig;
use crate::pipeline::{estimate, Derivative, Estimate, EstimateOptions, RecoveryPath};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNMATCHED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NO_CLUSTERS: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "bcm-spectral", version, about = "Exponential-polynomial spectral estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a model on [t0, t0 + 2T] with 2n-1 points.
    Synth(SynthArgs),
    /// Recover poles and amplitudes from a trace.
    Estimate(EstimateArgs),
    /// Evaluate a model on a new time grid.
    Extend(ExtendArgs),
    /// Match the poles of two models and report their distance.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SynthArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    /// Half window T.
    #[arg(long = "T")]
    half_window: f64,
    /// Pencil grid size; the trace has 2n-1 samples.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    two_channel: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RecoveryArg {
    Paper,
    Lsq,
    Both,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = PencilConfig::default().rank_tol)]
    rank_tol: f64,
    #[arg(long, default_value_t = PencilConfig::default().cluster_tol)]
    cluster_tol: f64,
    #[arg(long, default_value_t = PencilConfig::default().residual_tol)]
    residual_tol: f64,
    /// `fd` or `analytic:PATH` with PATH a model file.
    #[arg(long, default_value = "fd")]
    derivative: String,
    #[arg(long, value_enum, default_value_t = RecoveryArg::Paper)]
    recovery: RecoveryArg,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct ExtendArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long)]
    step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct CompareArgs {
    /// Given twice: the two models to compare.
    #[arg(long = "model", required = true, num_args = 1)]
    models: Vec<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    window: Vec<f64>,
    /// Exit 1 when a pole is left unmatched or multiplicities differ.
    #[arg(long)]
    strict: bool,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoClusters | Error::KernelZero => EXIT_NO_CLUSTERS,
        Error::Numerical(_) | Error::RankDeficient { .. } | Error::DegeneratePairing { .. } => {
            EXIT_NUMERICAL
        }
        _ => EXIT_INVALID,
    }
}

fn num(x: f64) -> String {
    ryu::Buffer::new().format(x).to_owned()
}

fn cnum(z: Complex64) -> String {
    format!("{},{}", num(z.re), num(z.im))
}

/// Runs the command line `args` (program name first), writing reports to
/// `out` and errors to `err`; returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_INVALID;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(&a, out),
        Command::Estimate(a) => return run_estimate(&a, out, err),
        Command::Extend(a) => extend(&a, out),
        Command::Compare(a) => compare(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// [`run_with`] on the process arguments and standard streams.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

type CmdResult = std::result::Result<i32, Error>;

fn synth(a: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    if a.n < 2 {
        return Err(Error::InvalidGrid(format!("n must be at least 2, got {}", a.n)));
    }
    if !(a.half_window > 0.0 && a.half_window.is_finite()) {
        return Err(Error::InvalidGrid(format!("T must be positive, got {}", a.half_window)));
    }
    let step = a.half_window / (a.n - 1) as f64;
    let len = 2 * a.n - 1;
    if a.two_channel {
        let model = io::read_two_channel_model(&a.model)?;
        let resp = model.synthesize(a.t0, step, len)?;
        io::write_two_channel_trace(&a.out, &resp)?;
        let _ = writeln!(out, "channels=2 samples={len}");
    } else {
        let model = io::read_model(&a.model)?;
        let trace = model.synthesize(a.t0, step, len)?;
        io::write_trace(&a.out, &trace)?;
        let _ = writeln!(out, "channels=1 samples={len}");
    }
    Ok(EXIT_OK)
}

enum DerivativeSource {
    FiniteDifference,
    Analytic(PathBuf),
}

fn parse_derivative(spec: &str) -> std::result::Result<DerivativeSource, Error> {
    if spec == "fd" {
        return Ok(DerivativeSource::FiniteDifference);
    }
    match spec.strip_prefix("analytic:") {
        Some(path) if !path.is_empty() => Ok(DerivativeSource::Analytic(PathBuf::from(path))),
        _ => Err(Error::Schema(format!("--derivative must be 'fd' or 'analytic:PATH', got '{spec}'"))),
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

fn run_estimate(a: &EstimateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match estimate_cmd(a, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            let code = exit_code(&e);
            let status = if code == EXIT_NO_CLUSTERS { "nopoles" } else { "error" };
            let _ = writeln!(out, "status={status} clusters=0 residual=nan");
            code
        }
    }
}

fn report_clusters(est: &Estimate, out: &mut dyn Write) {
    let _ = writeln!(out, "rank={}", est.rank);
    for c in &est.clusters {
        let _ = writeln!(
            out,
            "cluster lambda={} multiplicity={} residual={} adjoint_residual={}",
            cnum(c.lambda),
            c.multiplicity,
            num(c.residual),
            num(c.adjoint_residual)
        );
    }
    for d in &est.diagnostics {
        let _ = writeln!(out, "diagnostic: {d}");
    }
    for u in &est.unrecovered {
        let _ = writeln!(
            out,
            "unrecovered: a^{} at {} (degenerate pairing at chain index {})",
            u.coefficient,
            cnum(u.lambda),
            u.chain_index
        );
    }
}

/// Per-coefficient relative differences between two models on the same poles.
fn agreement_report(spectral: &ExpPolyModel, lsq: &ExpPolyModel) -> (String, f64) {
    let mut text = String::new();
    let mut worst: f64 = 0.0;
    for (p, l) in spectral.modes().iter().zip(lsq.modes()) {
        let scale = l.coeffs.as_slice().iter().map(|a| a.norm()).fold(0.0, f64::max);
        for (i, (x, y)) in p.coeffs.as_slice().iter().zip(l.coeffs.as_slice()).enumerate() {
            let rel = if scale > 0.0 { (x - y).norm() / scale } else { (x - y).norm() };
            worst = worst.max(rel);
            text.push_str(&format!(
                "pole={} a^{} spectral={} lsq={} reldiff={}\n",
                cnum(p.lambda()),
                i + 1,
                cnum(*x),
                cnum(*y),
                num(rel)
            ));
        }
    }
    text.push_str(&format!("max_reldiff={}\n", num(worst)));
    (text, worst)
}

fn estimate_cmd(a: &EstimateArgs, out: &mut dyn Write) -> CmdResult {
    let pencil = PencilConfig {
        rank_tol: a.rank_tol,
        cluster_tol: a.cluster_tol,
        residual_tol: a.residual_tol,
        ..PencilConfig::default()
    };
    pencil.validate()?;
    let source = parse_derivative(&a.derivative)?;
    let recovery = match a.recovery {
        RecoveryArg::Paper => RecoveryPath::Spectral,
        RecoveryArg::Lsq => RecoveryPath::Lsq,
        RecoveryArg::Both => RecoveryPath::Both,
    };
    match io::read_trace_document(&a.trace)? {
        TraceDocument::Single(trace) => {
            let derivative = match &source {
                DerivativeSource::FiniteDifference => Derivative::FiniteDifference,
                DerivativeSource::Analytic(p) => Derivative::Analytic(io::read_model(p)?),
            };
            let est = estimate(&trace, &EstimateOptions { pencil, derivative, recovery })?;
            io::write_model(&a.out, &est.model)?;
            report_clusters(&est, out);
            if let Some(lsq) = &est.lsq {
                io::write_model(&sibling(&a.out, "lsq.json"), lsq)?;
                let (text, worst) = agreement_report(&est.model, lsq);
                let path = sibling(&a.out, "agreement.txt");
                std::fs::write(&path, text).map_err(|source| Error::Io { path, source })?;
                let _ = writeln!(out, "agreement max_reldiff={}", num(worst));
            }
            let _ = writeln!(
                out,
                "status=ok clusters={} residual={}",
                est.clusters.len(),
                num(est.residual)
            );
        }
        TraceDocument::TwoChannel(resp) => {
            let analytic = match &source {
                DerivativeSource::FiniteDifference => None,
                DerivativeSource::Analytic(p) => Some(io::read_two_channel_model(p)?),
            };
            let opts = TwoChannelOptions { pencil, analytic, ..TwoChannelOptions::default() };
            let est = estimate_two_channel(&resp, &opts)?;
            io::write_two_channel_model(&a.out, &est.model)?;
            let _ = writeln!(out, "pole_channel=v{}", est.pole_channel);
            report_clusters(&est.estimate, out);
            let _ = writeln!(
                out,
                "channel_residuals={},{}",
                num(est.residuals[0]),
                num(est.residuals[1])
            );
            let _ = writeln!(
                out,
                "status=ok clusters={} residual={}",
                est.estimate.clusters.len(),
                num(est.residuals[0].max(est.residuals[1]))
            );
        }
    }
    Ok(EXIT_OK)
}

fn extend(a: &ExtendArgs, out: &mut dyn Write) -> CmdResult {
    match io::read_model_document(&a.model)? {
        ModelDocument::Single(m) => {
            let trace = extend_model(&m, a.from, a.to, a.step)?;
            io::write_trace(&a.out, &trace)?;
            let _ = writeln!(out, "channels=1 samples={}", trace.len());
        }
        ModelDocument::TwoChannel(m) => {
            let resp = extend_response(&m, a.from, a.to, a.step)?;
            io::write_two_channel_trace(&a.out, &resp)?;
            let _ = writeln!(out, "channels=2 samples={}", resp.channel0().len());
        }
    }
    Ok(EXIT_OK)
}

fn coeff_reldiff(a: &crate::model::Mode, b: &crate::model::Mode) -> f64 {
    let (x, y) = (a.coeffs.as_slice(), b.coeffs.as_slice());
    let scale = x.iter().chain(y).map(|c| c.norm()).fold(0.0, f64::max);
    let zero = Complex64::new(0.0, 0.0);
    let diff = (0..x.len().max(y.len()))
        .map(|i| (x.get(i).copied().unwrap_or(zero) - y.get(i).copied().unwrap_or(zero)).norm())
        .fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn compare(a: &CompareArgs, out: &mut dyn Write) -> CmdResult {
    if a.models.len() != 2 {
        return Err(Error::Schema(format!("--model must be given exactly twice, got {}", a.models.len())));
    }
    let window = match a.window.as_slice() {
        [lo, hi] => (*lo, *hi),
        _ => return Err(Error::Schema("--window needs two values".into())),
    };
    let ma = io::read_model(&a.models[0])?;
    let mb = io::read_model(&a.models[1])?;
    let (pa, pb) = (ma.modes(), mb.modes());
    // greedy matching by increasing pole distance
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, x) in pa.iter().enumerate() {
        for (j, y) in pb.iter().enumerate() {
            pairs.push(((x.lambda() - y.lambda()).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; pa.len()];
    let mut used_b = vec![false; pb.len()];
    let mut matches = Vec::new();
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matches.push((d, i, j));
        }
    }
    matches.sort_by_key(|m| m.1);
    let mut mismatched = false;
    for (d, i, j) in &matches {
        let (x, y) = (&pa[*i], &pb[*j]);
        mismatched |= x.multiplicity() != y.multiplicity();
        let _ = writeln!(
            out,
            "match a={} b={} multiplicity={}/{} dist={} coeff_reldiff={}",
            cnum(x.lambda()),
            cnum(y.lambda()),
            x.multiplicity(),
            y.multiplicity(),
            num(*d),
            num(coeff_reldiff(x, y))
        );
    }
    let mut unmatched = 0;
    for (label, modes, used) in [("A", pa, &used_a), ("B", pb, &used_b)] {
        for (m, _) in modes.iter().zip(used.iter()).filter(|(_, u)| !**u) {
            unmatched += 1;
            let _ = writeln!(out, "unmatched model={label} pole={}", cnum(m.lambda()));
        }
    }
    let dist = model_distance(&ma, &mb, window)?;
    let _ = writeln!(out, "distance={}", num(dist));
    if a.strict && (unmatched > 0 || mismatched) {
        return Ok(EXIT_UNMATCHED);
    }
    Ok(EXIT_OK)
}
