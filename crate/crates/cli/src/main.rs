// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Gibbs ensembles of periodic NLS/KdV, their Dirac and Hill spectra,
/// convexity certificates, split-step flows and concentration studies.
#[derive(Parser, Debug, Serialize)]
#[command(name = "nls-gibbs", version)]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, env = "GIBBS_LAB_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Draw a Gibbs ensemble (JSON lines).
    Sample(SampleArgs),
    /// Periodic and critical points of the Dirac operator.
    DiracSpectrum(DiracArgs),
    /// Periodic spectrum, gaps and midpoints of Hill's equation.
    HillSpectrum(HillArgs),
    /// Evaluate a statistic on every ensemble member.
    Statistic(StatisticArgs),
    /// Check the midpoint sampling claims for a Hill potential.
    BorgCheck(BorgArgs),
    /// Estimate frame bounds of the midpoint sequence.
    FrameBounds(FrameArgs),
    /// Midpoint squares from Cauchy integrals.
    PwStatistic(PwArgs),
    /// Certify convexity of a perturbed Hamiltonian.
    Convexity(ConvexityArgs),
    /// Split-step evolution with conservation diagnostics.
    Flow(FlowArgs),
    /// Compare observable distributions before and after the flow.
    Invariance(InvarianceArgs),
    /// Log-MGF and sub-Gaussian fit of a statistic.
    Concentration(ConcentrationArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct FieldInput {
    /// Field JSON (`{"cutoff": M, "coeffs": [[n, re, im], ...]}`).
    #[arg(long, conflicts_with = "ensemble")]
    pub field: Option<String>,
    /// Take the field from an ensemble file instead.
    #[arg(long, requires = "member")]
    pub ensemble: Option<String>,
    /// Member index within --ensemble.
    #[arg(long)]
    pub member: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct OutputArgs {
    /// Result file (default: stdout; the manifest then goes to stderr).
    #[arg(long)]
    pub out: Option<String>,
    /// Manifest file (default: `<out>.manifest.json`).
    #[arg(long)]
    pub manifest: Option<String>,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Nls,
    Kdv,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Importance,
    Mcmc,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Nls)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 4.0)]
    pub p: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub beta: f64,
    /// Ball radius N of `‖φ‖² <= N`.
    #[arg(long, default_value_t = 1.0)]
    pub ball: f64,
    #[arg(long, default_value_t = 16)]
    pub cutoff: usize,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Importance)]
    pub method: MethodArg,
    /// pCN blend for --method mcmc.
    #[arg(long, default_value_t = 0.2)]
    pub step_size: f64,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, requires = "holder_bound")]
    pub holder_gamma: Option<f64>,
    #[arg(long, requires = "holder_gamma")]
    pub holder_bound: Option<f64>,
    #[arg(long)]
    pub max_attempts: Option<u64>,
    /// Ensemble file (JSON lines).
    #[arg(long)]
    pub out: String,
    #[arg(long)]
    pub manifest: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct DiracArgs {
    #[command(flatten)]
    pub input: FieldInput,
    /// Real window `lo:hi`.
    #[arg(long, allow_hyphen_values = true, default_value = "-6:6")]
    pub window: String,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Integration steps per period (default scales with the cutoff).
    #[arg(long)]
    pub steps: Option<usize>,
    /// CSV of `λ, Δ(λ), Δ'(λ)` on the scan grid.
    #[arg(long)]
    pub trace_csv: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct HillArgs {
    #[command(flatten)]
    pub input: FieldInput,
    #[arg(long, default_value_t = 120.0)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// CSV of `λ, Δ(λ)` on a uniform grid up to --lambda-max.
    #[arg(long)]
    pub trace_csv: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct StatisticArgs {
    #[arg(long)]
    pub ensemble: String,
    /// e.g. `coord:a1`, `l2`, `dirac:critical:lorentzian:c=3:M=3`, `hill:midpoint:sinc:w=2:M=3`.
    #[arg(long)]
    pub statistic: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct BorgArgs {
    #[command(flatten)]
    pub input: FieldInput,
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    /// Rescale the centered potential so that `∫|q| dx/2π` is at most this.
    #[arg(long)]
    pub rescale: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct FrameArgs {
    #[command(flatten)]
    pub input: FieldInput,
    /// Index range J of `t_{−J..J}`.
    #[arg(long, default_value_t = 20)]
    pub range: usize,
    /// Probe family size.
    #[arg(long, default_value_t = 64)]
    pub family: usize,
    #[arg(long, default_value_t = 29)]
    pub family_seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PwSeries {
    /// `t_{2n}²` (kernel `Δ'/(Δ−2)` on circles at `4n²`).
    Even,
    /// `t_{2n−1}²` (kernel `Δ'/(Δ+2)` on circles at `(2n−1)²`).
    Odd,
    Both,
}

#[derive(Args, Debug, Serialize)]
pub struct PwArgs {
    #[command(flatten)]
    pub input: FieldInput,
    /// Range `a..b` of n.
    #[arg(long, default_value = "1..4")]
    pub n: String,
    #[arg(long, value_enum, default_value_t = PwSeries::Even)]
    pub series: PwSeries,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalArg {
    H,
    Hk,
    Gn,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WeightArg {
    L2,
    Hdelta,
    H1,
}

#[derive(Args, Debug, Serialize)]
pub struct ConvexityArgs {
    #[arg(long, conflicts_with = "ensemble")]
    pub field: Option<String>,
    /// Certify every member of an ensemble.
    #[arg(long)]
    pub ensemble: Option<String>,
    #[arg(long, value_enum, default_value_t = FunctionalArg::Gn)]
    pub functional: FunctionalArg,
    #[arg(long, value_enum, default_value_t = WeightArg::H1)]
    pub weight: WeightArg,
    /// Defaults to the ensemble's p.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub ball: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub holder_k: f64,
    #[arg(long, default_value_t = 0.75)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.3)]
    pub gamma: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct FlowArgs {
    #[command(flatten)]
    pub input: FieldInput,
    #[arg(long, default_value_t = 4.0)]
    pub p: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
    /// Flow cutoff M (default: the field's).
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub record_every: usize,
    /// Also compare Dirac spectra at both ends over this window (`lo:hi`, p = 4).
    #[arg(long, allow_hyphen_values = true)]
    pub isospectral_window: Option<String>,
    /// CSV of `t, N, H` along the trajectory.
    #[arg(long)]
    pub csv: Option<String>,
    /// Final field as a field JSON.
    #[arg(long)]
    pub field_out: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct InvarianceArgs {
    #[arg(long)]
    pub ensemble: String,
    #[arg(long, default_value_t = 0.5)]
    pub time: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Comma-separated statistics, e.g. `l2,V,stat:lorentzian`.
    #[arg(long, default_value = "l2,V")]
    pub observables: String,
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ConcentrationArgs {
    #[arg(long)]
    pub ensemble: String,
    #[arg(long)]
    pub statistic: String,
    /// Standardized grid `lo:hi:count`; the curve is evaluated at `t = s/σ`.
    #[arg(long, allow_hyphen_values = true, default_value = "-2:2:41")]
    pub t_grid: String,
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    /// Random pairs for the Lipschitz probe.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Skip the LSI-predicted bound.
    #[arg(long)]
    pub no_lsi: bool,
    /// CSV of `t, log_mgf, band, trusted`.
    #[arg(long)]
    pub csv: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
