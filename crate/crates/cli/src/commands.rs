use nls_gibbs::concentration::{self, collect_statistic, concentration_report, ConcentrationOptions, Statistic};
use nls_gibbs::convexity::{self, certify_convexity, ConvexityParams, ConvexityReport, Functional, Model, NormWeight};
use nls_gibbs::dirac::{self, DiracOperator};
use nls_gibbs::field::default_grid_size;
use nls_gibbs::flow::{self, FlowParams};
use nls_gibbs::gibbs::{
    effective_sample_size, importance_ensemble, mcmc_ensemble_with, write_jsonl, FieldKind, GibbsParams, McmcOptions,
};
use nls_gibbs::hill::{self, HillOperator};
use nls_gibbs::spectral::{scan_grid, Characteristic};
use nls_gibbs::PeriodicField;
use num_complex::Complex64;
use serde::Serialize;

use crate::output::{config, emit, manifest_path, read_ensemble, read_field, write_bytes, write_csv, write_json, write_manifest, CliResult};
use crate::*;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Sample(a) => sample(cli, a),
        Command::DiracSpectrum(a) => dirac_spectrum(cli, a),
        Command::HillSpectrum(a) => hill_spectrum(cli, a),
        Command::Statistic(a) => statistic(cli, a),
        Command::BorgCheck(a) => borg_check(cli, a),
        Command::FrameBounds(a) => frame_bounds(cli, a),
        Command::PwStatistic(a) => pw_statistic(cli, a),
        Command::Convexity(a) => convexity_cmd(cli, a),
        Command::Flow(a) => flow_cmd(cli, a),
        Command::Invariance(a) => invariance(cli, a),
        Command::Concentration(a) => concentration_cmd(cli, a),
    }
}

fn parse_window(s: &str) -> CliResult<[f64; 2]> {
    let (a, b) = s.split_once(':').ok_or_else(|| config(format!("window '{s}' is not lo:hi")))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| config(format!("bad number '{v}' in window '{s}'")));
    let w = [parse(a)?, parse(b)?];
    if !(w[0] < w[1]) {
        return Err(config(format!("window '{s}' must have lo < hi")));
    }
    Ok(w)
}

/// `a..b`, both ends included.
fn parse_range(s: &str) -> CliResult<std::ops::RangeInclusive<usize>> {
    let bad = || config(format!("range '{s}' is not a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a == 0 || a > b {
        return Err(config(format!("range '{s}' must satisfy 1 <= a <= b")));
    }
    Ok(a..=b)
}

fn sup_abs(f: &PeriodicField) -> CliResult<f64> {
    Ok(f.evaluate(default_grid_size(f.cutoff()))?
        .values
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max))
}

/// `λ_max` that covers the gaps up to index `n`.
fn lambda_max_for(q: &PeriodicField, n: usize) -> CliResult<f64> {
    Ok((n as f64 + 0.5).powi(2) + 1.0 + sup_abs(q)?)
}

/// Hill potential of an input field; complex or odd-mode fields map to `Re φ(2x)`.
fn read_potential(input: &FieldInput) -> CliResult<(PeriodicField, bool)> {
    let field = read_field(input)?;
    if field.is_real_valued() && field.first_odd_mode().is_none() {
        return Ok((field, false));
    }
    eprintln!("note: input is not a real π-periodic potential; using q(x) = Re φ(2x)");
    Ok((concentration::hill_potential(&field), true))
}

#[derive(Serialize)]
struct SampleSummary {
    count: usize,
    attempts: u64,
    accepted: u64,
    acceptance_rate: f64,
    effective_sample_size: f64,
    ensemble: String,
}

fn sample(cli: &Cli, a: &SampleArgs) -> CliResult<()> {
    let mut params = match a.kind {
        KindArg::Nls => GibbsParams::nls(a.p, a.beta, a.ball, a.cutoff),
        KindArg::Kdv => GibbsParams::kdv(a.beta, a.ball, a.cutoff),
    };
    if let (Some(g), Some(k)) = (a.holder_gamma, a.holder_bound) {
        params = params.with_holder(g, k);
    }
    if let Some(m) = a.max_attempts {
        params.max_attempts = m;
    }
    params.validate()?;
    let ens = match a.method {
        MethodArg::Importance => importance_ensemble(a.count, &params, cli.seed)?,
        MethodArg::Mcmc => {
            let options = McmcOptions {
                step_size: a.step_size,
                burn_in: a.burn_in,
                thin: a.thin,
            };
            mcmc_ensemble_with(a.count, &options, &params, cli.seed)?
        }
    };
    let mut bytes = Vec::new();
    write_jsonl(&ens, &mut bytes)?;
    write_bytes(&a.out, &bytes)?;
    let summary = SampleSummary {
        count: ens.len(),
        attempts: ens.acceptance.attempts,
        accepted: ens.acceptance.accepted,
        acceptance_rate: ens.acceptance.rate(),
        effective_sample_size: effective_sample_size(&ens)?,
        ensemble: a.out.clone(),
    };
    let summary_path = manifest_path(&a.out).replace(".manifest.json", ".summary.json");
    write_json(&summary_path, &summary)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| manifest_path(&a.out));
    write_manifest(cli, "sample", Some(&manifest), &[a.out.clone(), summary_path])
}

#[derive(Serialize)]
struct DiracResult {
    window: [f64; 2],
    steps: usize,
    cutoff: usize,
    potential_hash: String,
    critical_points: Vec<f64>,
    periodic_points: Vec<nls_gibbs::spectral::PeriodicPoint>,
}

fn dirac_spectrum(cli: &Cli, a: &DiracArgs) -> CliResult<()> {
    let field = read_field(&a.input)?;
    let window = parse_window(&a.window)?;
    let steps = a.steps.unwrap_or_else(|| dirac::default_steps(field.cutoff()));
    let op = DiracOperator::with_steps(&field, steps)?;
    let data = dirac::spectral_data(&op, window, a.tol)?;
    let mut extra = Vec::new();
    if let Some(path) = &a.trace_csv {
        let grid = scan_grid(window[0], window[1], dirac::SCAN_STEP);
        let rows = grid
            .iter()
            .map(|&l| {
                let (d, dd) = op.delta_with_derivative(Complex64::new(l, 0.0))?;
                Ok(vec![l, d.re, dd.re])
            })
            .collect::<nls_gibbs::Result<Vec<_>>>()?;
        write_csv(path, &["lambda", "delta", "delta_prime"], rows)?;
        extra.push(path.clone());
    }
    let result = DiracResult {
        window,
        steps,
        cutoff: field.cutoff(),
        potential_hash: format!("{:016x}", field.content_hash()),
        critical_points: data.critical_points,
        periodic_points: data.periodic_points,
    };
    emit(cli, "dirac-spectrum", &a.output, &result, extra)
}

#[derive(Serialize)]
struct HillResult {
    #[serde(flatten)]
    data: hill::HillSpectralData,
    mapped_from_field: bool,
    gap_summability: hill::GapSummability,
}

fn hill_spectrum(cli: &Cli, a: &HillArgs) -> CliResult<()> {
    let (q, mapped_from_field) = read_potential(&a.input)?;
    let op = HillOperator::new(&q)?;
    let data = hill::spectrum_of(&op, a.lambda_max, a.tol)?;
    let mut extra = Vec::new();
    if let Some(path) = &a.trace_csv {
        let grid = scan_grid(op.spectrum_floor(), a.lambda_max, 0.05);
        let rows = grid
            .iter()
            .map(|&l| Ok(vec![l, op.discriminant(l)?]))
            .collect::<nls_gibbs::Result<Vec<_>>>()?;
        write_csv(path, &["lambda", "delta"], rows)?;
        extra.push(path.clone());
    }
    let gap_summability = hill::gap_summability_report(&data);
    emit(cli, "hill-spectrum", &a.output, &HillResult { data, mapped_from_field, gap_summability }, extra)
}

fn statistic(cli: &Cli, a: &StatisticArgs) -> CliResult<()> {
    let ens = read_ensemble(&a.ensemble)?;
    let stat = Statistic::parse(&a.statistic)?;
    let sample = collect_statistic(&ens, &stat)?;
    emit(cli, "statistic", &a.output, &sample, Vec::new())
}

#[derive(Serialize)]
struct BorgResult {
    rescaled: bool,
    potential: PeriodicField,
    report: hill::BorgReport,
    midpoints: Vec<f64>,
}

fn borg_check(cli: &Cli, a: &BorgArgs) -> CliResult<()> {
    let (mut q, _) = read_potential(&a.input)?;
    if let Some(target) = a.rescale {
        if !(target > 0.0) {
            return Err(config("--rescale must be positive"));
        }
        q = hill::rescale_to_borg(&q, target)?;
    }
    let data = hill::hill_periodic_spectrum(&q, lambda_max_for(&q, a.n_max)?, hill::DEFAULT_TOL)?;
    let report = hill::borg_check(&q, &data, a.n_max)?;
    let result = BorgResult {
        rescaled: a.rescale.is_some(),
        midpoints: data.two_sided(a.n_max)?,
        potential: q,
        report,
    };
    emit(cli, "borg-check", &a.output, &result, Vec::new())
}

#[derive(Serialize)]
struct FrameResult {
    period: &'static str,
    estimate: hill::FrameEstimate,
    family_seed: u64,
    midpoints: Vec<f64>,
}

fn frame_bounds(cli: &Cli, a: &FrameArgs) -> CliResult<()> {
    let (q, _) = read_potential(&a.input)?;
    if a.family == 0 {
        return Err(config("--family must be at least 1"));
    }
    let data = hill::hill_periodic_spectrum(&q, lambda_max_for(&q, a.range)?, hill::DEFAULT_TOL)?;
    let t = data.two_sided(a.range)?;
    let family = hill::frame_family(a.family, a.family_seed);
    let estimate = hill::frame_bounds_estimate(&t, &family)?;
    let result = FrameResult {
        period: hill::PERIOD_CONVENTION,
        estimate,
        family_seed: a.family_seed,
        midpoints: t,
    };
    emit(cli, "frame-bounds", &a.output, &result, Vec::new())
}

#[derive(Serialize)]
struct PwRow {
    k: usize,
    t_sq_contour: f64,
    t_sq_direct: f64,
    deviation: f64,
    radius: f64,
    adapted: bool,
    root_count: f64,
}

#[derive(Serialize)]
struct PwResult {
    period: &'static str,
    entries: Vec<PwRow>,
}

fn pw_statistic(cli: &Cli, a: &PwArgs) -> CliResult<()> {
    let (q, _) = read_potential(&a.input)?;
    let range = parse_range(&a.n)?;
    let ks: Vec<usize> = range
        .flat_map(|n| match a.series {
            PwSeries::Even => vec![2 * n],
            PwSeries::Odd => vec![2 * n - 1],
            PwSeries::Both => vec![2 * n - 1, 2 * n],
        })
        .collect();
    let op = HillOperator::new(&q)?;
    let kmax = *ks.iter().max().unwrap_or(&1);
    let data = hill::spectrum_of(&op, lambda_max_for(&q, kmax)?, hill::DEFAULT_TOL)?;
    let entries = hill::pw_statistic_contour(&op, ks)?
        .into_iter()
        .map(|e| {
            let t = data.t(e.k as i64).unwrap_or(f64::NAN);
            PwRow {
                k: e.k,
                t_sq_contour: e.t_sq,
                t_sq_direct: t * t,
                deviation: (e.t_sq - t * t).abs(),
                radius: e.radius,
                adapted: e.adapted,
                root_count: e.root_count,
            }
        })
        .collect();
    emit(
        cli,
        "pw-statistic",
        &a.output,
        &PwResult {
            period: hill::PERIOD_CONVENTION,
            entries,
        },
        Vec::new(),
    )
}

#[derive(Serialize)]
struct ConvexityResult {
    model: Model,
    constants: ConvexityParams,
    members: usize,
    certified: usize,
    min_eigenvalue: f64,
    reports: Vec<ConvexityReport>,
}

fn convexity_cmd(cli: &Cli, a: &ConvexityArgs) -> CliResult<()> {
    let (fields, defaults) = match (&a.field, &a.ensemble) {
        (Some(path), None) => (vec![crate::output::read_field_file(path)?], None),
        (None, Some(path)) => {
            let ens = read_ensemble(path)?;
            (ens.samples, Some(ens.params))
        }
        _ => return Err(config("give --field or --ensemble")),
    };
    let pick = |v: Option<f64>, d: Option<f64>, name: &str| {
        v.or(d).ok_or_else(|| config(format!("--{name} is required without an ensemble")))
    };
    let model = Model {
        p: pick(a.p, defaults.as_ref().map(|d| d.p), "p")?,
        beta: pick(a.beta, defaults.as_ref().map(|d| d.beta), "beta")?,
        ball_radius: pick(a.ball, defaults.as_ref().map(|d| d.ball_radius), "ball")?,
        holder_k: a.holder_k,
    };
    let cutoff = fields.iter().map(|f| f.cutoff()).max().unwrap_or(1);
    let constants = ConvexityParams::estimated(model.p, a.gamma, a.delta, cutoff)?;
    let functional = match a.functional {
        FunctionalArg::H => Functional::H,
        FunctionalArg::Hk => Functional::HK,
        FunctionalArg::Gn => Functional::GN,
    };
    let weight = match a.weight {
        WeightArg::L2 => NormWeight::L2,
        WeightArg::Hdelta => NormWeight::HDelta,
        WeightArg::H1 => NormWeight::H1,
    };
    let reports: Vec<ConvexityReport> = fields
        .iter()
        .map(|f| certify_convexity(functional, f, weight, &model, &constants))
        .collect::<nls_gibbs::Result<_>>()?;
    let result = ConvexityResult {
        members: reports.len(),
        certified: reports.iter().filter(|r| r.certified).count(),
        min_eigenvalue: reports.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min),
        model,
        constants,
        reports,
    };
    emit(cli, "convexity", &a.output, &result, Vec::new())
}

#[derive(Serialize)]
struct FlowResult {
    params: FlowParams,
    time: f64,
    resolution_warning: bool,
    conservation: flow::ConservationReport,
    final_field: PeriodicField,
    isospectral: Option<flow::IsospectralReport>,
}

fn flow_cmd(cli: &Cli, a: &FlowArgs) -> CliResult<()> {
    let field = read_field(&a.input)?;
    let params = FlowParams::new(a.p, a.beta, a.dt, a.time, a.cutoff.unwrap_or(field.cutoff()))?;
    if params.resolution_warning() {
        eprintln!(
            "warning: |dt| M² = {:.3} exceeds {}; linear phases are under-resolved",
            params.dt.abs() * (params.cutoff * params.cutoff) as f64,
            flow::RESOLUTION_GUARD
        );
    }
    let traj = flow::trajectory(&field, &params, a.record_every)?;
    let conservation = flow::conservation_check(&traj)?;
    let final_field = traj.fields.last().cloned().unwrap_or(field.clone());
    let isospectral = match &a.isospectral_window {
        Some(w) => Some(flow::isospectrality_check(&field, &params, parse_window(w)?)?),
        None => None,
    };
    let mut extra = Vec::new();
    if let Some(path) = &a.csv {
        let grid = default_grid_size(final_field.cutoff());
        let rows = traj
            .times
            .iter()
            .zip(&traj.fields)
            .map(|(&t, f)| Ok(vec![t, f.l2_norm_sq(), f.hamiltonian(a.p, a.beta, grid)?]))
            .collect::<nls_gibbs::Result<Vec<_>>>()?;
        write_csv(path, &["t", "mass", "hamiltonian"], rows)?;
        extra.push(path.clone());
    }
    if let Some(path) = &a.field_out {
        write_json(path, &final_field)?;
        extra.push(path.clone());
    }
    let result = FlowResult {
        time: params.time(),
        resolution_warning: params.resolution_warning(),
        params,
        conservation,
        final_field,
        isospectral,
    };
    emit(cli, "flow", &a.output, &result, extra)
}

/// Splits on commas that start a new statistic (not `key=value` continuations).
fn split_observables(spec: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for piece in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let continuation = piece
            .split_once('=')
            .is_some_and(|(k, _)| !k.contains(':') && k.chars().all(|ch| ch.is_ascii_alphabetic() || ch == '_'));
        match out.last_mut() {
            Some(last) if continuation => {
                last.push(',');
                last.push_str(piece);
            }
            _ => out.push(piece.to_string()),
        }
    }
    out
}

fn invariance(cli: &Cli, a: &InvarianceArgs) -> CliResult<()> {
    let ens = read_ensemble(&a.ensemble)?;
    if ens.params.kind != FieldKind::Nls {
        return Err(config("invariance needs an NLS ensemble"));
    }
    let observables = split_observables(&a.observables)
        .iter()
        .map(|s| if s == "V" { Ok(Statistic::Potential(ens.params.p)) } else { Statistic::parse(s) })
        .collect::<nls_gibbs::Result<Vec<_>>>()?;
    if observables.is_empty() {
        return Err(config("no observables given"));
    }
    let params = FlowParams::new(ens.params.p, ens.params.beta, a.dt, a.time, ens.params.cutoff)?;
    let report = flow::invariance_check(&ens, &params, &observables, a.permutations, cli.seed)?;
    emit(cli, "invariance", &a.output, &report, Vec::new())
}

fn concentration_cmd(cli: &Cli, a: &ConcentrationArgs) -> CliResult<()> {
    let ens = read_ensemble(&a.ensemble)?;
    let stat = Statistic::parse(&a.statistic)?;
    let sample = collect_statistic(&ens, &stat)?;
    let p = &ens.params;
    let lsi = if a.no_lsi || p.kind != FieldKind::Nls {
        None
    } else {
        let constants = ConvexityParams::defaults(p.p, p.cutoff)?;
        let (holder_k, eta) = match p.holder_bound {
            Some(k) => (Some(k), Functional::HK.paper_bound(&constants)),
            None => (None, Functional::GN.paper_bound(&constants)),
        };
        Some(convexity::lsi_lower_bound(p.beta, p.p, p.ball_radius, holder_k, &constants, eta))
    };
    let options = ConcentrationOptions {
        s_grid: concentration::parse_grid(&a.t_grid)?,
        resamples: a.bootstrap,
        seed: cli.seed,
        pair_count: a.pairs,
        lsi,
    };
    let report = concentration_report(&ens, &sample, &options)?;
    let mut extra = Vec::new();
    if let Some(path) = &a.csv {
        let rows = report
            .log_mgf_curve
            .iter()
            .map(|pt| vec![pt.t, pt.value, pt.band, f64::from(u8::from(pt.trusted))]);
        write_csv(path, &["t", "log_mgf", "band", "trusted"], rows)?;
        extra.push(path.clone());
    }
    emit(cli, "concentration", &a.output, &report, extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observable_lists() {
        assert_eq!(split_observables("l2,V,stat:lorentzian"), ["l2", "V", "stat:lorentzian"]);
        assert_eq!(
            split_observables("l2,stat:even_rational:a=1,b=2,c=3,V:p=4"),
            ["l2", "stat:even_rational:a=1,b=2,c=3", "V:p=4"]
        );
    }

    #[test]
    fn windows_and_ranges() {
        assert_eq!(parse_window("-6:6").unwrap(), [-6.0, 6.0]);
        assert!(parse_window("3:1").is_err());
        assert_eq!(parse_range("1..8").unwrap(), 1..=8);
        assert!(parse_range("0..2").is_err());
    }
}
