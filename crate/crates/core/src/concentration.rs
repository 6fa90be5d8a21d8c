//! Empirical concentration of statistics under Gibbs ensembles: per-member
//! evaluation, weighted log-MGF curves with bootstrap bands, sub-Gaussian
//! envelopes and empirical Lipschitz constants.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::LsiBound;
use crate::dirac::{self, DiracOperator};
use crate::error::{Error, Result};
use crate::field::{default_grid_size, PeriodicField};
use crate::gibbs::{stream_rng, GibbsEnsemble};
use crate::hill;
use crate::spectral::Kernel;
use crate::test_function::TestFunction;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Trusted range `|t| σ <= 2`.
pub const TRUSTED_STANDARD_UNITS: f64 = 2.0;
const DEFAULT_STATISTIC_M: usize = 3;

/// A real functional of a field, named by a compact spec string.
#[derive(Clone, Debug)]
pub enum Statistic {
    Constant(f64),
    /// `‖φ‖²`
    L2,
    /// `‖φ‖`
    L2Norm,
    /// `∫|φ|^p dx/2π`
    Potential(f64),
    /// `Re φ_n` (`imag = false`) or `Im φ_n`.
    Coordinate { n: i64, imag: bool },
    /// `Σ_{|j|<=M} g(λ_j)` over Dirac critical or periodic points.
    Dirac { kernel: Kernel, g: TestFunction, m: usize },
    /// `Σ_{|n|<=M} g(t_n)` over Hill midpoints. Fields that are not real and
    /// π-periodic use `q(x) = Re φ(2x)`.
    HillMidpoint { g: TestFunction, m: usize },
}

fn split_m(rest: &str) -> Result<(&str, usize)> {
    match rest.rsplit_once(':') {
        Some((head, tail)) if tail.starts_with("M=") => {
            let m = tail[2..]
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad M in '{rest}'")))?;
            Ok((head, m))
        }
        _ => Ok((rest, DEFAULT_STATISTIC_M)),
    }
}

fn parse_kernel(s: &str) -> Result<Kernel> {
    match s {
        "critical" => Ok(Kernel::Critical),
        "principal" => Ok(Kernel::Principal),
        "complementary" => Ok(Kernel::Complementary),
        other => Err(Error::InvalidParameter(format!("unknown kernel '{other}'"))),
    }
}

fn kernel_name(k: Kernel) -> &'static str {
    match k {
        Kernel::Critical => "critical",
        Kernel::Principal => "principal",
        Kernel::Complementary => "complementary",
    }
}

impl Statistic {
    /// `const[:c=v]`, `l2`, `l2norm`, `V[:p=4]`, `coord:a1`, `coord:b2`,
    /// `dirac:<critical|principal|complementary>:<g>[:M=3]`,
    /// `hill:midpoint:<g>[:M=3]`, and `stat:<g>` for the Dirac critical
    /// statistic. `<g>` is a test-function spec such as `lorentzian:c=3`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown statistic '{spec}'"));
        let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let float_arg = |key: &str, default: f64| -> Result<f64> {
            if rest.is_empty() {
                return Ok(default);
            }
            rest.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        };
        Ok(match head {
            "const" => Self::Constant(float_arg("c", 1.0)?),
            "l2" if rest.is_empty() => Self::L2,
            "l2norm" if rest.is_empty() => Self::L2Norm,
            "V" => {
                let p = float_arg("p", 4.0)?;
                if !(p >= 2.0) {
                    return Err(Error::InvalidParameter("V needs p >= 2".into()));
                }
                Self::Potential(p)
            }
            "coord" => {
                let imag = match rest.chars().next() {
                    Some('a') => false,
                    Some('b') => true,
                    _ => return Err(bad()),
                };
                let n = rest[1..].parse().map_err(|_| bad())?;
                Self::Coordinate { n, imag }
            }
            "stat" => {
                let (g, m) = split_m(rest)?;
                Self::Dirac {
                    kernel: Kernel::Critical,
                    g: TestFunction::parse(g)?,
                    m,
                }
            }
            "dirac" => {
                let (kernel, rest) = rest.split_once(':').ok_or_else(bad)?;
                let (g, m) = split_m(rest)?;
                Self::Dirac {
                    kernel: parse_kernel(kernel)?,
                    g: TestFunction::parse(g)?,
                    m,
                }
            }
            "hill" => {
                let rest = rest.strip_prefix("midpoint:").ok_or_else(bad)?;
                let (g, m) = split_m(rest)?;
                Self::HillMidpoint {
                    g: TestFunction::parse(g)?,
                    m,
                }
            }
            _ => return Err(bad()),
        })
    }

    pub fn scaled_name(&self, c: f64) -> String {
        format!("{c}*{self}")
    }

    pub fn eval(&self, field: &PeriodicField) -> Result<f64> {
        match self {
            Self::Constant(c) => Ok(*c),
            Self::L2 => Ok(field.l2_norm_sq()),
            Self::L2Norm => Ok(field.l2_norm_sq().sqrt()),
            Self::Potential(p) => field.lp_integral(*p, default_grid_size(field.cutoff())),
            Self::Coordinate { n, imag } => {
                let c = field.coeff(*n);
                Ok(if *imag { c.im } else { c.re })
            }
            Self::Dirac { kernel, g, m } => {
                let values = field.evaluate(default_grid_size(field.cutoff()))?.values;
                let sup = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let half = *m as f64 + 2.5 + 2.0 * sup;
                let window = [-half, half];
                let points = match kernel.series() {
                    None => dirac::critical_points(field, window, dirac::DEFAULT_TOL)?.critical_points,
                    Some(s) => dirac::periodic_eigenvalues(field, window, dirac::DEFAULT_TOL)?.series(s),
                };
                dirac::linear_statistic_direct(&points, g, *m)
            }
            Self::HillMidpoint { g, m } => {
                let q = hill_potential(field);
                let values = q.evaluate(default_grid_size(q.cutoff()))?.values;
                let sup = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let lambda_max = (*m as f64 + 0.5).powi(2) + 1.0 + sup;
                let data = hill::hill_periodic_spectrum(&q, lambda_max, hill::DEFAULT_TOL)?;
                hill::midpoint_statistic(&data, g, *m)
            }
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "const:c={c}"),
            Self::L2 => write!(f, "l2"),
            Self::L2Norm => write!(f, "l2norm"),
            Self::Potential(p) => write!(f, "V:p={p}"),
            Self::Coordinate { n, imag } => write!(f, "coord:{}{n}", if *imag { 'b' } else { 'a' }),
            Self::Dirac { kernel, g, m } => write!(f, "dirac:{}:{}:M={m}", kernel_name(*kernel), g.name),
            Self::HillMidpoint { g, m } => write!(f, "hill:midpoint:{}:M={m}", g.name),
        }
    }
}

/// Real π-periodic potential associated with a field.
pub fn hill_potential(field: &PeriodicField) -> PeriodicField {
    if field.is_real_valued() && field.first_odd_mode().is_none() {
        field.symmetrized_real()
    } else {
        field.symmetrized_real().dilate(2)
    }
}

/// Identifier of an ensemble: sampling seed, size and a hash of the samples.
pub fn ensemble_ref(ensemble: &GibbsEnsemble) -> String {
    let hash = ensemble
        .samples
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, s| (h ^ s.content_hash()).wrapping_mul(0x100_0000_01b3));
    format!("seed={},count={},hash={hash:016x}", ensemble.seed, ensemble.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticSample {
    pub statistic_name: String,
    pub ensemble_ref: String,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    /// Ensemble index of each value.
    pub members: Vec<usize>,
    pub failed: usize,
}

impl StatisticSample {
    pub fn from_values(name: impl Into<String>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::InvalidParameter("values and weights differ in length".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if !values.iter().chain(&weights).all(|v| v.is_finite()) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidParameter("values and weights must be finite, weights >= 0".into()));
        }
        Ok(Self {
            statistic_name: name.into(),
            ensemble_ref: String::new(),
            members: (0..values.len()).collect(),
            values,
            weights,
            failed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            statistic_name: format!("{c}*{}", self.statistic_name),
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub fn weighted_mean(&self) -> f64 {
        weighted_moments(&self.values, &self.weights).0
    }

    pub fn weighted_variance(&self) -> f64 {
        weighted_moments(&self.values, &self.weights).1
    }
}

fn weighted_moments(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total;
    (mean, var)
}

/// Evaluates `statistic` on every member; failures (errors or non-finite
/// values) are excluded up to 1% of the ensemble.
pub fn collect_statistic(ensemble: &GibbsEnsemble, statistic: &Statistic) -> Result<StatisticSample> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let results: Vec<Option<f64>> = ensemble
        .samples
        .par_iter()
        .map(|f| statistic.eval(f).ok().filter(|v| v.is_finite()))
        .collect();
    let total = results.len();
    let failed = results.iter().filter(|r| r.is_none()).count();
    if failed * 100 > total {
        return Err(Error::TooManyFailures { failed, total });
    }
    let mut values = Vec::with_capacity(total - failed);
    let mut weights = Vec::with_capacity(total - failed);
    let mut members = Vec::with_capacity(total - failed);
    for (i, r) in results.into_iter().enumerate() {
        if let Some(v) = r {
            values.push(v);
            weights.push(ensemble.weights[i]);
            members.push(i);
        }
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidParameter("all surviving weights are zero".into()));
    }
    Ok(StatisticSample {
        statistic_name: statistic.to_string(),
        ensemble_ref: ensemble_ref(ensemble),
        values,
        weights,
        members,
        failed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfPoint {
    pub t: f64,
    /// `log Σ w e^{t(X − mean)} / Σ w`
    pub value: f64,
    /// Bootstrap standard error.
    pub band: f64,
    pub trusted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfCurve {
    pub points: Vec<MgfPoint>,
    pub mean: f64,
    pub variance: f64,
    pub resamples: usize,
    /// Grid values dropped because the estimate overflowed.
    pub trimmed: Vec<f64>,
    /// Second differences on the trusted range are >= −1e−12·scale.
    pub convex: bool,
}

impl MgfCurve {
    pub fn at(&self, t: f64) -> Option<&MgfPoint> {
        self.points.iter().find(|p| p.t == t)
    }
}

/// Grid `t_i = s_i / σ` for standardized values `s_i` (σ = 0 keeps `s`).
pub fn standardized_grid(sample: &StatisticSample, s_grid: &[f64]) -> Vec<f64> {
    let sd = sample.weighted_variance().sqrt();
    let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
    s_grid.iter().map(|s| s * scale).collect()
}

/// `lo:hi:count`, e.g. `-2:2:41`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("grid '{spec}' is not lo:hi:count"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n < 2 || !(lo < hi) {
        return Err(bad());
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Weighted log-MGF of the centered sample on `t_grid` (symmetric around 0).
pub fn empirical_log_mgf(sample: &StatisticSample, t_grid: &[f64], resamples: usize, seed: u64) -> Result<MgfCurve> {
    if sample.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let span = t_grid.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let symmetric = t_grid.windows(2).all(|w| w[0] < w[1])
        && t_grid
            .iter()
            .zip(t_grid.iter().rev())
            .all(|(a, b)| (a + b).abs() <= 1e-12 * span.max(1.0));
    if t_grid.is_empty() || !symmetric {
        return Err(Error::InvalidParameter("t grid must be increasing and symmetric around 0".into()));
    }
    let (mean, variance) = weighted_moments(&sample.values, &sample.weights);
    let sd = variance.sqrt();
    let n = sample.len();
    let log_w: Vec<f64> = sample.weights.iter().map(|w| w.ln()).collect();
    let log_total = log_sum_exp(log_w.iter().copied());
    let centered: Vec<f64> = sample.values.iter().map(|v| v - mean).collect();

    // Per t: shifted exponentials reused by every bootstrap resample.
    let per_t: Vec<(f64, f64, Vec<f64>)> = t_grid
        .par_iter()
        .map(|&t| {
            let a = || centered.iter().zip(&log_w).map(move |(d, lw)| t * d + lw);
            let value = log_sum_exp(a()) - log_total;
            let shift = a().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = centered.iter().map(|d| (t * d - shift).exp()).collect();
            (value, shift, e)
        })
        .collect();
    let boot: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let cw: Vec<f64> = counts.iter().zip(&sample.weights).map(|(&c, w)| c as f64 * w).collect();
            let total: f64 = cw.iter().sum();
            let bmean = cw.iter().zip(&centered).map(|(w, d)| w * d).sum::<f64>() / total;
            per_t
                .iter()
                .zip(t_grid)
                .map(|((_, shift, e), &t)| {
                    let s: f64 = cw.iter().zip(e).map(|(w, x)| w * x).sum();
                    shift + (s / total).ln() - t * bmean
                })
                .collect()
        })
        .collect();

    let mut points = Vec::new();
    let mut trimmed = Vec::new();
    for (i, (&t, (value, _, _))) in t_grid.iter().zip(&per_t).enumerate() {
        let value = if t == 0.0 { 0.0 } else { *value };
        if !value.is_finite() {
            trimmed.push(t);
            continue;
        }
        let band = if resamples > 1 {
            let vals: Vec<f64> = boot.iter().map(|b| b[i]).filter(|v| v.is_finite()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        let trusted = sd == 0.0 || t.abs() * sd <= TRUSTED_STANDARD_UNITS * (1.0 + 1e-12);
        points.push(MgfPoint { t, value, band, trusted });
    }
    let trusted: Vec<&MgfPoint> = points.iter().filter(|p| p.trusted).collect();
    let scale = trusted.iter().map(|p| p.value.abs()).fold(1e-300, f64::max);
    let convex = trusted.windows(3).all(|w| {
        let (h1, h2) = (w[1].t - w[0].t, w[2].t - w[1].t);
        let second = ((w[2].value - w[1].value) / h2 - (w[1].value - w[0].value) / h1) / (0.5 * (h1 + h2));
        second * h1 * h2 >= -1e-12 * scale
    });
    Ok(MgfCurve {
        points,
        mean,
        variance,
        resamples,
        trimmed,
        convex,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgaussianFit {
    /// Least-squares coefficient of `t²` on the trusted range.
    pub fitted_eta: f64,
    /// Smallest `η >= 0` with `curve(t) <= η t² + band(t)` on the trusted range.
    pub envelope_eta: f64,
    pub eta_bound: Option<f64>,
    /// `envelope_eta <= eta_bound`; vacuously true without a bound.
    pub pass: bool,
}

pub fn subgaussian_fit(curve: &MgfCurve, eta_bound: Option<f64>) -> SubgaussianFit {
    let pts: Vec<&MgfPoint> = curve.points.iter().filter(|p| p.trusted && p.t != 0.0).collect();
    let num: f64 = pts.iter().map(|p| p.t * p.t * p.value).sum();
    let den: f64 = pts.iter().map(|p| p.t.powi(4)).sum();
    let fitted_eta = if den > 0.0 { num / den } else { 0.0 };
    let envelope_eta = pts
        .iter()
        .map(|p| (p.value - p.band) / (p.t * p.t))
        .fold(0.0, f64::max);
    SubgaussianFit {
        fitted_eta,
        envelope_eta,
        eta_bound,
        pass: eta_bound.is_none_or(|b| envelope_eta <= b),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub k: f64,
    /// Ensemble indices of the maximizing pair.
    pub pair: Option<(usize, usize)>,
    pub pairs: usize,
    pub skipped: usize,
}

/// `max |Φ(φ_i) − Φ(φ_j)| / ‖φ_i − φ_j‖` over seeded random pairs.
pub fn lipschitz_probe(
    sample: &StatisticSample,
    ensemble: &GibbsEnsemble,
    pair_count: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InsufficientPoints { needed: 2, available: n });
    }
    let mut rng = stream_rng(seed, u64::MAX - 1);
    let pairs: Vec<(usize, usize)> = (0..pair_count)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            (i, j)
        })
        .collect();
    let ratios: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&ensemble.samples[sample.members[i]], &ensemble.samples[sample.members[j]]);
            let dist = a.sub(b).l2_norm_sq().sqrt();
            (dist > 0.0).then(|| (sample.values[i] - sample.values[j]).abs() / dist)
        })
        .collect();
    let mut best = LipschitzEstimate {
        k: 0.0,
        pair: None,
        pairs: 0,
        skipped: 0,
    };
    for (r, &(i, j)) in ratios.iter().zip(&pairs) {
        match r {
            Some(r) => {
                best.pairs += 1;
                if *r > best.k || best.pair.is_none() {
                    best.k = *r;
                    best.pair = Some((sample.members[i], sample.members[j]));
                }
            }
            None => best.skipped += 1,
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub statistic: String,
    pub ensemble_ref: String,
    pub cutoff: usize,
    pub members: usize,
    pub failed: usize,
    pub weighted_mean: f64,
    pub weighted_variance: f64,
    pub log_mgf_curve: Vec<MgfPoint>,
    pub trimmed: Vec<f64>,
    pub convex: bool,
    pub fitted_eta: f64,
    pub envelope_eta: f64,
    pub lipschitz: Option<LipschitzEstimate>,
    pub lsi_log_alpha: Option<f64>,
    /// `K²/α`; absent when `α` underflows or no bound was supplied.
    pub lsi_predicted_eta: Option<f64>,
    pub lsi_log_predicted_eta: Option<f64>,
    pub subgaussian_pass: bool,
}

#[derive(Clone, Debug)]
pub struct ConcentrationOptions {
    /// Standardized grid `s`; the curve is evaluated at `t = s/σ`.
    pub s_grid: Vec<f64>,
    pub resamples: usize,
    pub seed: u64,
    pub pair_count: usize,
    pub lsi: Option<LsiBound>,
}

impl Default for ConcentrationOptions {
    fn default() -> Self {
        Self {
            s_grid: parse_grid("-2:2:41").expect("static grid"),
            resamples: BOOTSTRAP_RESAMPLES,
            seed: 0,
            pair_count: 1000,
            lsi: None,
        }
    }
}

pub fn concentration_report(
    ensemble: &GibbsEnsemble,
    sample: &StatisticSample,
    options: &ConcentrationOptions,
) -> Result<ConcentrationReport> {
    let t_grid = standardized_grid(sample, &options.s_grid);
    let curve = empirical_log_mgf(sample, &t_grid, options.resamples, options.seed)?;
    let lipschitz = if options.pair_count > 0 && sample.len() >= 2 {
        Some(lipschitz_probe(sample, ensemble, options.pair_count, options.seed)?)
    } else {
        None
    };
    let log_bound = match (&options.lsi, &lipschitz) {
        (Some(lsi), Some(k)) => Some(2.0 * k.k.ln() - lsi.log_alpha),
        _ => None,
    };
    let bound = log_bound.map(f64::exp).filter(|b| b.is_finite());
    let fit = subgaussian_fit(&curve, bound);
    Ok(ConcentrationReport {
        statistic: sample.statistic_name.clone(),
        ensemble_ref: sample.ensemble_ref.clone(),
        cutoff: ensemble.params.cutoff,
        members: sample.len(),
        failed: sample.failed,
        weighted_mean: curve.mean,
        weighted_variance: curve.variance,
        log_mgf_curve: curve.points,
        trimmed: curve.trimmed,
        convex: curve.convex,
        fitted_eta: fit.fitted_eta,
        envelope_eta: fit.envelope_eta,
        lipschitz,
        lsi_log_alpha: options.lsi.map(|l| l.log_alpha),
        lsi_predicted_eta: bound,
        lsi_log_predicted_eta: log_bound,
        subgaussian_pass: fit.pass,
    })
}

/// The Dirac critical statistic's contour form, for cross-checks.
pub fn dirac_contour_statistic(field: &PeriodicField, g: &TestFunction, m: usize, radius: f64) -> Result<f64> {
    let op = DiracOperator::new(field)?;
    let centers = dirac::free_centers(Kernel::Critical, m);
    Ok(dirac::linear_statistic_contour(&op, g, Kernel::Critical, &centers, radius)?.value)
}
