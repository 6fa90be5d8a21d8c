//! Weighted ensembles for the truncated Gibbs measures of periodic NLS and KdV.
//!
//! The Gaussian reference is the Wiener loop: independent coefficients
//! `(ζ_n + iζ'_n)/n` for `1 <= |n| <= M` and a vanishing mean. The density
//! `exp(−(β/p)V)` (NLS) or `exp((β/6)∫q³)` (KdV) is applied either as an
//! importance weight or inside a Metropolis test whose proposal keeps the
//! Gaussian reference invariant.
//!
//! Random streams: sample slot `i` of an importance ensemble draws from a
//! ChaCha8 generator seeded with the master seed on stream `i`. A Markov
//! chain uses stream `u64::MAX`. The output therefore does not depend on how
//! many worker threads run the slots.

use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{default_grid_size, PeriodicField};

/// Default rejection budget.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

/// Largest log-weight that still exponentiates to a finite `f64`.
const MAX_LOG_WEIGHT: f64 = 709.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Nls,
    Kdv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsParams {
    pub kind: FieldKind,
    /// Nonlinearity exponent (NLS only; KdV always uses the cubic term).
    pub p: f64,
    pub beta: f64,
    /// Mass bound `N` of the ball `‖φ‖² <= N`.
    pub ball_radius: f64,
    pub holder_gamma: Option<f64>,
    pub holder_bound: Option<f64>,
    pub cutoff: usize,
    pub max_attempts: u64,
}

impl GibbsParams {
    pub fn nls(p: f64, beta: f64, ball_radius: f64, cutoff: usize) -> Self {
        Self {
            kind: FieldKind::Nls,
            p,
            beta,
            ball_radius,
            holder_gamma: None,
            holder_bound: None,
            cutoff,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn kdv(beta: f64, ball_radius: f64, cutoff: usize) -> Self {
        Self {
            kind: FieldKind::Kdv,
            p: 3.0,
            ..Self::nls(3.0, beta, ball_radius, cutoff)
        }
    }

    pub fn with_holder(mut self, gamma: f64, bound: f64) -> Self {
        self.holder_gamma = Some(gamma);
        self.holder_bound = Some(bound);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.kind == FieldKind::Nls && !(2.0..=6.0).contains(&self.p) {
            return bad(format!("NLS exponent p = {} must lie in [2, 6]", self.p));
        }
        if !(self.ball_radius > 0.0) {
            return bad(format!("ball radius N = {} must be positive", self.ball_radius));
        }
        if !self.beta.is_finite() {
            return bad("β must be finite".into());
        }
        if let Some(k) = self.holder_bound {
            if !(k > 0.0) {
                return bad(format!("Hölder bound K = {k} must be positive"));
            }
        }
        if let Some(g) = self.holder_gamma {
            if !(g > 0.25 && g < 0.5) {
                return bad(format!("Hölder exponent γ = {g} must lie in (1/4, 1/2)"));
            }
        }
        if self.holder_bound.is_some() != self.holder_gamma.is_some() {
            return bad("Hölder exponent and bound must be given together".into());
        }
        if self.cutoff < 1 {
            return bad("cutoff M must be at least 1".into());
        }
        if self.kind == FieldKind::Kdv && self.cutoff < 2 {
            return bad("KdV samples live on even modes; cutoff must be at least 2".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Importance,
    Mcmc,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub attempts: u64,
    pub accepted: u64,
}

impl AcceptanceStats {
    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsEnsemble {
    pub params: GibbsParams,
    pub samples: Vec<PeriodicField>,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub method: SamplingMethod,
    pub acceptance: AcceptanceStats,
}

impl GibbsEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted mean of an observable.
    pub fn weighted_mean(&self, f: impl Fn(&PeriodicField) -> f64) -> f64 {
        let total = self.weight_sum();
        self.samples
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * f(s))
            .sum::<f64>()
            / total
    }
}

/// Independent generator for slot `index` of a run with master `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Wiener-loop draw: coefficient `(ζ + iζ')/n` on `1 <= |n| <= M`, zero mean.
pub fn wiener_loop(cutoff: usize, rng: &mut impl Rng) -> PeriodicField {
    PeriodicField::from_fn(cutoff, |n| {
        if n == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(normal(rng), normal(rng)) / n as f64
        }
    })
}

/// Seeded Wiener-loop draw.
pub fn sample_wiener_loop(cutoff: usize, seed: u64) -> PeriodicField {
    wiener_loop(cutoff, &mut stream_rng(seed, 0))
}

/// Real Gaussian field for the KdV reference measure.
///
/// Only even modes `n = 2k`, `0 < |n| <= M`, are populated, so draws are
/// π-periodic Hill potentials. Conjugate symmetry `q_{-n} = conj(q_n)` holds
/// exactly and `Re q_n, Im q_n ~ N(0, 1/(2n²))`, which realises
/// `exp(−½ ∫(q')² dx/2π) = exp(−Σ_{n>0} n²|q_n|²)`.
pub fn kdv_loop(cutoff: usize, rng: &mut impl Rng) -> PeriodicField {
    let m = cutoff as i64;
    let mut positive = vec![Complex64::new(0.0, 0.0); cutoff + 1];
    for n in (2..=m).step_by(2) {
        let sd = 1.0 / (n as f64 * std::f64::consts::SQRT_2);
        positive[n as usize] = Complex64::new(normal(rng) * sd, normal(rng) * sd);
    }
    PeriodicField::from_fn(cutoff, |n| {
        if n >= 0 {
            positive[n as usize]
        } else {
            positive[(-n) as usize].conj()
        }
    })
}

fn reference_draw(params: &GibbsParams, rng: &mut impl Rng) -> PeriodicField {
    match params.kind {
        FieldKind::Nls => wiener_loop(params.cutoff, rng),
        FieldKind::Kdv => kdv_loop(params.cutoff, rng),
    }
}

/// `log` of the Gibbs density against the Gaussian reference.
pub fn log_gibbs_weight(field: &PeriodicField, params: &GibbsParams) -> Result<f64> {
    if params.beta == 0.0 {
        return Ok(0.0);
    }
    let grid = default_grid_size(field.cutoff());
    match params.kind {
        FieldKind::Nls => Ok(-params.beta / params.p * field.lp_integral(params.p, grid)?),
        FieldKind::Kdv => Ok(params.beta / 6.0 * field.cubic_integral(grid)?),
    }
}

/// `exp(−(β/p)V(φ))` for NLS, `exp((β/6)∫q³)` for KdV.
pub fn gibbs_weight(field: &PeriodicField, params: &GibbsParams) -> Result<f64> {
    let log_weight = log_gibbs_weight(field, params)?;
    if !log_weight.is_finite() || log_weight > MAX_LOG_WEIGHT {
        return Err(Error::DivergentWeight { log_weight });
    }
    Ok(log_weight.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub in_ball: bool,
    /// `None` when no Hölder constraint is configured.
    pub in_holder_ball: Option<bool>,
}

impl Membership {
    pub fn accepted(&self) -> bool {
        self.in_ball && self.in_holder_ball.unwrap_or(true)
    }
}

/// Membership in the closed ball `Ω_N` and, when configured, in `Ω_{N,K}`.
pub fn in_omega(field: &PeriodicField, params: &GibbsParams) -> Membership {
    let in_ball = field.l2_norm_sq() <= params.ball_radius;
    let in_holder_ball = match (params.holder_gamma, params.holder_bound) {
        (Some(g), Some(k)) => Some(field.sobolev_norm_sq(g) <= k * k),
        _ => None,
    };
    Membership {
        in_ball,
        in_holder_ball,
    }
}

/// Rejection sampling from the Gaussian reference restricted to `Ω`, with
/// Gibbs importance weights attached to the survivors.
///
/// `max_attempts` bounds the total number of reference draws over all slots.
/// The running total is shared, so an exhausted budget stops every slot; the
/// outcome depends only on the per-slot streams, never on scheduling.
pub fn importance_ensemble(count: usize, params: &GibbsParams, seed: u64) -> Result<GibbsEnsemble> {
    params.validate()?;
    if count == 0 {
        return Err(Error::InvalidParameter("count must be at least 1".into()));
    }
    let budget = params.max_attempts;
    let spent = AtomicU64::new(0);
    let exhausted = || Error::NoAcceptance { attempts: budget };
    let slots: Vec<(PeriodicField, f64, u64)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut attempt = 0u64;
            loop {
                attempt += 1;
                if spent.fetch_add(1, Ordering::Relaxed) >= budget {
                    return Err(exhausted());
                }
                let draw = reference_draw(params, &mut rng);
                if in_omega(&draw, params).accepted() {
                    let w = gibbs_weight(&draw, params)?;
                    return Ok((draw, w, attempt));
                }
            }
        })
        .collect::<Result<_>>()?;
    let attempts: u64 = slots.iter().map(|s| s.2).sum();
    if attempts > budget {
        return Err(exhausted());
    }
    let (samples, weights) = slots.into_iter().map(|(f, w, _)| (f, w)).unzip();
    Ok(GibbsEnsemble {
        params: params.clone(),
        samples,
        weights,
        seed,
        method: SamplingMethod::Importance,
        acceptance: AcceptanceStats {
            attempts,
            accepted: count as u64,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    /// Blend `s` in `φ' = √(1−s²) φ + s ξ`, with `0 < s < 1`.
    pub step_size: f64,
    pub burn_in: usize,
    pub thin: usize,
}

impl McmcOptions {
    pub fn new(step_size: f64) -> Self {
        Self {
            step_size,
            burn_in: 1000,
            thin: 1,
        }
    }
}

/// Markov chain for the truncated Gibbs measure, started at the zero field.
pub fn mcmc_ensemble(
    count: usize,
    step_size: f64,
    params: &GibbsParams,
    seed: u64,
) -> Result<GibbsEnsemble> {
    mcmc_ensemble_with(count, &McmcOptions::new(step_size), params, seed)
}

pub fn mcmc_ensemble_with(
    count: usize,
    options: &McmcOptions,
    params: &GibbsParams,
    seed: u64,
) -> Result<GibbsEnsemble> {
    params.validate()?;
    let s = options.step_size;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!("step size {s} must lie in (0, 1)")));
    }
    if count == 0 || options.thin == 0 {
        return Err(Error::InvalidParameter("count and thin must be at least 1".into()));
    }
    let keep = (1.0 - s * s).sqrt();
    let mut rng = stream_rng(seed, u64::MAX);
    let mut state = PeriodicField::zero(params.cutoff);
    let mut log_w = log_gibbs_weight(&state, params)?;
    let mut stats = AcceptanceStats::default();
    let mut samples = Vec::with_capacity(count);
    let total = options.burn_in + count * options.thin;
    for iter in 0..total {
        let noise = reference_draw(params, &mut rng);
        let proposal = state.scale(keep).add(&noise.scale(s));
        let u: f64 = rng.random();
        stats.attempts += 1;
        if in_omega(&proposal, params).accepted() {
            let log_w_new = log_gibbs_weight(&proposal, params)?;
            if !log_w_new.is_finite() {
                return Err(Error::DivergentWeight { log_weight: log_w_new });
            }
            if u.ln() < log_w_new - log_w {
                state = proposal;
                log_w = log_w_new;
                stats.accepted += 1;
            }
        }
        if iter >= options.burn_in && (iter - options.burn_in + 1).is_multiple_of(options.thin) {
            samples.push(state.clone());
        }
    }
    Ok(GibbsEnsemble {
        params: params.clone(),
        weights: vec![1.0; samples.len()],
        samples,
        seed,
        method: SamplingMethod::Mcmc,
        acceptance: stats,
    })
}

/// `(Σw)² / Σw²`.
pub fn weight_ess(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        return Ok(0.0);
    }
    Ok(s * s / s2)
}

/// `n / (1 + 2 Σ ρ_k)`, summing autocorrelations until the first
/// non-positive pair sum (Geyer's initial positive sequence).
pub fn autocorrelation_ess(trace: &[f64]) -> Result<f64> {
    let n = trace.len();
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = trace.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 || n < 4 {
        return Ok(n as f64);
    }
    let rho = |k: usize| -> f64 {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = 1.0;
    let mut k = 1;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    Ok(n as f64 / tau)
}

/// Weight-based ESS for importance ensembles, autocorrelation ESS of the
/// `‖φ‖²` trace for Markov-chain ensembles.
pub fn effective_sample_size(ensemble: &GibbsEnsemble) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    match ensemble.method {
        SamplingMethod::Importance => weight_ess(&ensemble.weights),
        SamplingMethod::Mcmc => {
            let trace: Vec<f64> = ensemble.samples.iter().map(|f| f.l2_norm_sq()).collect();
            autocorrelation_ess(&trace)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    header: EnsembleHeader,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleHeader {
    pub params: GibbsParams,
    pub seed: u64,
    pub method: SamplingMethod,
    pub count: usize,
    pub attempts: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    field: PeriodicField,
    weight: f64,
}

/// JSON-lines: a header record followed by one `{field, weight}` per sample.
pub fn write_jsonl(ensemble: &GibbsEnsemble, mut out: impl Write) -> Result<()> {
    let header = HeaderRecord {
        header: EnsembleHeader {
            params: ensemble.params.clone(),
            seed: ensemble.seed,
            method: ensemble.method,
            count: ensemble.len(),
            attempts: ensemble.acceptance.attempts,
            accepted: ensemble.acceptance.accepted,
            acceptance_rate: ensemble.acceptance.rate(),
        },
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for (field, &weight) in ensemble.samples.iter().zip(&ensemble.weights) {
        serde_json::to_writer(
            &mut out,
            &SampleRecord {
                field: field.clone(),
                weight,
            },
        )?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<GibbsEnsemble> {
    let mut lines = input.lines().filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
    let first = lines
        .next()
        .ok_or_else(|| Error::Format("missing ensemble header".into()))??;
    let header: HeaderRecord = serde_json::from_str(&first)?;
    let h = header.header;
    let mut samples = Vec::new();
    let mut weights = Vec::new();
    for line in lines {
        let rec: SampleRecord = serde_json::from_str(&line?)?;
        if !(rec.weight.is_finite() && rec.weight >= 0.0) {
            return Err(Error::Format(format!("invalid weight {}", rec.weight)));
        }
        samples.push(rec.field);
        weights.push(rec.weight);
    }
    if samples.len() != h.count {
        return Err(Error::Format(format!(
            "header announces {} samples, found {}",
            h.count,
            samples.len()
        )));
    }
    Ok(GibbsEnsemble {
        params: h.params,
        samples,
        weights,
        seed: h.seed,
        method: h.method,
        acceptance: AcceptanceStats {
            attempts: h.attempts,
            accepted: h.accepted,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wiener_loop_has_no_mean_and_scaled_modes() {
        let f = sample_wiener_loop(1, 7);
        assert_eq!(f.coeff(0), Complex64::new(0.0, 0.0));
        assert!(f.coeff(1).norm() > 0.0 && f.coeff(-1).norm() > 0.0);
        assert_eq!(sample_wiener_loop(5, 7), sample_wiener_loop(5, 7));
    }

    #[test]
    fn wiener_mass_matches_partial_zeta_sum() {
        let expected = 4.0 * (1..=10).map(|j| 1.0 / (j * j) as f64).sum::<f64>();
        assert_abs_diff_eq!(expected, 6.19907, epsilon = 1e-5);
        let draws = 20_000;
        let masses: Vec<f64> = (0..draws)
            .map(|i| wiener_loop(10, &mut stream_rng(3, i)).l2_norm_sq())
            .collect();
        let mean = masses.iter().sum::<f64>() / draws as f64;
        let var = masses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} vs {expected} (se {se})");
    }

    #[test]
    fn kdv_draws_are_real_and_even() {
        let f = kdv_loop(8, &mut stream_rng(1, 0));
        assert!(f.is_real_valued());
        assert_eq!(f.first_odd_mode(), None);
        assert_eq!(f.coeff(0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn weights_examples() {
        let f = PeriodicField::from_modes(1, &[(1, 1.0, 0.0)]).unwrap();
        let free = GibbsParams::nls(4.0, 0.0, 1.0, 1);
        assert_eq!(gibbs_weight(&f, &free).unwrap(), 1.0);
        let focusing = GibbsParams::nls(4.0, -1.0, 1.0, 1);
        assert_abs_diff_eq!(gibbs_weight(&f, &focusing).unwrap(), 0.25f64.exp(), epsilon = 1e-14);

        let r = sample_wiener_loop(6, 2);
        let p = GibbsParams::nls(3.0, -0.6, 10.0, 6);
        let v = r.lp_integral(3.0, default_grid_size(6)).unwrap();
        assert!((gibbs_weight(&r, &p).unwrap() - (0.6 / 3.0 * v).exp()).abs() < 1e-10);
    }

    #[test]
    fn overflowing_weight_is_reported() {
        let f = PeriodicField::from_modes(1, &[(1, 30.0, 0.0)]).unwrap();
        let p = GibbsParams::nls(6.0, -1.0, 1e6, 1);
        assert!(matches!(gibbs_weight(&f, &p), Err(Error::DivergentWeight { .. })));
    }

    #[test]
    fn ball_membership_is_closed() {
        let n = 2.0;
        let params = GibbsParams::nls(4.0, 0.0, n, 1).with_holder(0.3, 3.0);
        let zero = PeriodicField::zero(1);
        assert_eq!(
            in_omega(&zero, &params),
            Membership {
                in_ball: true,
                in_holder_ball: Some(true)
            }
        );
        let outside = PeriodicField::from_modes(1, &[(1, n.sqrt() + 0.1, 0.0)]).unwrap();
        assert!(!in_omega(&outside, &params).in_ball);
        let boundary = PeriodicField::from_modes(1, &[(1, 1.0, 1.0)]).unwrap();
        assert_eq!(boundary.l2_norm_sq(), n);
        assert!(in_omega(&boundary, &params).in_ball);
        assert_eq!(in_omega(&zero, &GibbsParams::nls(4.0, 0.0, n, 1)).in_holder_ball, None);
    }

    #[test]
    fn free_importance_ensemble_has_unit_weights() {
        let params = GibbsParams::nls(4.0, 0.0, 1e9, 4);
        let ens = importance_ensemble(200, &params, 5).unwrap();
        assert!(ens.weights.iter().all(|&w| w == 1.0));
        assert_eq!(ens.acceptance.rate(), 1.0);
        assert_abs_diff_eq!(effective_sample_size(&ens).unwrap(), 200.0, epsilon = 1e-9);
    }

    #[test]
    fn acceptance_rate_matches_ball_probability() {
        let params = GibbsParams::nls(4.0, 0.0, 1.0, 10);
        let ens = importance_ensemble(300, &params, 11).unwrap();
        // Plain Monte Carlo oracle for P(‖φ‖² <= 1) on an independent stream.
        let trials = 200_000u64;
        let hits = (0..trials)
            .filter(|&i| wiener_loop(10, &mut stream_rng(999, i)).l2_norm_sq() <= 1.0)
            .count() as f64;
        let p_mc = hits / trials as f64;
        let rate = ens.acceptance.rate();
        let se = (p_mc * (1.0 - p_mc) / trials as f64
            + rate * rate * (1.0 - p_mc) / 300.0)
            .sqrt();
        assert!((rate - p_mc).abs() < 3.0 * se, "rate {rate} vs {p_mc} (se {se})");
        for s in &ens.samples {
            assert!(s.l2_norm_sq() <= 1.0);
        }
    }

    #[test]
    fn focusing_mean_potential_reproducible_across_seeds() {
        let params = GibbsParams::nls(4.0, -1.0, 1.0, 6);
        let v = |f: &PeriodicField| f.lp_integral(4.0, 128).unwrap();
        let a = importance_ensemble(400, &params, 1).unwrap();
        let b = importance_ensemble(400, &params, 2).unwrap();
        let a2 = importance_ensemble(400, &params, 1).unwrap();
        assert_eq!(a, a2);
        let (ma, mb) = (a.weighted_mean(v), b.weighted_mean(v));
        assert!(ma.is_finite() && mb.is_finite());
        let spread = |e: &GibbsEnsemble, m: f64| {
            let w = e.weight_sum();
            let var = e
                .samples
                .iter()
                .zip(&e.weights)
                .map(|(s, wi)| wi * (v(s) - m).powi(2))
                .sum::<f64>()
                / w;
            var / weight_ess(&e.weights).unwrap()
        };
        let se = (spread(&a, ma) + spread(&b, mb)).sqrt();
        assert!((ma - mb).abs() < 4.0 * se, "{ma} vs {mb} (se {se})");
    }

    #[test]
    fn zero_budget_reports_no_acceptance() {
        let mut params = GibbsParams::nls(4.0, 0.0, 1e-6, 10);
        params.max_attempts = 50;
        assert!(matches!(
            importance_ensemble(10, &params, 0),
            Err(Error::NoAcceptance { .. })
        ));
    }

    #[test]
    fn chain_preserves_gaussian_reference() {
        let params = GibbsParams::nls(4.0, 0.0, 1e9, 3);
        let opts = McmcOptions {
            step_size: 0.6,
            burn_in: 200,
            thin: 2,
        };
        let ens = mcmc_ensemble_with(20_000, &opts, &params, 4).unwrap();
        assert_eq!(ens.acceptance.rate(), 1.0);
        for n in [1i64, 2, 3] {
            let trace: Vec<f64> = ens.samples.iter().map(|f| f.coeff(n).re).collect();
            let ess = autocorrelation_ess(&trace).unwrap();
            let var = trace.iter().map(|x| x * x).sum::<f64>() / trace.len() as f64;
            let target = 1.0 / (n * n) as f64;
            // Var of the sample second moment of a Gaussian is 2σ⁴/ess.
            let se = (2.0 / ess).sqrt() * target;
            assert!((var - target).abs() < 4.0 * se, "mode {n}: {var} vs {target}");
        }
    }

    #[test]
    fn tiny_steps_are_almost_always_accepted() {
        let params = GibbsParams::nls(4.0, -1.0, 1.0, 6);
        let ens = mcmc_ensemble(2000, 1e-4, &params, 9).unwrap();
        assert!(ens.acceptance.rate() > 0.99);
        let coarse = mcmc_ensemble(2000, 0.9, &params, 9).unwrap();
        assert!(coarse.acceptance.rate() < ens.acceptance.rate());
        assert!(ens.samples.iter().all(|s| s.l2_norm_sq() <= 1.0));
    }

    #[test]
    fn chain_and_importance_agree_on_mass() {
        let params = GibbsParams::nls(4.0, -1.0, 1.0, 6);
        let imp = importance_ensemble(3000, &params, 21).unwrap();
        let opts = McmcOptions {
            step_size: 0.5,
            burn_in: 500,
            thin: 1,
        };
        let chain = mcmc_ensemble_with(6000, &opts, &params, 22).unwrap();
        let mi = imp.weighted_mean(|f| f.l2_norm_sq());
        let mc = chain.weighted_mean(|f| f.l2_norm_sq());
        let var_i = imp.weighted_mean(|f| (f.l2_norm_sq() - mi).powi(2));
        let var_c = chain.weighted_mean(|f| (f.l2_norm_sq() - mc).powi(2));
        let se = (var_i / weight_ess(&imp.weights).unwrap()
            + var_c / effective_sample_size(&chain).unwrap())
        .sqrt();
        assert!((mi - mc).abs() < 4.0 * se, "{mi} vs {mc} (se {se})");
    }

    #[test]
    fn ess_examples() {
        assert_abs_diff_eq!(weight_ess(&[2.0; 7]).unwrap(), 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weight_ess(&[0.0, 3.0, 0.0]).unwrap(), 1.0, epsilon = 1e-12);
        let r: f64 = 0.5;
        let w: Vec<f64> = (0..10).map(|k| r.powi(k)).collect();
        let exact = (1.0 - r.powi(10)).powi(2) / (1.0 - r).powi(2)
            / ((1.0 - r.powi(20)) / (1.0 - r * r));
        assert_abs_diff_eq!(weight_ess(&w).unwrap(), exact, epsilon = 1e-12);
        assert!(matches!(weight_ess(&[]), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn kdv_ensemble_samples_are_real() {
        let params = GibbsParams::kdv(-1.0, 1.0, 8);
        let ens = importance_ensemble(50, &params, 3).unwrap();
        for s in &ens.samples {
            assert!(s.is_real_valued() && s.l2_norm_sq() <= 1.0);
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let params = GibbsParams::nls(4.0, -1.0, 1.0, 3);
        let ens = importance_ensemble(5, &params, 8).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&ens, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 6);
        let back = read_jsonl(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, ens);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(GibbsParams::nls(7.0, 0.0, 1.0, 4).validate().is_err());
        assert!(GibbsParams::nls(4.0, 0.0, 0.0, 4).validate().is_err());
        assert!(GibbsParams::nls(4.0, 0.0, 1.0, 0).validate().is_err());
        assert!(GibbsParams::nls(4.0, 0.0, 1.0, 4)
            .with_holder(0.6, 1.0)
            .validate()
            .is_err());
    }
}
