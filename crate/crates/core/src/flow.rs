//! Strang split-step evolution of `−i u_t = −u_xx + β|u|^{p−2}u`.
//!
//! A field with cutoff `M` evolves on the padded mode range `|n| <= 2M+1`,
//! sampled on the `G = 4M+3` point grid, so grid values and modes
//! correspond one-to-one. The linear substep multiplies mode `n` by
//! `e^{i n² dt}` and the nonlinear substep rotates every grid value by
//! `e^{iβ|u|^{p−2}dt}`; both preserve `Σ|u_n|²` exactly, and the scheme is
//! symmetric, so stepping with `−dt` undoes stepping with `dt`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::concentration::Statistic;
use crate::dirac::{self, DiracOperator};
use crate::error::{Error, Result};
use crate::field::{default_grid_size, PeriodicField};
use crate::gibbs::{stream_rng, FieldKind, GibbsEnsemble};

const BLOW_UP_DRIFT: f64 = 1e-3;
/// Linear-phase resolution guard `|dt| M² <= 0.1`.
pub const RESOLUTION_GUARD: f64 = 0.1;
pub const PERMUTATIONS: usize = 200;
pub const NULL_QUANTILE: f64 = 0.99;
/// `(dt, M)` levels of the isospectral refinement study.
pub const REFINEMENT_LEVELS: [(f64, usize); 3] = [(2e-3, 8), (1e-3, 16), (5e-4, 32)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub p: f64,
    pub beta: f64,
    pub dt: f64,
    pub steps: usize,
    pub cutoff: usize,
}

impl FlowParams {
    /// `steps = round(time/|dt|)`; the sign of `dt` sets the direction.
    pub fn new(p: f64, beta: f64, dt: f64, time: f64, cutoff: usize) -> Result<Self> {
        let params = Self {
            p,
            beta,
            dt,
            steps: (time / dt.abs()).round() as usize,
            cutoff,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0) {
            return Err(Error::InvalidParameter(format!("p = {} must be >= 2", self.p)));
        }
        if !(self.dt.is_finite() && self.dt != 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter("dt must be finite and nonzero, beta finite".into()));
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn resolution_warning(&self) -> bool {
        self.dt.abs() * (self.cutoff * self.cutoff) as f64 > RESOLUTION_GUARD
    }

    pub fn reversed(&self) -> Self {
        Self { dt: -self.dt, ..*self }
    }

    /// Mode range `|n| <= 2M+1` of the evolved state.
    pub fn padded_cutoff(&self) -> usize {
        2 * self.cutoff + 1
    }
}

struct SplitStep {
    k: usize,
    grid: usize,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    p: f64,
    beta_dt: f64,
}

impl SplitStep {
    fn new(params: &FlowParams, k: usize) -> Self {
        let grid = 2 * k + 1;
        let phase = |n: i64, tau: f64| Complex64::from_polar(1.0, (n * n) as f64 * tau);
        let index_mode = |i: usize| if i <= k { i as i64 } else { i as i64 - grid as i64 };
        let half = (0..grid).map(|i| phase(index_mode(i), 0.5 * params.dt)).collect();
        let full = (0..grid).map(|i| phase(index_mode(i), params.dt)).collect();
        let mut planner = FftPlanner::new();
        Self {
            k,
            grid,
            half,
            full,
            forward: planner.plan_fft_forward(grid),
            inverse: planner.plan_fft_inverse(grid),
            p: params.p,
            beta_dt: params.beta * params.dt,
        }
    }

    fn load(&self, field: &PeriodicField) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.grid];
        for (n, c) in field.modes() {
            buf[n.rem_euclid(self.grid as i64) as usize] = c;
        }
        buf
    }

    fn unload(&self, buf: &[Complex64]) -> PeriodicField {
        PeriodicField::from_fn(self.k, |n| buf[n.rem_euclid(self.grid as i64) as usize])
    }

    fn nonlinear(&self, buf: &mut [Complex64]) {
        if self.beta_dt == 0.0 {
            return;
        }
        self.inverse.process(buf);
        let inv = 1.0 / self.grid as f64;
        let half_power = 0.5 * (self.p - 2.0);
        for v in buf.iter_mut() {
            let m2 = v.norm_sqr();
            let pot = if self.p == 4.0 {
                m2
            } else if self.p == 2.0 {
                1.0
            } else {
                m2.powf(half_power)
            };
            *v *= Complex64::from_polar(inv, self.beta_dt * pot);
        }
        self.forward.process(buf);
    }

    fn multiply(buf: &mut [Complex64], phase: &[Complex64]) {
        for (v, p) in buf.iter_mut().zip(phase) {
            *v *= p;
        }
    }

    /// `steps` Strang steps, merging adjacent linear half steps.
    fn run(&self, buf: &mut [Complex64], steps: usize, norm0: f64) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        Self::multiply(buf, &self.half);
        for s in 0..steps {
            self.nonlinear(buf);
            Self::multiply(buf, if s + 1 == steps { &self.half } else { &self.full });
            let norm: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
            let drift = (norm - norm0).abs() / norm0.max(f64::MIN_POSITIVE);
            if !(drift <= BLOW_UP_DRIFT) {
                return Err(Error::BlowUp(format!("L² drift {drift:.3e} after {} steps", s + 1)));
            }
        }
        Ok(())
    }
}

fn stepper(field: &PeriodicField, params: &FlowParams) -> Result<SplitStep> {
    params.validate()?;
    if field.cutoff() > params.padded_cutoff() {
        return Err(Error::InvalidParameter(format!(
            "field cutoff {} exceeds the padded range {} of flow cutoff {}",
            field.cutoff(),
            params.padded_cutoff(),
            params.cutoff
        )));
    }
    Ok(SplitStep::new(params, params.padded_cutoff()))
}

/// State at time `dt·steps`, with cutoff `2M+1`.
pub fn split_step_evolve(field: &PeriodicField, params: &FlowParams) -> Result<PeriodicField> {
    let s = stepper(field, params)?;
    let mut buf = s.load(field);
    s.run(&mut buf, params.steps, field.l2_norm_sq())?;
    Ok(s.unload(&buf))
}

pub fn evolve_backward(field: &PeriodicField, params: &FlowParams) -> Result<PeriodicField> {
    split_step_evolve(field, &params.reversed())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: FlowParams,
    pub times: Vec<f64>,
    pub fields: Vec<PeriodicField>,
}

/// States every `record_every` steps, including the initial and final ones.
pub fn trajectory(field: &PeriodicField, params: &FlowParams, record_every: usize) -> Result<Trajectory> {
    let s = stepper(field, params)?;
    let every = record_every.max(1);
    let mut buf = s.load(field);
    let norm0 = field.l2_norm_sq();
    let mut times = vec![0.0];
    let mut fields = vec![s.unload(&buf)];
    let mut done = 0;
    while done < params.steps {
        let chunk = every.min(params.steps - done);
        s.run(&mut buf, chunk, norm0)?;
        done += chunk;
        times.push(params.dt * done as f64);
        fields.push(s.unload(&buf));
    }
    Ok(Trajectory {
        params: *params,
        times,
        fields,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `max_t |N(t) − N(0)| / N(0)`
    pub n_drift: f64,
    /// `max_t |H(t) − H(0)| / max(|H(0)|, 1e−300)`
    pub h_drift: f64,
}

pub fn conservation_check(traj: &Trajectory) -> Result<ConservationReport> {
    let (p, beta) = (traj.params.p, traj.params.beta);
    let first = traj.fields.first().ok_or(Error::EmptyEnsemble)?;
    let grid = default_grid_size(first.cutoff());
    let n0 = first.l2_norm_sq();
    let h0 = first.hamiltonian(p, beta, grid)?;
    let mut report = ConservationReport {
        n_drift: 0.0,
        h_drift: 0.0,
    };
    for f in &traj.fields {
        report.n_drift = report.n_drift.max((f.l2_norm_sq() - n0).abs() / n0.max(1e-300));
        report.h_drift = report
            .h_drift
            .max((f.hamiltonian(p, beta, grid)? - h0).abs() / h0.abs().max(1e-300));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsospectralReport {
    pub beta: f64,
    pub dt: f64,
    pub cutoff: usize,
    pub time: f64,
    /// The self-adjoint Dirac operator is a Lax operator only when `β > 0`.
    pub lax_pair_applies: bool,
    /// Potential `s·u` whose spectrum is compared (`s = √(β/2)`).
    pub spectral_scale: f64,
    pub window: [f64; 2],
    pub initial: Vec<f64>,
    #[serde(rename = "final")]
    pub final_: Vec<f64>,
    /// Largest distance from an initial eigenvalue to its nearest final one.
    pub drift: f64,
    pub resolution_warning: bool,
}

/// Dirac periodic spectrum of `u(·,0)` against `u(·,T)` for `p = 4`.
pub fn isospectrality_check(field: &PeriodicField, params: &FlowParams, window: [f64; 2]) -> Result<IsospectralReport> {
    if params.p != 4.0 {
        return Err(Error::InvalidParameter("isospectrality needs p = 4".into()));
    }
    let evolved = split_step_evolve(field, params)?;
    let lax_pair_applies = params.beta > 0.0;
    let scale = if lax_pair_applies { (params.beta / 2.0).sqrt() } else { 1.0 };
    let spectrum = |f: &PeriodicField, w: [f64; 2]| -> Result<Vec<f64>> {
        let op = DiracOperator::new(&f.scale(scale))?;
        Ok(dirac::spectral_data(&op, w, dirac::DEFAULT_TOL)?.periodic_lambdas())
    };
    let initial = spectrum(field, window)?;
    let final_ = spectrum(&evolved, [window[0] - 1.0, window[1] + 1.0])?;
    let drift = initial
        .iter()
        .map(|a| final_.iter().map(|b| (a - b).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(IsospectralReport {
        beta: params.beta,
        dt: params.dt,
        cutoff: params.cutoff,
        time: params.time(),
        lax_pair_applies,
        spectral_scale: scale,
        window,
        initial,
        final_,
        drift,
        resolution_warning: params.resolution_warning(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub levels: Vec<IsospectralReport>,
    /// Drift strictly decreases from level to level.
    pub monotone: bool,
}

pub fn isospectral_refinement(
    field: &PeriodicField,
    beta: f64,
    time: f64,
    levels: &[(f64, usize)],
    window: [f64; 2],
) -> Result<RefinementStudy> {
    let levels: Vec<IsospectralReport> = levels
        .iter()
        .map(|&(dt, m)| isospectrality_check(field, &FlowParams::new(4.0, beta, dt, time, m.max(field.cutoff()))?, window))
        .collect::<Result<_>>()?;
    let monotone = levels.windows(2).all(|w| w[1].drift < w[0].drift);
    Ok(RefinementStudy { levels, monotone })
}

/// `sup_x |F_a(x) − F_b(x)|` for weighted empirical distributions.
pub fn weighted_ks(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (ta, tb): (f64, f64) = (a.iter().map(|x| x.1).sum(), b.iter().map(|x| x.1).sum());
    if ta <= 0.0 || tb <= 0.0 {
        return 0.0;
    }
    let mut merged: Vec<(f64, f64)> = a
        .iter()
        .map(|&(x, w)| (x, w / ta))
        .chain(b.iter().map(|&(x, w)| (x, -w / tb)))
        .collect();
    merged.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut diff: f64 = 0.0;
    let mut best: f64 = 0.0;
    let mut i = 0;
    while i < merged.len() {
        let x = merged[i].0;
        while i < merged.len() && merged[i].0 == x {
            diff += merged[i].1;
            i += 1;
        }
        best = best.max(diff.abs());
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub observable: String,
    /// Before vs after on the same members (0 at `T = 0`).
    pub paired_ks: f64,
    /// Before on even-indexed members vs after on odd-indexed members.
    pub split_ks: f64,
    /// Before on even vs before on odd members: the Monte Carlo baseline.
    pub baseline_ks: f64,
    /// 99% quantile of the split distance under random relabelling.
    pub null_band: f64,
    pub within_band: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub params: FlowParams,
    pub time: f64,
    pub members: usize,
    pub blow_ups: usize,
    pub observables: Vec<ObservableReport>,
    pub all_within_band: bool,
}

fn permutation_band(a: &[(f64, f64)], b: &[(f64, f64)], permutations: usize, seed: u64) -> f64 {
    let pool: Vec<(f64, f64)> = a.iter().chain(b).copied().collect();
    let mut dists: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut p = pool.clone();
            p.shuffle(&mut rng);
            let (x, y) = p.split_at(a.len());
            weighted_ks(x, y)
        })
        .collect();
    dists.sort_by(f64::total_cmp);
    if dists.is_empty() {
        return 0.0;
    }
    let idx = ((NULL_QUANTILE * dists.len() as f64).ceil() as usize).clamp(1, dists.len()) - 1;
    dists[idx]
}

/// Evolves every member to `T` and compares observable distributions.
pub fn invariance_check(
    ensemble: &GibbsEnsemble,
    params: &FlowParams,
    observables: &[Statistic],
    permutations: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    if ensemble.len() < 4 {
        return Err(Error::InsufficientPoints {
            needed: 4,
            available: ensemble.len(),
        });
    }
    let ep = &ensemble.params;
    if ep.kind != FieldKind::Nls || ep.beta != params.beta || (params.beta != 0.0 && ep.p != params.p) {
        return Err(Error::InvalidParameter(format!(
            "ensemble (p = {}, β = {}) does not match the flow (p = {}, β = {})",
            ep.p, ep.beta, params.p, params.beta
        )));
    }
    let evolved: Vec<Option<PeriodicField>> = ensemble
        .samples
        .par_iter()
        .map(|f| split_step_evolve(f, params).ok())
        .collect();
    let blow_ups = evolved.iter().filter(|e| e.is_none()).count();
    let kept: Vec<usize> = (0..ensemble.len()).filter(|&i| evolved[i].is_some()).collect();
    let mut reports = Vec::new();
    for (oi, obs) in observables.iter().enumerate() {
        let pairs: Vec<Option<(f64, f64)>> = kept
            .par_iter()
            .map(|&i| {
                let before = obs.eval(&ensemble.samples[i]).ok()?;
                let after = obs.eval(evolved[i].as_ref()?).ok()?;
                (before.is_finite() && after.is_finite()).then_some((before, after))
            })
            .collect();
        let mut before = Vec::new();
        let mut after = Vec::new();
        let (mut be, mut bo, mut ao) = (Vec::new(), Vec::new(), Vec::new());
        for (j, (pair, &i)) in pairs.iter().zip(&kept).enumerate() {
            let Some((x, y)) = *pair else { continue };
            let w = ensemble.weights[i];
            before.push((x, w));
            after.push((y, w));
            if j % 2 == 0 {
                be.push((x, w));
            } else {
                bo.push((x, w));
                ao.push((y, w));
            }
        }
        let split_ks = weighted_ks(&be, &ao);
        let null_band = permutation_band(&be, &ao, permutations, seed ^ (oi as u64).wrapping_mul(0x9e37_79b9));
        reports.push(ObservableReport {
            observable: obs.to_string(),
            paired_ks: weighted_ks(&before, &after),
            split_ks,
            baseline_ks: weighted_ks(&be, &bo),
            null_band,
            within_band: split_ks <= null_band,
        });
    }
    Ok(InvarianceReport {
        params: *params,
        time: params.time(),
        members: kept.len(),
        blow_ups,
        all_within_band: reports.iter().all(|r| r.within_band),
        observables: reports,
    })
}
