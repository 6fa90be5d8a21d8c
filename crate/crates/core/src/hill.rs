//! Hill's equation `−f'' + q f = λ f` for real π-periodic `q`.
//!
//! The transfer matrix of `(f, f')` is taken over one period π, so the free
//! discriminant is `2cos(π√λ)` and the periodic spectrum of `q = 0` is
//! `0, 1, 1, 4, 4, 9, 9, …` (`Δ = 2` at even squares, `Δ = −2` at odd ones).

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirac::Monodromy;
use crate::error::{Error, Result};
use crate::field::{default_grid_size, PeriodicField};
use crate::gibbs::stream_rng;
use crate::spectral::{self, Characteristic, Kernel, PeriodicPoint};
use crate::test_function::{sinc_value, TestFunction};
use crate::transfer::{Mat2, Propagator};

/// Marker written into every output.
pub const PERIOD_CONVENTION: &str = "pi";
pub const DEFAULT_TOL: f64 = 1e-12;
/// Size of the documented probe family for frame bounds.
pub const FRAME_FAMILY_SIZE: usize = 64;
pub const FRAME_FAMILY_SEED: u64 = 29;

pub fn default_steps(cutoff: usize) -> usize {
    1024usize.max(32 * (cutoff + 1)).next_power_of_two()
}

fn check_potential(q: &PeriodicField) -> Result<()> {
    q.require_real()?;
    if let Some(n) = q.first_odd_mode() {
        return Err(Error::OddModes(n));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct HillOperator {
    propagator: Propagator,
    potential_hash: u64,
    min_potential: f64,
}

impl HillOperator {
    pub fn new(q: &PeriodicField) -> Result<Self> {
        Self::with_steps(q, default_steps(q.cutoff()))
    }

    pub fn with_steps(q: &PeriodicField, steps: usize) -> Result<Self> {
        check_potential(q)?;
        if steps < 64 || steps < q.cutoff() + 1 {
            return Err(Error::InvalidParameter(format!(
                "{steps} steps cannot resolve cutoff {}",
                q.cutoff()
            )));
        }
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let e = Mat2::new(zero, zero, -one, zero);
        let propagator = Propagator::new(q, 2, steps, e, |v| Mat2::new(zero, one, Complex64::new(v.re, 0.0), zero));
        let values = q.evaluate(default_grid_size(q.cutoff()))?.values;
        let min_potential = values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        Ok(Self {
            propagator,
            potential_hash: q.content_hash(),
            min_potential,
        })
    }

    pub fn monodromy(&self, lambda: Complex64) -> Result<Monodromy> {
        let m = self.propagator.monodromy(lambda)?;
        Ok(Monodromy::from_mat(&m, lambda, self.potential_hash))
    }

    pub fn discriminant(&self, lambda: f64) -> Result<f64> {
        Ok(self.delta(Complex64::new(lambda, 0.0))?.re)
    }

    /// No periodic eigenvalue lies below `min q`.
    pub fn spectrum_floor(&self) -> f64 {
        self.min_potential - 0.5
    }
}

impl Characteristic for HillOperator {
    fn delta(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.propagator.monodromy(lambda)?.trace())
    }

    fn delta_with_derivative(&self, lambda: Complex64) -> Result<(Complex64, Complex64)> {
        let (m, dm) = self.propagator.monodromy_with_derivative(lambda)?;
        Ok((m.trace(), dm.trace()))
    }
}

pub fn hill_monodromy(q: &PeriodicField, lambda: Complex64, steps: usize) -> Result<Monodromy> {
    HillOperator::with_steps(q, steps)?.monodromy(lambda)
}

pub fn hill_discriminant(q: &PeriodicField, lambda: f64) -> Result<f64> {
    HillOperator::new(q)?.discriminant(lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// `j` in `(λ_{2j−1}, λ_{2j})`.
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HillSpectralData {
    pub period: String,
    pub lambda_max: f64,
    /// `λ_0 < λ_1 <= λ_2 < …`, closed gaps listed twice.
    pub eigenvalues: Vec<f64>,
    pub points: Vec<PeriodicPoint>,
    pub gaps: Vec<Gap>,
    /// `t_0, t_1, …`; negative indices follow from `t_{−n} = −t_n`.
    pub midpoints: Vec<f64>,
}

impl HillSpectralData {
    pub fn max_index(&self) -> usize {
        self.midpoints.len().saturating_sub(1)
    }

    pub fn t(&self, n: i64) -> Option<f64> {
        let t = *self.midpoints.get(n.unsigned_abs() as usize)?;
        Some(if n < 0 { -t } else { t })
    }

    /// `t_{−J}, …, t_J`.
    pub fn two_sided(&self, j: usize) -> Result<Vec<f64>> {
        if j > self.max_index() {
            return Err(Error::InsufficientPoints {
                needed: j,
                available: self.max_index(),
            });
        }
        Ok((-(j as i64)..=j as i64).filter_map(|n| self.t(n)).collect())
    }
}

/// Scan nodes with spacing `0.1·max(1, 2√λ)`.
fn hill_scan_grid(lo: f64, hi: f64) -> Vec<f64> {
    let mut grid = vec![lo];
    let mut x = lo;
    while x < hi {
        x = (x + 0.1 * (2.0 * x.max(0.0).sqrt()).max(1.0)).min(hi);
        grid.push(x);
    }
    grid
}

/// Periodic spectrum with every gap whose critical point lies below `lambda_max`.
pub fn hill_periodic_spectrum(q: &PeriodicField, lambda_max: f64, tol: f64) -> Result<HillSpectralData> {
    spectrum_of(&HillOperator::new(q)?, lambda_max, tol)
}

pub fn spectrum_of(op: &HillOperator, lambda_max: f64, tol: f64) -> Result<HillSpectralData> {
    let lo = op.spectrum_floor();
    if !(lambda_max > lo) {
        return Err(Error::InvalidParameter(format!(
            "lambda_max {lambda_max} lies below the spectrum floor {lo}"
        )));
    }
    // Overshoot by one free spacing so the last gap below λ_max is complete.
    let hi = (lambda_max.max(0.0).sqrt() + 1.5).powi(2);
    let grid = hill_scan_grid(lo, hi);
    let critical = spectral::critical_points(op, &grid, tol)?;
    let points = spectral::periodic_points(op, lo, hi, &critical, tol)?;
    let used = critical.iter().filter(|&&c| c <= lambda_max).count();
    if points.len() < 2 * used + 1 {
        return Err(Error::Bracketing(format!(
            "found {} periodic points for {used} gaps below {lambda_max}",
            points.len()
        )));
    }
    let points: Vec<PeriodicPoint> = points[..2 * used + 1].to_vec();
    let eigenvalues: Vec<f64> = points.iter().map(|p| p.lambda).collect();
    for (j, &c) in critical[..used].iter().enumerate() {
        let (a, b) = (eigenvalues[2 * j + 1], eigenvalues[2 * j + 2]);
        if !(a <= c + 1e-9 && c <= b + 1e-9) {
            return Err(Error::Bracketing(format!(
                "critical point {c} not inside gap ({a}, {b}); refine the scan near λ = {c}"
            )));
        }
    }
    let gaps: Vec<Gap> = (1..=used)
        .map(|j| {
            let (lower, upper) = (eigenvalues[2 * j - 1], eigenvalues[2 * j]);
            Gap {
                index: j,
                lower,
                upper,
                length: (upper - lower).max(0.0),
            }
        })
        .collect();
    let mut midpoints = vec![0.0];
    midpoints.extend(gaps.iter().map(|g| {
        let m = 0.5 * (g.lower + g.upper);
        m.signum() * m.abs().sqrt()
    }));
    Ok(HillSpectralData {
        period: PERIOD_CONVENTION.into(),
        lambda_max,
        eigenvalues,
        points,
        gaps,
        midpoints,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BorgReport {
    pub mean: f64,
    pub l1_norm: f64,
    pub hypotheses_hold: bool,
    pub n_max: usize,
    /// `max_{1<=n<=n_max} |t_n − n|`
    pub max_deviation: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// `max_j |t_j² − j²|`
    pub max_square_deviation: f64,
    pub violations: Vec<String>,
    pub passes: bool,
}

/// Hypotheses `∫q = 0`, `∫|q| < 1/2` and the resulting sampling claims
/// `|t_n − n| < 1/4`, `t_{n+1} − t_n < 3/2`, `t_n − t_m > 1/2 (n > m)`.
pub fn borg_check(q: &PeriodicField, data: &HillSpectralData, n_max: usize) -> Result<BorgReport> {
    let t = data.two_sided(n_max)?;
    let values = q.evaluate(default_grid_size(q.cutoff()).max(4096))?.values;
    let g = values.len() as f64;
    let mean = values.iter().map(|v| v.re).sum::<f64>() / g;
    let l1_norm = values.iter().map(|v| v.re.abs()).sum::<f64>() / g;
    let hypotheses_hold = mean.abs() < 1e-10 && l1_norm < 0.5;
    let mut violations = Vec::new();
    let mut max_deviation: f64 = 0.0;
    let mut max_square_deviation: f64 = 0.0;
    for n in 1..=n_max as i64 {
        let tn = data.t(n).unwrap_or(f64::NAN);
        let dev = (tn - n as f64).abs();
        max_deviation = max_deviation.max(dev);
        max_square_deviation = max_square_deviation.max((tn * tn - (n * n) as f64).abs());
        if !(dev < 0.25) {
            violations.push(format!("|t_{n} - {n}| = {dev:.4} >= 1/4"));
        }
    }
    let steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let max_step = steps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_step = steps.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max_step < 1.5) {
        violations.push(format!("max t_(n+1) - t_n = {max_step:.4} >= 3/2"));
    }
    if !(min_step > 0.5) {
        violations.push(format!("min t_(n+1) - t_n = {min_step:.4} <= 1/2"));
    }
    Ok(BorgReport {
        mean,
        l1_norm,
        hypotheses_hold,
        n_max,
        max_deviation,
        max_step,
        min_step,
        max_square_deviation,
        passes: violations.is_empty(),
        violations,
    })
}

/// Rescales a mean-zero real potential so that `∫|q| dx/2π <= target`.
pub fn rescale_to_borg(q: &PeriodicField, target: f64) -> Result<PeriodicField> {
    let mean = q.coeff(0);
    let centered = q.sub(&PeriodicField::from_fn(q.cutoff(), |n| if n == 0 { mean } else { Complex64::new(0.0, 0.0) }));
    let values = centered.evaluate(default_grid_size(q.cutoff()).max(4096))?.values;
    let l1 = values.iter().map(|v| v.re.abs()).sum::<f64>() / values.len() as f64;
    Ok(if l1 > target { centered.scale(target / l1) } else { centered })
}

/// `g(z) = e^{iωz} sinc(w(z − s))`, band `[ω − w, ω + w] ⊂ [−2, 2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub modulation: f64,
    pub half_band: f64,
    pub shift: f64,
}

impl Probe {
    pub fn eval(&self, x: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.modulation * x) * sinc_value(Complex64::new(self.half_band * (x - self.shift), 0.0))
    }

    /// `‖g‖²_{L²(ℝ)} = π / w`.
    pub fn norm_sq(&self) -> f64 {
        std::f64::consts::PI / self.half_band
    }
}

/// Five band-2 sincs at shifts `0, ±1/4, ±1/2`, then seeded modulated sincs
/// with `|ω| <= 3/2`, `w = 2 − |ω|`, `|s| <= 1/2`.
pub fn frame_family(size: usize, seed: u64) -> Vec<Probe> {
    let mut family: Vec<Probe> = [0.0, 0.25, -0.25, 0.5, -0.5]
        .iter()
        .take(size)
        .map(|&shift| Probe {
            modulation: 0.0,
            half_band: 2.0,
            shift,
        })
        .collect();
    let mut rng = stream_rng(seed, 0);
    while family.len() < size {
        let modulation: f64 = rng.random_range(-1.5..=1.5);
        family.push(Probe {
            modulation,
            half_band: 2.0 - modulation.abs(),
            shift: rng.random_range(-0.5..=0.5),
        });
    }
    family
}

/// `R(g) = Σ_n |g(t_n)|² / ‖g‖²`.
pub fn frame_ratio(t: &[f64], g: impl Fn(f64) -> Complex64, norm_sq: f64) -> f64 {
    t.iter().map(|&x| g(x).norm_sqr()).sum::<f64>() / norm_sq
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEstimate {
    pub lower: f64,
    pub upper: f64,
    pub test_family_size: usize,
    pub index_range: usize,
    pub argmin: Probe,
    pub argmax: Probe,
}

/// Extremes of `R(g)` over the probe family on `t_{−J..J}` (length `2J+1`).
pub fn frame_bounds_estimate(t: &[f64], family: &[Probe]) -> Result<FrameEstimate> {
    if family.is_empty() || t.is_empty() {
        return Err(Error::InvalidParameter("degenerate frame family or sequence".into()));
    }
    let ratios: Vec<f64> = family
        .par_iter()
        .map(|p| frame_ratio(t, |x| p.eval(x), p.norm_sq()))
        .collect();
    let (imin, lower) = ratios.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let (imax, upper) = ratios.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    Ok(FrameEstimate {
        lower,
        upper,
        test_family_size: family.len(),
        index_range: (t.len() - 1) / 2,
        argmin: family[imin],
        argmax: family[imax],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwEntry {
    pub k: usize,
    pub t_sq: f64,
    pub radius: f64,
    /// True when the radius had to grow beyond 1/4.
    pub adapted: bool,
    pub root_count: f64,
}

/// `t_k² = (1/4πi) ∮_{C(k², r)} λ Δ'(λ)/(Δ(λ) ∓ 2) dλ` (`−` for even `k`).
pub fn pw_statistic_contour(op: &HillOperator, ks: impl IntoIterator<Item = usize>) -> Result<Vec<PwEntry>> {
    let ks: Vec<usize> = ks.into_iter().collect();
    ks.par_iter().map(|&k| pw_entry(op, k)).collect()
}

fn pw_entry(op: &HillOperator, k: usize) -> Result<PwEntry> {
    if k == 0 {
        return Err(Error::InvalidParameter("t_0 = 0 by convention; k must be >= 1".into()));
    }
    let kernel = if k.is_multiple_of(2) { Kernel::Principal } else { Kernel::Complementary };
    let kf = k as f64;
    let center = kf * kf;
    // Nearest other free root of the same kernel sits at (k ± 2)².
    let lower_gap = if k >= 2 { center - (kf - 2.0).powi(2) } else { f64::INFINITY };
    let max_radius = 0.45 * lower_gap.min((kf + 2.0).powi(2) - center);
    let id = |z: Complex64| z;
    let mut radius = 0.25;
    loop {
        let ci = spectral::circle_integral(op, kernel, center, radius, 128, &id);
        if let Ok(ci) = ci {
            if ci.count_is_integral() && ci.count.round() == 2.0 {
                return Ok(PwEntry {
                    k,
                    t_sq: 0.5 * ci.value.re,
                    radius,
                    adapted: radius > 0.25,
                    root_count: ci.count,
                });
            }
        }
        radius *= 1.5;
        if radius > max_radius {
            return Err(Error::ContourRejected(format!(
                "no circle around {center} up to radius {max_radius:.3} encloses exactly two roots"
            )));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummability {
    pub lengths: Vec<f64>,
    /// `Σ_{j<=J} (λ_{2j} − λ_{2j−1})²`.
    pub partial_l2: Vec<f64>,
    /// Least-squares slope of `log length` against `log j` over open gaps
    /// in the upper half of the index range (None with fewer than 3).
    pub tail_slope: Option<f64>,
}

pub fn gap_summability_report(data: &HillSpectralData) -> GapSummability {
    let lengths: Vec<f64> = data.gaps.iter().map(|g| g.length).collect();
    let partial_l2 = lengths
        .iter()
        .scan(0.0, |acc, l| {
            *acc += l * l;
            Some(*acc)
        })
        .collect();
    let pts: Vec<(f64, f64)> = data
        .gaps
        .iter()
        .skip(data.gaps.len() / 2)
        .filter(|g| g.length > 1e-12)
        .map(|g| ((g.index as f64).ln(), g.length.ln()))
        .collect();
    let tail_slope = (pts.len() >= 3).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    GapSummability {
        lengths,
        partial_l2,
        tail_slope,
    }
}

/// `Λ_q(g) = Σ_{n=−M}^{M} g(t_n)`.
pub fn midpoint_statistic(data: &HillSpectralData, g: &TestFunction, m: usize) -> Result<f64> {
    Ok(data.two_sided(m)?.iter().map(|&t| g.eval_real(t)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{importance_ensemble, GibbsParams};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn mathieu(eps: f64) -> PeriodicField {
        PeriodicField::from_modes(2, &[(-2, eps, 0.0), (2, eps, 0.0)]).unwrap()
    }

    #[test]
    fn free_discriminant() {
        let op = HillOperator::new(&PeriodicField::zero(2)).unwrap();
        assert_abs_diff_eq!(op.discriminant(1.0).unwrap(), -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(op.discriminant(4.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(op.discriminant(-1.0).unwrap(), 2.0 * PI.cosh(), epsilon = 1e-10);
    }

    #[test]
    fn constant_shift() {
        let c = 0.37;
        let q = PeriodicField::from_modes(0, &[(0, c, 0.0)]).unwrap();
        let op = HillOperator::new(&q).unwrap();
        for l in [0.5, 2.0, 7.3] {
            assert_abs_diff_eq!(op.discriminant(l).unwrap(), 2.0 * (PI * (l - c).sqrt()).cos(), epsilon = 1e-10);
        }
        let base = hill_periodic_spectrum(&mathieu(0.1), 30.0, DEFAULT_TOL).unwrap();
        let shifted = hill_periodic_spectrum(&mathieu(0.1).add(&q.with_cutoff(2)), 30.0 + c, DEFAULT_TOL).unwrap();
        assert_eq!(base.eigenvalues.len(), shifted.eigenvalues.len());
        for (a, b) in base.eigenvalues.iter().zip(&shifted.eigenvalues) {
            assert_abs_diff_eq!(a + c, *b, epsilon = 1e-7);
        }
    }

    #[test]
    fn rejects_bad_potentials() {
        let odd = PeriodicField::from_modes(1, &[(1, 0.1, 0.0), (-1, 0.1, 0.0)]).unwrap();
        assert!(matches!(HillOperator::new(&odd), Err(Error::OddModes(_))));
        let complex = PeriodicField::from_modes(2, &[(2, 0.1, 0.0)]).unwrap();
        assert!(matches!(HillOperator::new(&complex), Err(Error::NotRealValued(_))));
    }

    #[test]
    fn free_spectrum() {
        let data = hill_periodic_spectrum(&PeriodicField::zero(2), 100.0, DEFAULT_TOL).unwrap();
        assert_eq!(data.eigenvalues.len(), 21);
        assert_abs_diff_eq!(data.eigenvalues[0], 0.0, epsilon = 1e-7);
        for n in 1..=10usize {
            assert_abs_diff_eq!(data.eigenvalues[2 * n - 1], (n * n) as f64, epsilon = 1e-7);
            assert_abs_diff_eq!(data.eigenvalues[2 * n], (n * n) as f64, epsilon = 1e-7);
            assert_abs_diff_eq!(data.t(n as i64).unwrap(), n as f64, epsilon = 1e-7);
            assert_abs_diff_eq!(data.t(-(n as i64)).unwrap(), -(n as f64), epsilon = 1e-7);
        }
        assert!(data.gaps.iter().all(|g| g.length == 0.0));
        assert_eq!(data.period, "pi");
    }

    #[test]
    fn mathieu_first_gap() {
        let eps = 0.1;
        let op = HillOperator::new(&mathieu(eps)).unwrap();
        let data = spectrum_of(&op, 20.0, DEFAULT_TOL).unwrap();
        let fine = spectrum_of(&HillOperator::with_steps(&mathieu(eps), 8192).unwrap(), 20.0, 1e-14).unwrap();
        let g = data.gaps[0];
        assert_abs_diff_eq!(g.length, fine.gaps[0].length, epsilon = 1e-9);
        assert!((g.length - 2.0 * eps).abs() < eps * eps);
        for &l in &data.eigenvalues {
            let d = op.discriminant(l).unwrap();
            assert!((d * d - 4.0).abs() < 1e-6);
        }
        for w in data.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn borg_on_free_and_mathieu() {
        let q = PeriodicField::zero(2);
        let data = hill_periodic_spectrum(&q, 110.0, DEFAULT_TOL).unwrap();
        let r = borg_check(&q, &data, 10).unwrap();
        assert!(r.passes && r.hypotheses_hold);
        assert!(r.max_deviation < 1e-7);
        let q = mathieu(0.1);
        let data = hill_periodic_spectrum(&q, 110.0, DEFAULT_TOL).unwrap();
        let r = borg_check(&q, &data, 10).unwrap();
        assert_abs_diff_eq!(r.l1_norm, 0.4 / PI, epsilon = 1e-6);
        assert!(r.passes && r.hypotheses_hold, "{:?}", r.violations);
    }

    #[test]
    fn borg_on_sampled_potentials() {
        let params = GibbsParams::kdv(0.0, 1e6, 16);
        let ens = importance_ensemble(5, &params, 3).unwrap();
        for s in &ens.samples {
            let q = rescale_to_borg(s, 0.45).unwrap();
            let data = hill_periodic_spectrum(&q, 110.0, DEFAULT_TOL).unwrap();
            let r = borg_check(&q, &data, 10).unwrap();
            assert!(r.hypotheses_hold && r.passes, "{:?}", r.violations);
        }
    }

    #[test]
    fn frame_family_and_bounds() {
        let fam = frame_family(FRAME_FAMILY_SIZE, FRAME_FAMILY_SEED);
        assert_eq!(fam.len(), 64);
        assert_eq!(fam[0], Probe { modulation: 0.0, half_band: 2.0, shift: 0.0 });
        assert!(fam.iter().all(|p| p.modulation.abs() + p.half_band <= 2.0 + 1e-15));
        // Free samples: Σ_n sinc²(2n) = π/2 over all integers, so R → 1.
        let t: Vec<f64> = (-2000..=2000).map(|n| n as f64).collect();
        let r = frame_ratio(&t, |x| fam[0].eval(x), fam[0].norm_sq());
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-3);
        let direct: f64 = (-2000i64..=2000)
            .map(|n| if n == 0 { 1.0 } else { ((2 * n) as f64).sin().powi(2) / (4 * n * n) as f64 })
            .sum::<f64>()
            / (PI / 2.0);
        assert_abs_diff_eq!(r, direct, epsilon = 1e-12);
        let c = 3.7;
        let scaled = frame_ratio(&t, |x| fam[7].eval(x) * c, fam[7].norm_sq() * c * c);
        assert_abs_diff_eq!(scaled, frame_ratio(&t, |x| fam[7].eval(x), fam[7].norm_sq()), epsilon = 1e-10);
        let est = frame_bounds_estimate(&t[1980..2021], &fam).unwrap();
        assert!(est.lower > 0.0 && est.lower <= est.upper);
    }

    #[test]
    fn pw_contour_matches_midpoints() {
        let free = HillOperator::new(&PeriodicField::zero(2)).unwrap();
        let e = pw_statistic_contour(&free, [1, 2, 3, 4]).unwrap();
        for (entry, k) in e.iter().zip(1..) {
            assert_abs_diff_eq!(entry.t_sq, (k * k) as f64, epsilon = 1e-8);
        }
        let op = HillOperator::new(&mathieu(0.05)).unwrap();
        let data = spectrum_of(&op, 70.0, DEFAULT_TOL).unwrap();
        for entry in pw_statistic_contour(&op, 1..=8).unwrap() {
            let t = data.t(entry.k as i64).unwrap();
            assert!((entry.t_sq - t * t).abs() < 1e-6, "k={}: {} vs {}", entry.k, entry.t_sq, t * t);
        }
    }

    #[test]
    fn gap_tails() {
        let free = hill_periodic_spectrum(&PeriodicField::zero(2), 50.0, DEFAULT_TOL).unwrap();
        let r = gap_summability_report(&free);
        assert!(r.lengths.iter().all(|&l| l == 0.0) && r.tail_slope.is_none());
        let smooth = hill_periodic_spectrum(&mathieu(0.3), 100.0, DEFAULT_TOL).unwrap();
        let r = gap_summability_report(&smooth);
        assert!(r.lengths[0] > r.lengths[2] && r.lengths[2] > r.lengths[4]);
        assert!(r.partial_l2.windows(2).all(|w| w[0] <= w[1]));
    }
}
