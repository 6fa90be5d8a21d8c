//! Periodic spectral data of the Dirac operator with potential `φ = Q + iP`:
//! `Ψ' = A(x, λ) Ψ`, `A = [[Q, P], [P, −Q]] + (λ/2)[[0, −1], [1, 0]]`, on
//! `[0, 2π]`, and `Δ(λ) = tr Ψ_λ(2π)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::spectral::{self, Characteristic, CircleIntegral, Kernel, PeriodicPoint, CONTOUR_NODES};
use crate::test_function::TestFunction;
use crate::transfer::{Mat2, Propagator};

/// Scan spacing for critical points (spacing of the free spectrum is 1).
pub const SCAN_STEP: f64 = 0.05;
/// Default root tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Radius of the Cauchy differentiation circle.
pub const DERIVATIVE_RADIUS: f64 = 0.5;
/// Default contour radius.
pub const DEFAULT_RADIUS: f64 = 0.2;

/// `max(1024, 32(M+1))` rounded up to a power of two.
pub fn default_steps(cutoff: usize) -> usize {
    1024usize.max(32 * (cutoff + 1)).next_power_of_two()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub matrix: [[Complex64; 2]; 2],
    pub lambda: Complex64,
    pub potential_hash: u64,
}

impl Monodromy {
    pub(crate) fn from_mat(m: &Mat2, lambda: Complex64, potential_hash: u64) -> Self {
        Self {
            matrix: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
            lambda,
            potential_hash,
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix[0][0] + self.matrix[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }
}

/// Dirac operator for a fixed potential with its integrator tabulated.
#[derive(Clone, Debug)]
pub struct DiracOperator {
    propagator: Propagator,
    potential_hash: u64,
}

impl DiracOperator {
    pub fn new(field: &PeriodicField) -> Result<Self> {
        Self::with_steps(field, default_steps(field.cutoff()))
    }

    pub fn with_steps(field: &PeriodicField, steps: usize) -> Result<Self> {
        if steps < 64 || steps < 2 * field.cutoff() + 1 {
            return Err(Error::InvalidParameter(format!(
                "{steps} steps cannot resolve cutoff {} (need >= max(64, 2M+1))",
                field.cutoff()
            )));
        }
        let e = Mat2::new(
            Complex64::new(0.0, 0.0),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 0.0),
        );
        // A complex φ(x) = Q + iP; on the Gauss nodes of an odd or complex
        // field both parts are read from the sampled value.
        let propagator = Propagator::new(field, 1, steps, e, |v| {
            let (q, p) = (Complex64::new(v.re, 0.0), Complex64::new(v.im, 0.0));
            Mat2::new(q, p, p, -q)
        });
        Ok(Self {
            propagator,
            potential_hash: field.content_hash(),
        })
    }

    pub fn steps(&self) -> usize {
        self.propagator.steps()
    }

    pub fn monodromy(&self, lambda: Complex64) -> Result<Monodromy> {
        let m = self.propagator.monodromy(lambda)?;
        Ok(Monodromy::from_mat(&m, lambda, self.potential_hash))
    }

    /// `Δ^{(k)}(λ)`, `k <= 4`, by Cauchy's formula on a circle of radius 1/2.
    pub fn derivative(&self, lambda: Complex64, k: usize) -> Result<Complex64> {
        if k > 4 {
            return Err(Error::InvalidParameter(format!("derivative order {k} > 4")));
        }
        if k == 0 {
            return self.delta(lambda);
        }
        cauchy_derivative(|z| self.delta(z), lambda, k, DERIVATIVE_RADIUS, CONTOUR_NODES)
    }
}

impl Characteristic for DiracOperator {
    fn delta(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.propagator.monodromy(lambda)?.trace())
    }

    fn delta_with_derivative(&self, lambda: Complex64) -> Result<(Complex64, Complex64)> {
        let (m, dm) = self.propagator.monodromy_with_derivative(lambda)?;
        Ok((m.trace(), dm.trace()))
    }
}

/// `f^{(k)}(λ) = k!/(N r^k) Σ_j f(λ + r ω_j) ω_j^{−k}`.
pub(crate) fn cauchy_derivative(
    f: impl Fn(Complex64) -> Result<Complex64> + Sync,
    lambda: Complex64,
    k: usize,
    radius: f64,
    nodes: usize,
) -> Result<Complex64> {
    let terms: Vec<Complex64> = (0..nodes)
        .into_par_iter()
        .map(|j| {
            let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / nodes as f64);
            Ok(f(lambda + w * radius)? * w.powi(-(k as i32)))
        })
        .collect::<Result<_>>()?;
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    Ok(terms.iter().sum::<Complex64>() * fact / (nodes as f64 * radius.powi(k as i32)))
}

pub fn monodromy(field: &PeriodicField, lambda: Complex64, steps: usize) -> Result<Monodromy> {
    DiracOperator::with_steps(field, steps)?.monodromy(lambda)
}

pub fn discriminant(field: &PeriodicField, lambda: Complex64) -> Result<Complex64> {
    DiracOperator::new(field)?.delta(lambda)
}

pub fn discriminant_derivative(field: &PeriodicField, lambda: Complex64, k: usize) -> Result<Complex64> {
    DiracOperator::new(field)?.derivative(lambda, k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDataDirac {
    pub window: [f64; 2],
    pub periodic_points: Vec<PeriodicPoint>,
    pub critical_points: Vec<f64>,
}

impl SpectralDataDirac {
    pub fn periodic_lambdas(&self) -> Vec<f64> {
        self.periodic_points.iter().map(|p| p.lambda).collect()
    }

    pub fn series(&self, s: spectral::Series) -> Vec<f64> {
        self.periodic_points
            .iter()
            .filter(|p| p.series == s)
            .map(|p| p.lambda)
            .collect()
    }
}

fn check_window(window: [f64; 2]) -> Result<()> {
    if !(window[0] < window[1]) || !window.iter().all(|w| w.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid window {window:?}")));
    }
    Ok(())
}

/// Critical points, then periodic points on the monotone pieces between them.
pub fn spectral_data(op: &DiracOperator, window: [f64; 2], tol: f64) -> Result<SpectralDataDirac> {
    check_window(window)?;
    let grid = spectral::scan_grid(window[0], window[1], SCAN_STEP);
    let critical = spectral::critical_points(op, &grid, tol)?;
    let periodic_points = spectral::periodic_points(op, window[0], window[1], &critical, tol)?;
    Ok(SpectralDataDirac {
        window,
        periodic_points,
        critical_points: critical,
    })
}

pub fn periodic_eigenvalues(field: &PeriodicField, window: [f64; 2], tol: f64) -> Result<SpectralDataDirac> {
    spectral_data(&DiracOperator::new(field)?, window, tol)
}

pub fn critical_points(field: &PeriodicField, window: [f64; 2], tol: f64) -> Result<SpectralDataDirac> {
    check_window(window)?;
    let op = DiracOperator::new(field)?;
    let grid = spectral::scan_grid(window[0], window[1], SCAN_STEP);
    Ok(SpectralDataDirac {
        window,
        periodic_points: Vec::new(),
        critical_points: spectral::critical_points(&op, &grid, tol)?,
    })
}

/// `Σ_{j=−M}^{M} g(λ_j)`, `j = 0` the point nearest zero.
pub fn linear_statistic_direct(points: &[f64], g: &TestFunction, m: usize) -> Result<f64> {
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(spectral::two_sided(&sorted, m)?.iter().map(|&x| g.eval_real(x)).sum())
}

/// Free-operator root locations `|k| <= M` for a kernel: all integers for
/// critical points, even (odd) integers for the principal (complementary)
/// series.
pub fn free_centers(kernel: Kernel, m: usize) -> Vec<f64> {
    let m = m as i64;
    (-m..=m)
        .filter(|k| match kernel {
            Kernel::Critical => true,
            Kernel::Principal => k % 2 == 0,
            Kernel::Complementary => k % 2 != 0,
        })
        .map(|k| k as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourStatistic {
    pub value: f64,
    pub circles: Vec<CircleIntegral>,
    /// Total enclosed root count (integer for accepted placements).
    pub root_count: i64,
}

/// `(1/2πi) Σ_j ∮_{C(c_j, r)} g · kernel dλ`.
///
/// Every circle must satisfy `r < min(b, 1/4)` and enclose an integral number
/// of roots (tested with `g ≡ 1`).
pub fn linear_statistic_contour(
    op: &(impl Characteristic + ?Sized),
    g: &TestFunction,
    kernel: Kernel,
    centers: &[f64],
    radius: f64,
) -> Result<ContourStatistic> {
    if !(radius > 0.0 && radius < g.strip.min(0.25)) {
        return Err(Error::InvalidParameter(format!(
            "radius {radius} must lie in (0, min(b, 1/4)) with b = {}",
            g.strip
        )));
    }
    contour_sum(op, g, kernel, centers, radius, CONTOUR_NODES)
}

pub(crate) fn contour_sum(
    op: &(impl Characteristic + ?Sized),
    g: &TestFunction,
    kernel: Kernel,
    centers: &[f64],
    radius: f64,
    nodes: usize,
) -> Result<ContourStatistic> {
    struct Wrap<'a, T: ?Sized>(&'a T);
    impl<T: Characteristic + ?Sized + Sync> Characteristic for Wrap<'_, T> {
        fn delta(&self, l: Complex64) -> Result<Complex64> {
            self.0.delta(l)
        }
        fn delta_with_derivative(&self, l: Complex64) -> Result<(Complex64, Complex64)> {
            self.0.delta_with_derivative(l)
        }
    }
    let eval = |z: Complex64| g.eval(z);
    let circles: Vec<CircleIntegral> = centers
        .iter()
        .map(|&c| spectral::circle_integral(&Wrap(op), kernel, c, radius, nodes, &eval))
        .collect::<Result<_>>()?;
    if let Some(bad) = circles.iter().find(|c| !c.count_is_integral()) {
        return Err(Error::ContourRejected(format!(
            "circle at {} (radius {}) encloses a non-integral root count {:.4}",
            bad.center, bad.radius, bad.count
        )));
    }
    Ok(ContourStatistic {
        value: circles.iter().map(|c| c.value.re).sum(),
        root_count: circles.iter().map(|c| c.count.round() as i64).sum(),
        circles,
    })
}

/// `max_λ |Δ_a(λ) − Δ_b(λ)| / ‖φ_a − φ_b‖_{L²}`.
pub fn lipschitz_probe_delta(a: &PeriodicField, b: &PeriodicField, lambdas: &[Complex64]) -> Result<f64> {
    let m = a.cutoff().max(b.cutoff());
    let (a, b) = (a.with_cutoff(m), b.with_cutoff(m));
    let dist = a.sub(&b).l2_norm_sq().sqrt();
    if dist == 0.0 {
        return Err(Error::IdenticalFields);
    }
    let (oa, ob) = (DiracOperator::new(&a)?, DiracOperator::new(&b)?);
    let diffs: Vec<f64> = lambdas
        .par_iter()
        .map(|&l| Ok((oa.delta(l)? - ob.delta(l)?).norm()))
        .collect::<Result<_>>()?;
    Ok(diffs.into_iter().fold(0.0, f64::max) / dist)
}
