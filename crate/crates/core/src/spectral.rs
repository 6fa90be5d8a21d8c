//! Root location for discriminants shared by the Dirac and Hill operators:
//! critical points by scanning `Δ'`, periodic points `Δ = ±2` on the monotone
//! pieces between them, and contour integrals of `g · kernel` over circles.

use num_complex::Complex64;
use rayon::prelude::*;
use roots::{find_root_brent, Convergency};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|Δ² − 4|` below this at a critical point marks a closed gap.
pub const DOUBLE_POINT_TOL: f64 = 1e-10;
/// Default number of trapezoid nodes per circle.
pub const CONTOUR_NODES: usize = 64;

/// Entire characteristic function of a periodic spectral problem.
pub trait Characteristic: Sync {
    fn delta(&self, lambda: Complex64) -> Result<Complex64>;
    /// `(Δ(λ), Δ'(λ))`.
    fn delta_with_derivative(&self, lambda: Complex64) -> Result<(Complex64, Complex64)>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Series {
    /// `Δ = 2`
    Principal,
    /// `Δ = −2`
    Complementary,
}

impl Series {
    pub fn target(self) -> f64 {
        match self {
            Series::Principal => 2.0,
            Series::Complementary => -2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub lambda: f64,
    pub series: Series,
    /// Both members of a closed gap; such points are listed twice.
    pub double: bool,
}

struct Tolerance(f64);

impl Convergency<f64> for Tolerance {
    fn is_root_found(&mut self, y: f64) -> bool {
        y == 0.0
    }
    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() <= self.0 * (1.0 + x1.abs())
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter > 200
    }
}

/// Brent's method on a fallible function with a sign change on `[a, b]`.
pub fn brent(mut f: impl FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut failure = None;
    let root = find_root_brent(
        a,
        b,
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        &mut Tolerance(tol),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    root.map_err(|e| Error::Bracketing(format!("[{a}, {b}]: {e:?}")))
}

fn real(op: &impl Characteristic, lambda: f64) -> Result<f64> {
    Ok(op.delta(Complex64::new(lambda, 0.0))?.re)
}

fn real_derivative(op: &impl Characteristic, lambda: f64) -> Result<f64> {
    Ok(op.delta_with_derivative(Complex64::new(lambda, 0.0))?.1.re)
}

/// Zeros of `Δ'` between consecutive nodes of `grid` (sign changes).
pub fn critical_points(op: &impl Characteristic, grid: &[f64], tol: f64) -> Result<Vec<f64>> {
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&x| real_derivative(op, x))
        .collect::<Result<_>>()?;
    let brackets: Vec<(f64, f64)> = (0..grid.len().saturating_sub(1))
        .filter(|&i| values[i] != 0.0 && values[i] * values[i + 1] <= 0.0)
        .map(|i| (grid[i], grid[i + 1]))
        .collect();
    let mut roots: Vec<f64> = brackets
        .par_iter()
        .map(|&(a, b)| brent(|x| real_derivative(op, x), a, b, tol))
        .collect::<Result<_>>()?;
    if values.first() == Some(&0.0) {
        roots.insert(0, grid[0]);
    }
    Ok(roots)
}

/// All solutions of `Δ = ±2` in `[lo, hi]` given the critical points inside.
pub fn periodic_points(
    op: &impl Characteristic,
    lo: f64,
    hi: f64,
    critical: &[f64],
    tol: f64,
) -> Result<Vec<PeriodicPoint>> {
    let mut nodes = vec![lo];
    nodes.extend(critical.iter().copied().filter(|&c| c > lo && c < hi));
    nodes.push(hi);
    let values: Vec<f64> = nodes.par_iter().map(|&x| real(op, x)).collect::<Result<_>>()?;
    let is_crit = |i: usize| i > 0 && i + 1 < nodes.len();
    let double_at = |i: usize, s: Series| {
        is_crit(i) && (values[i] * values[i] - 4.0).abs() < DOUBLE_POINT_TOL && values[i].signum() == s.target().signum()
    };
    let mut points = Vec::new();
    for (i, &x) in nodes.iter().enumerate() {
        for s in [Series::Principal, Series::Complementary] {
            if double_at(i, s) {
                for _ in 0..2 {
                    points.push(PeriodicPoint { lambda: x, series: s, double: true });
                }
            } else if !is_crit(i) && values[i] == s.target() {
                points.push(PeriodicPoint { lambda: x, series: s, double: false });
            }
        }
    }
    let mut jobs = Vec::new();
    for i in 0..nodes.len() - 1 {
        for s in [Series::Principal, Series::Complementary] {
            if double_at(i, s) || double_at(i + 1, s) {
                continue;
            }
            let (fa, fb) = (values[i] - s.target(), values[i + 1] - s.target());
            if fa * fb < 0.0 {
                jobs.push((nodes[i], nodes[i + 1], s));
            }
        }
    }
    let found: Vec<PeriodicPoint> = jobs
        .par_iter()
        .map(|&(a, b, s)| {
            let lambda = brent(|x| Ok(real(op, x)? - s.target()), a, b, tol)?;
            Ok(PeriodicPoint { lambda, series: s, double: false })
        })
        .collect::<Result<_>>()?;
    points.extend(found);
    points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `Δ''/Δ'`: residues at critical points.
    Critical,
    /// `Δ'/(Δ − 2)`
    Principal,
    /// `Δ'/(Δ + 2)`
    Complementary,
}

impl Kernel {
    pub fn series(self) -> Option<Series> {
        match self {
            Kernel::Critical => None,
            Kernel::Principal => Some(Series::Principal),
            Kernel::Complementary => Some(Series::Complementary),
        }
    }
}

/// `(1/2πi)∮ g·kernel` and the root count `(1/2πi)∮ kernel` on one circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleIntegral {
    pub center: f64,
    pub radius: f64,
    pub value: Complex64,
    pub count: f64,
}

impl CircleIntegral {
    pub fn count_is_integral(&self) -> bool {
        (self.count - self.count.round()).abs() < 0.1
    }
}

/// Trapezoid rule on `|λ − center| = radius`.
///
/// The critical kernel needs `Δ''`; it is obtained from the Taylor
/// coefficients of `Δ'` computed on the concentric circle of radius
/// `2·radius`, which converge geometrically on the inner circle.
pub fn circle_integral(
    op: &impl Characteristic,
    kernel: Kernel,
    center: f64,
    radius: f64,
    nodes: usize,
    g: &(dyn Fn(Complex64) -> Complex64 + Sync),
) -> Result<CircleIntegral> {
    let c0 = Complex64::new(center, 0.0);
    let unit: Vec<Complex64> = (0..nodes)
        .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / nodes as f64))
        .collect();
    let kernel_values: Vec<Complex64> = match kernel {
        Kernel::Critical => {
            let outer = 2.0 * radius;
            let d1: Vec<Complex64> = unit
                .par_iter()
                .map(|u| Ok(op.delta_with_derivative(c0 + u * outer)?.1))
                .collect::<Result<_>>()?;
            // a_k = (1/N) Σ_j Δ'(c + R u_j) u_j^{−k} / R^k
            let taylor: Vec<Complex64> = (0..nodes)
                .map(|k| {
                    let s: Complex64 = d1
                        .iter()
                        .zip(&unit)
                        .map(|(v, u)| v * u.powi(-(k as i32)))
                        .sum();
                    s / (nodes as f64 * outer.powi(k as i32))
                })
                .collect();
            unit.iter()
                .map(|u| {
                    let w = u * radius;
                    let (mut d, mut dd) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                    for k in (0..nodes).rev() {
                        d = d * w + taylor[k];
                        if k > 0 {
                            dd = dd * w + taylor[k] * k as f64;
                        }
                    }
                    dd / d
                })
                .collect()
        }
        Kernel::Principal | Kernel::Complementary => {
            let t = kernel.series().map(Series::target).unwrap_or(0.0);
            unit.par_iter()
                .map(|u| {
                    let (d, d1) = op.delta_with_derivative(c0 + u * radius)?;
                    Ok(d1 / (d - t))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut value = Complex64::new(0.0, 0.0);
    let mut count = Complex64::new(0.0, 0.0);
    for (u, k) in unit.iter().zip(&kernel_values) {
        let z = c0 + u * radius;
        let dz = u * radius; // dλ / (i dθ)
        value += g(z) * k * dz;
        count += k * dz;
    }
    let n = nodes as f64;
    let (value, count) = (value / n, count / n);
    if !(value.re.is_finite() && value.im.is_finite() && count.re.is_finite()) {
        return Err(Error::ContourRejected(format!(
            "non-finite contour integral on circle at {center} (radius {radius}); a root lies on the contour"
        )));
    }
    Ok(CircleIntegral {
        center,
        radius,
        value,
        count: count.re,
    })
}

/// Two-sided window `j = −M..M` around the point nearest zero.
pub fn two_sided(points: &[f64], m: usize) -> Result<&[f64]> {
    let needed = 2 * m + 1;
    if points.len() < needed {
        return Err(Error::InsufficientPoints {
            needed,
            available: points.len(),
        });
    }
    let zero = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if zero < m || zero + m >= points.len() {
        return Err(Error::InsufficientPoints {
            needed,
            available: points.len().min(2 * zero.min(points.len() - 1 - zero) + 1),
        });
    }
    Ok(&points[zero - m..=zero + m])
}

/// Uniform scan grid covering `[lo, hi]` with spacing at most `step`.
pub fn scan_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}
