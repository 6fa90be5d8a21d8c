//! Truncated periodic fields on the circle T = [0, 2π).
//!
//! A [`PeriodicField`] stores the complex Fourier coefficients `a_n + i b_n`
//! of `e^{inx}` for `|n| <= cutoff`. All integrals use the normalised measure
//! `dx / 2π`, so Parseval reads `∫|φ|² dx/2π = Σ (a_n² + b_n²)`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used by the reality and π-periodicity checks.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub struct PeriodicField {
    cutoff: usize,
    coeffs: Vec<Complex64>,
}

/// Uniform samples `values[k] = φ(2πk/G)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSignal {
    pub values: Vec<Complex64>,
}

impl GridSignal {
    pub fn grid_size(&self) -> usize {
        self.values.len()
    }
}

/// Default quadrature grid: `max(256, 8(M+1))`, rounded up to a power of two.
pub fn default_grid_size(cutoff: usize) -> usize {
    256usize.max(8 * (cutoff + 1)).next_power_of_two()
}

/// Smallest grid that resolves every mode `|n| <= cutoff` without aliasing.
pub fn min_grid_size(cutoff: usize) -> usize {
    2 * cutoff + 1
}

fn check_grid(cutoff: usize, grid: usize) -> Result<()> {
    let min = min_grid_size(cutoff);
    if grid < min {
        return Err(Error::GridTooSmall { grid, cutoff, min });
    }
    Ok(())
}

impl PeriodicField {
    pub fn zero(cutoff: usize) -> Self {
        Self {
            cutoff,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * cutoff + 1],
        }
    }

    /// Builds a field from coefficients ordered `n = -cutoff, ..., cutoff`.
    pub fn from_coeffs(cutoff: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * cutoff + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients for cutoff {}, got {}",
                2 * cutoff + 1,
                cutoff,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(Self { cutoff, coeffs })
    }

    pub fn from_fn(cutoff: usize, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let m = cutoff as i64;
        Self {
            cutoff,
            coeffs: (-m..=m).map(&mut f).collect(),
        }
    }

    /// Field with the listed `(n, a_n, b_n)` entries and zeros elsewhere.
    pub fn from_modes(cutoff: usize, modes: &[(i64, f64, f64)]) -> Result<Self> {
        let mut field = Self::zero(cutoff);
        for &(n, a, b) in modes {
            if n.unsigned_abs() as usize > cutoff {
                return Err(Error::InvalidParameter(format!(
                    "mode {n} outside cutoff {cutoff}"
                )));
            }
            field.coeffs[(n + cutoff as i64) as usize] = Complex64::new(a, b);
        }
        Ok(field)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Coefficients ordered `n = -cutoff, ..., cutoff`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of `e^{inx}`; zero outside the cutoff.
    pub fn coeff(&self, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.cutoff {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(n + self.cutoff as i64) as usize]
        }
    }

    /// Iterator over `(n, coefficient)`.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let m = self.cutoff as i64;
        (-m..=m).zip(self.coeffs.iter().copied())
    }

    /// Same function represented with a different cutoff (zero-padded or truncated).
    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        Self::from_fn(cutoff, |n| self.coeff(n))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            cutoff: self.cutoff,
            coeffs: self.coeffs.iter().map(|z| z * c).collect(),
        }
    }

    /// Multiplies by a complex constant.
    pub fn scale_complex(&self, c: Complex64) -> Self {
        Self {
            cutoff: self.cutoff,
            coeffs: self.coeffs.iter().map(|z| z * c).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let cutoff = self.cutoff.max(other.cutoff);
        Self::from_fn(cutoff, |n| f(self.coeff(n), other.coeff(n)))
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// `u(x) -> u(kx)`: mode `n` moves to `k n`.
    pub fn dilate(&self, k: usize) -> Self {
        let k = k.max(1) as i64;
        Self::from_fn(self.cutoff * k as usize, |n| {
            if n % k == 0 {
                self.coeff(n / k)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    fn scale_of_coeffs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `c_{-n} = conj(c_n)` for every `n`, i.e. `a_{-n} = a_n`, `b_{-n} = -b_n`.
    pub fn is_real_valued(&self) -> bool {
        let tol = SYMMETRY_TOL * (1.0 + self.scale_of_coeffs());
        (0..=self.cutoff as i64).all(|n| (self.coeff(-n) - self.coeff(n).conj()).norm() <= tol)
    }

    /// First odd mode carrying weight, if any.
    pub fn first_odd_mode(&self) -> Option<i64> {
        let tol = SYMMETRY_TOL * (1.0 + self.scale_of_coeffs());
        self.modes()
            .find(|&(n, c)| n % 2 != 0 && c.norm() > tol)
            .map(|(n, _)| n)
    }

    /// Enforces exact conjugate symmetry by averaging `c_n` with `conj(c_{-n})`.
    pub fn symmetrized_real(&self) -> Self {
        Self::from_fn(self.cutoff, |n| 0.5 * (self.coeff(n) + self.coeff(-n).conj()))
    }

    /// Stable identifier of the coefficient bits.
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.cutoff.hash(&mut h);
        for c in &self.coeffs {
            c.re.to_bits().hash(&mut h);
            c.im.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Direct evaluation of the Fourier sum at an arbitrary point.
    pub fn value_at(&self, x: f64) -> Complex64 {
        self.modes()
            .map(|(n, c)| c * Complex64::from_polar(1.0, n as f64 * x))
            .sum()
    }

    /// Samples the field on the uniform grid `x_k = 2πk/G`.
    pub fn evaluate(&self, grid_size: usize) -> Result<GridSignal> {
        check_grid(self.cutoff, grid_size)?;
        let mut buf = vec![Complex64::new(0.0, 0.0); grid_size];
        for (n, c) in self.modes() {
            buf[n.rem_euclid(grid_size as i64) as usize] += c;
        }
        FftPlanner::new().plan_fft_inverse(grid_size).process(&mut buf);
        Ok(GridSignal { values: buf })
    }

    /// Recovers the modes `|n| <= cutoff` from uniform samples.
    pub fn from_grid(signal: &GridSignal, cutoff: usize) -> Result<Self> {
        let g = signal.grid_size();
        check_grid(cutoff, g)?;
        let mut buf = signal.values.clone();
        FftPlanner::new().plan_fft_forward(g).process(&mut buf);
        let inv = 1.0 / g as f64;
        Ok(Self::from_fn(cutoff, |n| {
            buf[n.rem_euclid(g as i64) as usize] * inv
        }))
    }

    /// `∫|φ|² dx/2π = Σ (a_n² + b_n²)`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `|φ_0|² + Σ_n |n|^{2γ} |φ_n|²`, where the `n = 0` term of the sum is 0.
    pub fn sobolev_norm_sq(&self, gamma: f64) -> f64 {
        let sum: f64 = self
            .modes()
            .filter(|&(n, _)| n != 0)
            .map(|(n, c)| (n.unsigned_abs() as f64).powf(2.0 * gamma) * c.norm_sqr())
            .sum();
        self.coeff(0).norm_sqr() + sum
    }

    /// `½ Σ n² |φ_n|² = ½ ∫|φ'|² dx/2π`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self
            .modes()
            .map(|(n, c)| (n * n) as f64 * c.norm_sqr())
            .sum::<f64>()
    }

    /// `V(φ) = ∫|φ|^p dx/2π` by the trapezoid rule on `grid_size` points.
    pub fn lp_integral(&self, p: f64, grid_size: usize) -> Result<f64> {
        if !(p >= 2.0) {
            return Err(Error::InvalidParameter(format!("p = {p} must be >= 2")));
        }
        let signal = self.evaluate(grid_size)?;
        Ok(mean_abs_pow(&signal.values, p))
    }

    /// `H(φ) = ½ Σ n²|φ_n|² + (β/p) V(φ)`.
    pub fn hamiltonian(&self, p: f64, beta: f64, grid_size: usize) -> Result<f64> {
        let potential = if beta == 0.0 {
            0.0
        } else {
            beta / p * self.lp_integral(p, grid_size)?
        };
        Ok(self.kinetic_energy() + potential)
    }

    /// `∫ q³ dx/2π` for a real-valued field (signed; not `|q|³`).
    pub fn cubic_integral(&self, grid_size: usize) -> Result<f64> {
        self.require_real()?;
        let signal = self.evaluate(grid_size)?;
        let g = signal.grid_size() as f64;
        Ok(signal.values.iter().map(|v| v.re.powi(3)).sum::<f64>() / g)
    }

    /// KdV energy `½ Σ n²|q_n|² − (β/6) ∫ q³ dx/2π`.
    pub fn kdv_hamiltonian(&self, beta: f64, grid_size: usize) -> Result<f64> {
        let cubic = self.cubic_integral(grid_size)?;
        Ok(self.kinetic_energy() - beta / 6.0 * cubic)
    }

    pub fn require_real(&self) -> Result<()> {
        if self.is_real_valued() {
            Ok(())
        } else {
            Err(Error::NotRealValued(
                "coefficients are not conjugate-symmetric".into(),
            ))
        }
    }
}

/// Trapezoid mean of `|v|^p` over grid values.
pub(crate) fn mean_abs_pow(values: &[Complex64], p: f64) -> f64 {
    let g = values.len() as f64;
    let sum: f64 = if p == 2.0 {
        values.iter().map(|v| v.norm_sqr()).sum()
    } else if p == 4.0 {
        values.iter().map(|v| v.norm_sqr().powi(2)).sum()
    } else {
        values.iter().map(|v| v.norm_sqr().powf(0.5 * p)).sum()
    };
    sum / g
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    cutoff: usize,
    coeffs: Vec<(i64, f64, f64)>,
}

impl From<PeriodicField> for FieldRepr {
    fn from(f: PeriodicField) -> Self {
        FieldRepr {
            cutoff: f.cutoff,
            coeffs: f.modes().map(|(n, c)| (n, c.re, c.im)).collect(),
        }
    }
}

impl TryFrom<FieldRepr> for PeriodicField {
    type Error = Error;

    fn try_from(r: FieldRepr) -> Result<Self> {
        let mut seen = vec![false; 2 * r.cutoff + 1];
        for &(n, a, b) in &r.coeffs {
            if n.unsigned_abs() as usize > r.cutoff {
                return Err(Error::Format(format!("mode {n} exceeds cutoff {}", r.cutoff)));
            }
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Format(format!("non-finite coefficient at mode {n}")));
            }
            let slot = (n + r.cutoff as i64) as usize;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::Format(format!("duplicate mode {n}")));
            }
        }
        PeriodicField::from_modes(r.cutoff, &r.coeffs)
    }
}
