//! Fixed-step transfer matrices for traceless 2×2 systems `Y' = (C(x) + λE) Y`.
//!
//! Each step uses the fourth-order Magnus expansion with two Gauss–Legendre
//! nodes. Because `A` is affine in `λ`, so is the Magnus exponent:
//! `Ω_k(λ) = Ω0_k + λ Ω1_k`. The per-step coefficients are tabulated once per
//! potential, after which each `λ` costs one 2×2 exponential per step, and
//! the exact derivative of the discrete monodromy comes from the closed-form
//! derivative of the traceless exponential.

use nalgebra::Matrix2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::PeriodicField;

pub type Mat2 = Matrix2<Complex64>;

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn commutator(a: &Mat2, b: &Mat2) -> Mat2 {
    a * b - b * a
}

/// Values of `field` at `x_k = period (k + offset) / steps`, where the field
/// has period `2π / period_divisor` (only modes divisible by it are used).
pub(crate) fn sample_shifted(
    field: &PeriodicField,
    period_divisor: usize,
    steps: usize,
    offset: f64,
) -> Vec<Complex64> {
    let d = period_divisor as i64;
    let h = 2.0 * std::f64::consts::PI / (d as f64 * steps as f64);
    let mut buf = vec![Complex64::new(0.0, 0.0); steps];
    for (n, coeff) in field.modes() {
        if n % d != 0 {
            continue;
        }
        let m = n / d;
        let phase = Complex64::from_polar(1.0, n as f64 * offset * h);
        buf[m.rem_euclid(steps as i64) as usize] += coeff * phase;
    }
    FftPlanner::new().plan_fft_inverse(steps).process(&mut buf);
    buf
}

/// `exp(Ω)` and `∂_λ exp(Ω)` for traceless `Ω` with `∂_λ Ω = Ω1`.
fn traceless_exp(omega: &Mat2, omega_l: Option<&Mat2>) -> (Mat2, Mat2) {
    // Ω² = s² I with s² = −det Ω.
    let u = -(omega[(0, 0)] * omega[(1, 1)] - omega[(0, 1)] * omega[(1, 0)]);
    let (cosh, sinhc, c2) = if u.norm() < 0.25 {
        // cosh s = Σ u^k/(2k)!, sinh s / s = Σ u^k/(2k+1)!,
        // (cosh s − sinh s/s)/s² = Σ u^k (2k+2)/(2k+3)!.
        let mut ch = c(0.0);
        let mut sh = c(0.0);
        let mut d2 = c(0.0);
        let mut pow = c(1.0);
        let mut fact = 1.0; // (2k)!
        for k in 0..12 {
            let kf = k as f64;
            ch += pow / fact;
            sh += pow / (fact * (2.0 * kf + 1.0));
            d2 += pow * (2.0 * kf + 2.0) / (fact * (2.0 * kf + 1.0) * (2.0 * kf + 2.0) * (2.0 * kf + 3.0));
            pow *= u;
            fact *= (2.0 * kf + 1.0) * (2.0 * kf + 2.0);
        }
        (ch, sh, d2)
    } else {
        let s = u.sqrt();
        let ch = s.cosh();
        let sh = s.sinh() / s;
        (ch, sh, (ch - sh) / u)
    };
    let id = Mat2::identity();
    let e = id * cosh + omega * sinhc;
    let de = match omega_l {
        Some(ol) => {
            let sigma = 0.5 * (omega * ol).trace();
            id * (sinhc * sigma) + omega * (c2 * sigma) + ol * sinhc
        }
        None => Mat2::zeros(),
    };
    (e, de)
}

/// Tabulated Magnus exponents over one period.
#[derive(Clone, Debug)]
pub struct Propagator {
    omega0: Vec<Mat2>,
    omega1: Vec<Mat2>,
}

impl Propagator {
    /// `coefficient(v1, v2)` returns `C` at the two Gauss nodes of a step from
    /// the sampled potential values there.
    pub(crate) fn new(
        field: &PeriodicField,
        period_divisor: usize,
        steps: usize,
        e: Mat2,
        coefficient: impl Fn(Complex64) -> Mat2,
    ) -> Self {
        let period = 2.0 * std::f64::consts::PI / period_divisor as f64;
        let h = period / steps as f64;
        let v1 = sample_shifted(field, period_divisor, steps, 0.5 - SQRT3 / 6.0);
        let v2 = sample_shifted(field, period_divisor, steps, 0.5 + SQRT3 / 6.0);
        let k = SQRT3 / 12.0 * h * h;
        let mut omega0 = Vec::with_capacity(steps);
        let mut omega1 = Vec::with_capacity(steps);
        for (a, b) in v1.iter().zip(&v2) {
            let c1 = coefficient(*a);
            let c2 = coefficient(*b);
            omega0.push((c1 + c2) * c(0.5 * h) + commutator(&c2, &c1) * c(k));
            omega1.push(e * c(h) + commutator(&e, &(c1 - c2)) * c(k));
        }
        Self { omega0, omega1 }
    }

    pub fn steps(&self) -> usize {
        self.omega0.len()
    }

    fn check(m: &Mat2, lambda: Complex64) -> Result<()> {
        if m.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteMonodromy {
                re: lambda.re,
                im: lambda.im,
            })
        }
    }

    /// Transfer matrix over one period.
    pub fn monodromy(&self, lambda: Complex64) -> Result<Mat2> {
        let mut y = Mat2::identity();
        for (o0, o1) in self.omega0.iter().zip(&self.omega1) {
            let (e, _) = traceless_exp(&(o0 + o1 * lambda), None);
            y = e * y;
        }
        Self::check(&y, lambda)?;
        Ok(y)
    }

    /// Transfer matrix together with its exact `λ`-derivative.
    pub fn monodromy_with_derivative(&self, lambda: Complex64) -> Result<(Mat2, Mat2)> {
        let mut y = Mat2::identity();
        let mut dy = Mat2::zeros();
        for (o0, o1) in self.omega0.iter().zip(&self.omega1) {
            let (e, de) = traceless_exp(&(o0 + o1 * lambda), Some(o1));
            dy = e * dy + de * y;
            y = e * y;
        }
        Self::check(&y, lambda)?;
        Self::check(&dy, lambda)?;
        Ok((y, dy))
    }
}
