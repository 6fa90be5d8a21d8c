//! Test functions for linear statistics: holomorphic on a strip
//! `|Im z| <= b`, bounded there, real on the real axis (`g(z̄) = conj g(z)`).

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gibbs::stream_rng;

type Evaluator = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub strip: f64,
    eval: Evaluator,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("strip", &self.strip)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        strip: f64,
        eval: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            strip,
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (self.eval)(z)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.eval(Complex64::new(x, 0.0)).re
    }

    /// Same function times `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        Self::new(format!("{c}*{}", self.name), self.strip, move |z| inner(z) * c)
    }

    /// `1/(z² + c²)`, holomorphic for `|Im z| < c`; strip `c/2`.
    pub fn lorentzian(c: f64) -> Self {
        Self::new(format!("lorentzian:c={c}"), 0.5 * c, move |z| 1.0 / (z * z + c * c))
    }

    /// `cos(az) e^{−z²}`; entire, bounded on every strip (strip 1).
    pub fn gaussian_cos(a: f64) -> Self {
        Self::new(format!("gaussian_cos:a={a}"), 1.0, move |z| (z * a).cos() * (-z * z).exp())
    }

    /// `(a + b z²)/(z² + c²)`; strip `c/2`.
    pub fn even_rational(a: f64, b: f64, c: f64) -> Self {
        Self::new(format!("even_rational:a={a},b={b},c={c}"), 0.5 * c, move |z| {
            (a + b * z * z) / (z * z + c * c)
        })
    }

    /// Band-limited `sin(w(z−s))/(w(z−s))`, in `PW(w)`; entire (strip 1).
    pub fn sinc(w: f64, shift: f64) -> Self {
        Self::new(format!("sinc:w={w},shift={shift}"), 1.0, move |z| sinc_value(w * (z - shift)))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const:c={c}"), 1.0, move |_| Complex64::new(c, 0.0))
    }

    /// `z^k` (unbounded; only for contour identities on bounded sets).
    pub fn power(k: i32) -> Self {
        Self::new(format!("power:k={k}"), 1.0, move |z| z.powi(k))
    }

    /// Parses `[builtin:]name[:key=value,...]`, e.g. `builtin:lorentzian:c=3`.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.strip_prefix("builtin:").unwrap_or(spec);
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in args.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value in '{part}'")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number '{v}' in '{spec}'")))?;
            kv.insert(k.trim().to_string(), v);
        }
        let get = |k: &str, default: f64| kv.get(k).copied().unwrap_or(default);
        let f = match name {
            "lorentzian" => {
                let c = get("c", 3.0);
                if !(c > 0.0) {
                    return Err(Error::InvalidParameter("lorentzian needs c > 0".into()));
                }
                Self::lorentzian(c)
            }
            "gaussian_cos" => Self::gaussian_cos(get("a", 1.0)),
            "even_rational" => {
                let c = get("c", 3.0);
                if !(c > 0.0) {
                    return Err(Error::InvalidParameter("even_rational needs c > 0".into()));
                }
                Self::even_rational(get("a", 1.0), get("b", 0.0), c)
            }
            "sinc" => Self::sinc(get("w", 2.0), get("shift", 0.0)),
            "const" => Self::constant(get("c", 1.0)),
            other => {
                return Err(Error::InvalidParameter(format!("unknown test function '{other}'")))
            }
        };
        Ok(f)
    }

    /// Largest `|g(z̄) − conj g(z)|` over 100 seeded points of the strip.
    pub fn symmetry_defect(&self) -> f64 {
        let mut rng = stream_rng(0x7e57, 0);
        (0..100)
            .map(|_| {
                let z = Complex64::new(rng.random_range(-10.0..10.0), rng.random_range(-self.strip..=self.strip));
                (self.eval(z.conj()) - self.eval(z).conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Sampled `sup |g|` on the strip boundary `Im z = ±b`, `|Re z| <= 50`.
    pub fn boundary_sup(&self) -> f64 {
        (0..=2000)
            .flat_map(|i| {
                let x = -50.0 + 0.05 * i as f64;
                [self.strip, -self.strip].map(|y| self.eval(Complex64::new(x, y)).norm())
            })
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strip > 0.0) {
            return Err(Error::InvalidParameter("strip height must be positive".into()));
        }
        let defect = self.symmetry_defect();
        if defect >= 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "{} violates g(z̄) = conj g(z) (defect {defect:.2e})",
                self.name
            )));
        }
        if !self.boundary_sup().is_finite() {
            return Err(Error::InvalidParameter(format!("{} is unbounded on its strip", self.name)));
        }
        Ok(())
    }
}

pub(crate) fn sinc_value(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}
