//! Hessian of the potential `V(φ) = ∫|φ|^p dx/2π` in the real coordinates
//! `(a_n, b_n)`, the bounded perturbations that restore uniform convexity in
//! the focusing case, and dense certification on truncated phase space.
//!
//! A direction `(ξ_n, η_n)` moves `φ` along `χ = ψ + iθ = Σ (ξ_n + iη_n)e^{inx}`.
//! Differentiating `|φ + tχ|^p` twice gives
//!
//! ```text
//! Q_φ(χ) = p ∫|φ|^{p−2}|χ|² + p(p−2) ∫|φ|^{p−4} (Re φ̄χ)²
//!        = (p/2) ∫|φ|^{p−2} ‖(χ, χ̄)‖² + (p(p−2)/4) ∫|φ|^{p−4} |φχ̄ + φ̄χ|²,
//! ```
//!
//! where `χ̄(x) = ψ(−x) − iθ(−x)` because `ξ, η` are real.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{default_grid_size, PeriodicField};
use crate::gibbs::stream_rng;

/// Below this modulus the phase `φ/|φ|` is treated as undefined.
const SINGULAR_EPS: f64 = 1e-12;
/// Largest truncation accepted by the dense certificate.
pub const MAX_CERTIFY_CUTOFF: usize = 16;

/// Perturbation `(ξ_n, η_n)` of the coordinates `(a_n, b_n)`, `|n| <= M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Direction {
    pub fn new(xi: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if xi.len() != eta.len() || xi.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(
                "ξ and η must both have length 2M+1".into(),
            ));
        }
        Ok(Self { xi, eta })
    }

    pub fn cutoff(&self) -> usize {
        (self.xi.len() - 1) / 2
    }

    /// `χ = ψ + iθ` as a field.
    pub fn as_field(&self) -> PeriodicField {
        let m = self.cutoff() as i64;
        PeriodicField::from_fn(self.cutoff(), |n| {
            let k = (n + m) as usize;
            Complex64::new(self.xi[k], self.eta[k])
        })
    }

    pub fn from_field(chi: &PeriodicField) -> Self {
        let (xi, eta) = chi.coeffs().iter().map(|c| (c.re, c.im)).unzip();
        Self { xi, eta }
    }

    pub fn norm_sq(&self) -> f64 {
        self.xi.iter().chain(&self.eta).map(|v| v * v).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            xi: self.xi.iter().map(|v| c * v).collect(),
            eta: self.eta.iter().map(|v| c * v).collect(),
        }
    }

    pub fn random(cutoff: usize, rng: &mut impl Rng) -> Self {
        let len = 2 * cutoff + 1;
        Self {
            xi: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            eta: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }
}

/// Pointwise weights of the quadratic form at one grid value of `φ`.
#[derive(Clone, Copy)]
struct FormPoint {
    /// `p |φ|^{p−2}`
    iso: f64,
    /// `p(p−2) |φ|^{p−2}`; multiplies `(Re ū χ)²` with `u = φ/|φ|`.
    radial: f64,
    /// `ū`, or zero where `|φ| < ε`.
    phase: Complex64,
}

/// `Q_φ` tabulated on a grid so repeated evaluations cost one FFT each.
struct HessianForm {
    points: Vec<FormPoint>,
    grid: usize,
}

impl HessianForm {
    fn new(field: &PeriodicField, p: f64, grid: usize) -> Result<Self> {
        if !(p >= 2.0) {
            return Err(Error::InvalidParameter(format!("p = {p} must be >= 2")));
        }
        let values = field.evaluate(grid)?.values;
        let points = values
            .iter()
            .map(|v| {
                let r = v.norm();
                let pow = if p == 2.0 { 1.0 } else { r.powf(p - 2.0) };
                let phase = if r < SINGULAR_EPS {
                    Complex64::new(0.0, 0.0)
                } else {
                    v.conj() / r
                };
                FormPoint {
                    iso: p * pow,
                    radial: p * (p - 2.0) * pow,
                    phase,
                }
            })
            .collect();
        Ok(Self { points, grid })
    }

    fn eval_values(&self, chi: &[Complex64]) -> f64 {
        self.points
            .iter()
            .zip(chi)
            .map(|(pt, c)| pt.iso * c.norm_sqr() + pt.radial * (pt.phase * c).re.powi(2))
            .sum::<f64>()
            / self.grid as f64
    }

    fn eval(&self, chi: &PeriodicField) -> Result<f64> {
        Ok(self.eval_values(&chi.evaluate(self.grid)?.values))
    }
}

/// `⟨Hess(V)_φ (ψ,θ), (ψ,θ)⟩` by quadrature on `grid_size` points.
pub fn hessian_form_v(
    field: &PeriodicField,
    direction: &Direction,
    p: f64,
    grid_size: usize,
) -> Result<f64> {
    let form = HessianForm::new(field, p, grid_size)?;
    let chi = direction.as_field().with_cutoff(field.cutoff().max(direction.cutoff()));
    let value = form.eval(&chi)?;
    if value < -1e-9 * (1.0 + value.abs()) {
        return Err(Error::NegativeForm(value));
    }
    Ok(value.max(0.0))
}

/// Second central difference `(V(φ+hχ) − 2V(φ) + V(φ−hχ)) / h²`.
pub fn hessian_fd_oracle(
    field: &PeriodicField,
    direction: &Direction,
    p: f64,
    h: f64,
    grid_size: usize,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step h = {h} must be positive")));
    }
    let m = field.cutoff().max(direction.cutoff());
    let phi = field.with_cutoff(m);
    let chi = direction.as_field().with_cutoff(m);
    let plus = phi.add(&chi.scale(h)).lp_integral(p, grid_size)?;
    let mid = phi.lp_integral(p, grid_size)?;
    let minus = phi.sub(&chi.scale(h)).lp_integral(p, grid_size)?;
    Ok((plus - 2.0 * mid + minus) / (h * h))
}

/// Constants of the convexity argument.
///
/// `c_gamma`: `‖φ‖_{L^{p−2}} <= C_γ ‖φ‖_{H^γ}`; `c_delta`: `‖φ‖_∞ <= C_δ ‖φ‖_{H^δ}`;
/// `kappa`: `Q_φ(χ) <= κ ‖φ‖^{p−2}_{L^{p−2}} (‖ψ‖²_∞ + ‖θ‖²_∞)`;
/// `kappa_p = κ C_γ^{p−2} C_δ²` chains the two embeddings, and
/// `c_y = κ C_δ²` is the constant multiplying `|β| N` in `Y_N` (the mass
/// replaces the `L^{p−2}` factor, so no `C_γ` appears).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityParams {
    pub delta: f64,
    pub gamma: f64,
    pub c_gamma: f64,
    pub c_delta: f64,
    pub kappa: f64,
    pub kappa_p: f64,
    pub c_y: f64,
    /// Coefficient of `V` inside `G_N`; `None` means `β/2`.
    pub g_n_potential_coefficient: Option<f64>,
    /// True when the embedding constants are sampled lower bounds.
    pub heuristic_constants: bool,
}

impl ConvexityParams {
    /// Defaults `γ = 0.3`, `δ = 0.75` with constants estimated at `cutoff`.
    pub fn defaults(p: f64, cutoff: usize) -> Result<Self> {
        Self::estimated(p, 0.3, 0.75, cutoff)
    }

    pub fn estimated(p: f64, gamma: f64, delta: f64, cutoff: usize) -> Result<Self> {
        if !(gamma > 0.25 && gamma < 0.5) {
            return Err(Error::InvalidParameter(format!("γ = {gamma} must lie in (1/4, 1/2)")));
        }
        if !(delta > 0.5 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("δ = {delta} must lie in (1/2, 1)")));
        }
        let c_gamma = estimate_lq_embedding(p - 2.0, gamma, cutoff, 0x5eed)?;
        let c_delta = sup_embedding_constant(delta, cutoff);
        let kappa = 2.0 * p * (p - 1.0);
        Ok(Self {
            delta,
            gamma,
            c_gamma,
            c_delta,
            kappa,
            kappa_p: kappa * c_gamma.powf(p - 2.0) * c_delta * c_delta,
            c_y: kappa * c_delta * c_delta,
            g_n_potential_coefficient: None,
            heuristic_constants: p > 4.0,
        })
    }

    /// `1 + |β| C_γ κ_p K^{p−2}`.
    pub fn holder_factor(&self, beta: f64, p: f64, holder_k: f64) -> f64 {
        1.0 + beta.abs() * self.c_gamma * self.kappa_p * holder_k.powf(p - 2.0)
    }

    /// Truncation level of `W_K`: `max(1, ⌈X^{1/(2(1−δ))}⌉)`.
    pub fn truncation(&self, beta: f64, p: f64, holder_k: f64) -> usize {
        let x = self.holder_factor(beta, p, holder_k);
        let m = x.powf(1.0 / (2.0 * (1.0 - self.delta))).ceil();
        if m.is_finite() {
            (m as usize).max(1)
        } else {
            usize::MAX
        }
    }

    /// `(1−δ)(|β| c_y N)^{1/(1−δ)}`.
    pub fn y_coefficient(&self, beta: f64, ball_radius: f64) -> f64 {
        (1.0 - self.delta) * (beta.abs() * self.c_y * ball_radius).powf(1.0 / (1.0 - self.delta))
    }
}

/// `sup ‖φ‖_∞ / ‖φ‖_{H^δ}` over fields with `|n| <= M`, attained by
/// `φ_n = 1/w_n`: `√(1 + Σ_{0<|n|<=M} |n|^{−2δ})`.
pub fn sup_embedding_constant(delta: f64, cutoff: usize) -> f64 {
    let tail: f64 = (1..=cutoff).map(|n| 2.0 * (n as f64).powf(-2.0 * delta)).sum();
    (1.0 + tail).sqrt()
}

/// Sampled lower bound for `sup ‖φ‖_{L^q} / ‖φ‖_{H^γ}` (1 when `q <= 2`).
pub fn estimate_lq_embedding(q: f64, gamma: f64, cutoff: usize, seed: u64) -> Result<f64> {
    if q <= 2.0 {
        return Ok(1.0);
    }
    let grid = default_grid_size(cutoff);
    let ratio = |f: &PeriodicField| -> Result<f64> {
        let lq = f.lp_integral(q, grid)?.powf(1.0 / q);
        Ok(lq / f.sobolev_norm_sq(gamma).sqrt())
    };
    let weight = |n: i64| if n == 0 { 1.0 } else { (n.unsigned_abs() as f64).powf(2.0 * gamma) };
    let mut best = ratio(&PeriodicField::from_fn(cutoff, |n| Complex64::new(1.0 / weight(n), 0.0)))?;
    let mut rng = stream_rng(seed, 0);
    for trial in 0..2000 {
        let decay = 2.0 * gamma * (trial % 5) as f64 / 4.0;
        let f = PeriodicField::from_fn(cutoff, |n| {
            let s = weight(n).powf(-0.5) * (n.unsigned_abs().max(1) as f64).powf(-decay);
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * s
        });
        best = best.max(ratio(&f)?);
    }
    Ok(best)
}

/// `X M^{2δ} Σ_{|j|<=M} (a_j² + b_j²)`.
pub fn w_k_perturbation(
    field: &PeriodicField,
    beta: f64,
    p: f64,
    holder_k: f64,
    params: &ConvexityParams,
) -> f64 {
    let x = params.holder_factor(beta, p, holder_k);
    let m = params.truncation(beta, p, holder_k);
    let low = low_mode_mass(field, m);
    if low == 0.0 {
        return 0.0;
    }
    x * (m as f64).powf(2.0 * params.delta) * low
}

fn low_mode_mass(field: &PeriodicField, m: usize) -> f64 {
    field
        .modes()
        .filter(|(n, _)| n.unsigned_abs() as usize <= m)
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// `(1−δ)(|β| c_y N)^{1/(1−δ)} ‖φ‖²`.
pub fn y_n_perturbation(field: &PeriodicField, beta: f64, ball_radius: f64, params: &ConvexityParams) -> f64 {
    params.y_coefficient(beta, ball_radius) * field.l2_norm_sq()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedValues {
    pub h: f64,
    pub h_k: f64,
    pub g_n: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    H,
    HK,
    GN,
}

impl Functional {
    /// Modulus the argument guarantees for this functional.
    pub fn paper_bound(self, params: &ConvexityParams) -> f64 {
        match self {
            Functional::H => 1.0,
            Functional::HK => 0.25,
            Functional::GN => 0.5 * (1.0 - params.delta),
        }
    }

    fn potential_coefficient(self, beta: f64, p: f64, params: &ConvexityParams) -> f64 {
        match self {
            Functional::H | Functional::HK => beta / p,
            Functional::GN => params.g_n_potential_coefficient.unwrap_or(beta / 2.0),
        }
    }
}

/// The physical model entering the perturbations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub p: f64,
    pub beta: f64,
    pub ball_radius: f64,
    pub holder_k: f64,
}

/// `H`, `H_K = H + W_K`, `G_N = ½∫|φ'|² + Y_N + c_V V` with `c_V = β/2` by default.
pub fn perturbed_hamiltonians(
    field: &PeriodicField,
    model: &Model,
    params: &ConvexityParams,
    grid_size: usize,
) -> Result<PerturbedValues> {
    let Model { p, beta, ball_radius, holder_k } = *model;
    let v = if beta == 0.0 { 0.0 } else { field.lp_integral(p, grid_size)? };
    let kinetic = field.kinetic_energy();
    let h = kinetic + beta / p * v;
    let c_v = Functional::GN.potential_coefficient(beta, p, params);
    Ok(PerturbedValues {
        h,
        h_k: h + w_k_perturbation(field, beta, p, holder_k, params),
        g_n: kinetic + y_n_perturbation(field, beta, ball_radius, params) + c_v * v,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormWeight {
    /// `Σ (ξ² + η²)`
    L2,
    /// `ξ_0² + η_0² + Σ |n|^{2δ}(ξ_n² + η_n²)`
    HDelta,
    /// `Σ n²(ξ_n² + η_n²)` (a seminorm; constants are not weighted)
    H1,
}

impl NormWeight {
    fn weight(self, n: i64, delta: f64) -> f64 {
        let a = n.unsigned_abs() as f64;
        match self {
            NormWeight::L2 => 1.0,
            NormWeight::HDelta if n == 0 => 1.0,
            NormWeight::HDelta => a.powf(2.0 * delta),
            NormWeight::H1 => a * a,
        }
    }
}

/// Coordinate order: `ξ_{−M}, η_{−M}, …, ξ_M, η_M`.
fn coordinate_mode(index: usize, cutoff: usize) -> i64 {
    (index / 2) as i64 - cutoff as i64
}

/// Dense Hessian in the coordinates `(a_n, b_n)`, `|n| <= cutoff`.
pub fn hessian_matrix(
    functional: Functional,
    field: &PeriodicField,
    model: &Model,
    params: &ConvexityParams,
    grid_size: usize,
) -> Result<DMatrix<f64>> {
    let m = field.cutoff();
    let dim = 2 * (2 * m + 1);
    let c_v = functional.potential_coefficient(model.beta, model.p, params);
    let mut h = DMatrix::zeros(dim, dim);
    if c_v != 0.0 {
        let form = HessianForm::new(field, model.p, grid_size)?;
        let basis: Vec<Vec<Complex64>> = (0..dim)
            .into_par_iter()
            .map(|i| {
                let unit = if i % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::i() };
                let n = coordinate_mode(i, m);
                PeriodicField::from_fn(m, |k| if k == n { unit } else { Complex64::new(0.0, 0.0) })
                    .evaluate(grid_size)
                    .map(|s| s.values)
            })
            .collect::<Result<_>>()?;
        // Polarisation: B(e_i, e_j) = (Q(e_i + e_j) − Q(e_i − e_j)) / 4.
        let rows: Vec<Vec<f64>> = (0..dim)
            .into_par_iter()
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        if i == j {
                            return form.eval_values(&basis[i]);
                        }
                        let sum: Vec<Complex64> = basis[i].iter().zip(&basis[j]).map(|(a, b)| a + b).collect();
                        let diff: Vec<Complex64> = basis[i].iter().zip(&basis[j]).map(|(a, b)| a - b).collect();
                        0.25 * (form.eval_values(&sum) - form.eval_values(&diff))
                    })
                    .collect()
            })
            .collect();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                h[(i, j)] = c_v * v;
                h[(j, i)] = c_v * v;
            }
        }
    }
    let (w_coeff, w_cut) = match functional {
        Functional::HK => {
            let x = params.holder_factor(model.beta, model.p, model.holder_k);
            let md = params.truncation(model.beta, model.p, model.holder_k);
            (2.0 * x * (md as f64).powf(2.0 * params.delta), md)
        }
        Functional::GN => (2.0 * params.y_coefficient(model.beta, model.ball_radius), usize::MAX),
        Functional::H => (0.0, 0),
    };
    for i in 0..dim {
        let n = coordinate_mode(i, m);
        h[(i, i)] += (n * n) as f64;
        if n.unsigned_abs() as usize <= w_cut {
            h[(i, i)] += w_coeff;
        }
    }
    Ok(h)
}

fn min_eigenvalue(mat: DMatrix<f64>) -> Result<f64> {
    if mat.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolve("non-finite Hessian entry".into()));
    }
    let eig = SymmetricEigen::try_new(mat, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenSolve("symmetric eigen-solve did not converge".into()))?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `log α` and `α` from the Holley–Stroock perturbation bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsiBound {
    pub log_alpha: f64,
    /// `exp(log_alpha)`; may underflow to 0 for large perturbations.
    pub alpha: f64,
}

/// `α >= η exp(−2 sup W)`, with `sup W_K = X M^{2δ} N` when a Hölder bound is
/// given and `sup Y_N = (1−δ)(|β| c_y)^{1/(1−δ)} N^{(2−δ)/(1−δ)}` otherwise.
/// No perturbation is needed for `β >= 0`.
pub fn lsi_lower_bound(
    beta: f64,
    p: f64,
    ball_radius: f64,
    holder_k: Option<f64>,
    params: &ConvexityParams,
    eta: f64,
) -> LsiBound {
    let sup_w = if beta >= 0.0 {
        0.0
    } else if let Some(k) = holder_k {
        let md = params.truncation(beta, p, k) as f64;
        params.holder_factor(beta, p, k) * md.powf(2.0 * params.delta) * ball_radius
    } else {
        let d = params.delta;
        (1.0 - d) * (beta.abs() * params.c_y).powf(1.0 / (1.0 - d)) * ball_radius.powf((2.0 - d) / (1.0 - d))
    };
    let log_alpha = eta.ln() - 2.0 * sup_w;
    LsiBound {
        log_alpha,
        alpha: log_alpha.exp(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub functional: Functional,
    pub weight: NormWeight,
    pub min_eigenvalue: f64,
    pub paper_bound: f64,
    pub certified: bool,
    /// Coordinates with zero norm weight that were eliminated (Schur
    /// complement) or dropped because the Hessian does not couple them.
    pub unweighted_coordinates: usize,
    pub lsi: LsiBound,
}

const CERTIFY_TOL: f64 = 1e-9;

/// Smallest `η` with `Hess >= η · diag(weight)` and the comparison with the
/// modulus the argument predicts.
pub fn certify_convexity(
    functional: Functional,
    field: &PeriodicField,
    weight: NormWeight,
    model: &Model,
    params: &ConvexityParams,
) -> Result<ConvexityReport> {
    let m = field.cutoff();
    if m > MAX_CERTIFY_CUTOFF {
        return Err(Error::InvalidParameter(format!(
            "dense certificate needs cutoff <= {MAX_CERTIFY_CUTOFF}, got {m}"
        )));
    }
    let grid = default_grid_size(m);
    let h = hessian_matrix(functional, field, model, params, grid)?;
    let dim = h.nrows();
    let w: Vec<f64> = (0..dim).map(|i| weight.weight(coordinate_mode(i, m), params.delta)).collect();
    let pos: Vec<usize> = (0..dim).filter(|&i| w[i] > 0.0).collect();
    let zero: Vec<usize> = (0..dim).filter(|&i| w[i] == 0.0).collect();
    let sub = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |a, b| h[(rows[a], cols[b])]);
    let scale = h.amax().max(1.0);

    let mut reduced = sub(&pos, &pos);
    let mut min_eig = None;
    if !zero.is_empty() {
        let hzz = sub(&zero, &zero);
        let hzp = sub(&zero, &pos);
        let decoupled = hzz.amax() <= 1e-12 * scale && hzp.amax() <= 1e-12 * scale;
        if !decoupled {
            let zz_min = min_eigenvalue(hzz.clone())?;
            if zz_min > CERTIFY_TOL * scale {
                let inv = hzz
                    .cholesky()
                    .ok_or_else(|| Error::EigenSolve("Cholesky of the unweighted block failed".into()))?;
                reduced -= hzp.transpose() * inv.solve(&hzp);
            } else {
                min_eig = Some(zz_min.min(0.0));
            }
        }
    }
    let min_eigenvalue = match min_eig {
        Some(v) => v,
        None => {
            let d: Vec<f64> = pos.iter().map(|&i| 1.0 / w[i].sqrt()).collect();
            let pre = DMatrix::from_fn(pos.len(), pos.len(), |a, b| reduced[(a, b)] * d[a] * d[b]);
            min_eigenvalue(pre)?
        }
    };
    let paper_bound = functional.paper_bound(params);
    let holder_k = (functional == Functional::HK).then_some(model.holder_k);
    let certified = min_eigenvalue >= paper_bound - CERTIFY_TOL * scale;
    // Certified: use the guaranteed modulus; otherwise whatever was observed.
    let eta = if certified { paper_bound } else { min_eigenvalue.max(0.0) };
    Ok(ConvexityReport {
        functional,
        weight,
        min_eigenvalue,
        paper_bound,
        certified,
        unweighted_coordinates: zero.len(),
        lsi: lsi_lower_bound(model.beta, model.p, model.ball_radius, holder_k, params, eta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{importance_ensemble, GibbsParams};
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn random_field(cutoff: usize, seed: u64) -> PeriodicField {
        let mut rng = stream_rng(seed, 1);
        PeriodicField::from_fn(cutoff, |_| {
            Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
        })
    }

    #[test]
    fn quadratic_potential_doubles_parseval() {
        let f = random_field(3, 1);
        let d = Direction::random(3, &mut stream_rng(2, 0));
        let q = hessian_form_v(&f, &d, 2.0, 64).unwrap();
        assert_relative_eq!(q, 2.0 * d.norm_sq(), max_relative = 1e-12);
    }

    #[test]
    fn vanishes_at_zero_field() {
        let d = Direction::random(3, &mut stream_rng(3, 0));
        assert_eq!(hessian_form_v(&PeriodicField::zero(3), &d, 4.0, 64).unwrap(), 0.0);
    }

    #[test]
    fn matches_finite_differences() {
        for (seed, p) in [(1u64, 4.0), (2, 3.0), (3, 5.0), (4, 2.5)] {
            let mut f = random_field(3, seed);
            // Keep |φ| away from zero for non-integer p.
            f = f.add(&PeriodicField::from_modes(3, &[(0, 2.0, 0.0)]).unwrap());
            let d = Direction::random(3, &mut stream_rng(seed, 9));
            let q = hessian_form_v(&f, &d, p, 256).unwrap();
            let fd = hessian_fd_oracle(&f, &d, p, 1e-4, 256).unwrap();
            assert!((q - fd).abs() / q.abs() < 1e-5, "p={p}: {q} vs {fd}");
        }
    }

    #[test]
    fn fd_error_is_second_order() {
        let f = random_field(2, 5).add(&PeriodicField::from_modes(2, &[(1, 1.5, 0.0)]).unwrap());
        let d = Direction::random(2, &mut stream_rng(5, 1));
        let q = hessian_form_v(&f, &d, 4.0, 128).unwrap();
        let e1 = (hessian_fd_oracle(&f, &d, 4.0, 0.04, 128).unwrap() - q).abs();
        let e2 = (hessian_fd_oracle(&f, &d, 4.0, 0.02, 128).unwrap() - q).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn singular_points_are_guarded() {
        // φ = e^{ix} − 1 vanishes at x = 0, a grid node.
        let f = PeriodicField::from_modes(2, &[(0, -1.0, 0.0), (1, 1.0, 0.0)]).unwrap();
        let d = Direction::random(2, &mut stream_rng(6, 0));
        for p in [2.0, 3.0, 4.0] {
            let q = hessian_form_v(&f, &d, p, 128).unwrap();
            assert!(q.is_finite() && q >= 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn form_is_quadratic_and_nonnegative(seed in 0u64..10_000, p in 2.0f64..6.0, c in -3.0f64..3.0) {
            let f = random_field(3, seed);
            let d = Direction::random(3, &mut stream_rng(seed, 7));
            let q = hessian_form_v(&f, &d, p, 64).unwrap();
            let qc = hessian_form_v(&f, &d.scale(c), p, 64).unwrap();
            prop_assert!(q >= 0.0);
            prop_assert!((qc - c * c * q).abs() <= 1e-10 * (1.0 + qc.abs()));
        }
    }

    fn params() -> ConvexityParams {
        ConvexityParams::defaults(4.0, 8).unwrap()
    }

    #[test]
    fn constants_are_consistent() {
        let c = params();
        assert_eq!(c.c_gamma, 1.0);
        assert_eq!(c.kappa, 24.0);
        assert_relative_eq!(c.kappa_p, 24.0 * c.c_delta * c.c_delta);
        // The kernel field attains the sup-norm bound exactly.
        let f = PeriodicField::from_fn(8, |n| {
            Complex64::new(if n == 0 { 1.0 } else { (n.unsigned_abs() as f64).powf(-1.5) }, 0.0)
        });
        let sup = f.value_at(0.0).norm();
        assert_relative_eq!(sup / f.sobolev_norm_sq(0.75).sqrt(), c.c_delta, max_relative = 1e-12);
        assert!(estimate_lq_embedding(4.0, 0.3, 8, 1).unwrap() > 1.0);
    }

    #[test]
    fn truncation_collapses_without_coupling() {
        let c = params();
        assert_eq!(c.holder_factor(0.0, 4.0, 5.0), 1.0);
        assert_eq!(c.truncation(0.0, 4.0, 5.0), 1);
        let f = random_field(4, 3);
        let low: f64 = (-1..=1).map(|n| f.coeff(n).norm_sqr()).sum();
        assert_relative_eq!(w_k_perturbation(&f, 0.0, 4.0, 5.0, &c), low, max_relative = 1e-14);
        assert_eq!(w_k_perturbation(&PeriodicField::zero(4), -1.0, 4.0, 5.0, &c), 0.0);
        let x = c.holder_factor(-1.0, 4.0, 2.0);
        let m = c.truncation(-1.0, 4.0, 2.0) as f64;
        assert!(m >= x.powf(2.0) && m - 1.0 < x.powf(2.0));
    }

    #[test]
    fn w_k_respects_its_ball_bound() {
        let c = params();
        let gp = GibbsParams::nls(4.0, -1.0, 1.0, 8);
        let ens = importance_ensemble(30, &gp, 4).unwrap();
        let x = c.holder_factor(-1.0, 4.0, 3.0);
        let m = c.truncation(-1.0, 4.0, 3.0) as f64;
        for s in &ens.samples {
            assert!(w_k_perturbation(s, -1.0, 4.0, 3.0, &c) <= x * m.powf(1.5) * 1.0 + 1e-9);
        }
    }

    #[test]
    fn y_n_examples() {
        let c = params();
        let f = random_field(3, 8);
        assert_eq!(y_n_perturbation(&PeriodicField::zero(3), -1.0, 1.0, &c), 0.0);
        assert_eq!(y_n_perturbation(&f, 0.0, 1.0, &c), 0.0);
        let expected = 0.25 * (2.0 * c.c_y * 0.5).powi(4) * f.l2_norm_sq();
        assert_relative_eq!(y_n_perturbation(&f, -2.0, 0.5, &c), expected, max_relative = 1e-12);
    }

    #[test]
    fn perturbed_values_are_consistent() {
        let c = params();
        let f = random_field(4, 2);
        let free = Model { p: 4.0, beta: 0.0, ball_radius: 1.0, holder_k: 3.0 };
        let v = perturbed_hamiltonians(&f, &free, &c, 256).unwrap();
        assert_eq!(v.h, f.kinetic_energy());
        assert_eq!(v.g_n, f.kinetic_energy());
        let model = Model { beta: -1.0, ..free };
        let v = perturbed_hamiltonians(&f, &model, &c, 256).unwrap();
        assert_eq!(v.h_k - v.h, w_k_perturbation(&f, -1.0, 4.0, 3.0, &c));
        let z = perturbed_hamiltonians(&PeriodicField::zero(4), &model, &c, 256).unwrap();
        assert_eq!((z.h, z.h_k, z.g_n), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hessian_matches_directional_form() {
        let c = params();
        let f = random_field(3, 12);
        let model = Model { p: 3.0, beta: -1.5, ball_radius: 1.0, holder_k: 3.0 };
        let h = hessian_matrix(Functional::H, &f, &model, &c, 128).unwrap();
        let d = Direction::random(3, &mut stream_rng(12, 3));
        let x: Vec<f64> = d.xi.iter().zip(&d.eta).flat_map(|(a, b)| [*a, *b]).collect();
        let xv = nalgebra::DVector::from_vec(x);
        let quad = (xv.transpose() * &h * &xv)[(0, 0)];
        let kinetic: f64 = (-3i64..=3)
            .map(|n| (n * n) as f64 * (d.xi[(n + 3) as usize].powi(2) + d.eta[(n + 3) as usize].powi(2)))
            .sum();
        let expected = kinetic - 1.5 / 3.0 * hessian_form_v(&f, &d, 3.0, 128).unwrap();
        assert_relative_eq!(quad, expected, max_relative = 1e-10);
    }

    #[test]
    fn free_kinetic_hessian_is_certified_exactly() {
        let c = params();
        let f = random_field(5, 4);
        let model = Model { p: 4.0, beta: 0.0, ball_radius: 1.0, holder_k: 3.0 };
        let r = certify_convexity(Functional::H, &f, NormWeight::H1, &model, &c).unwrap();
        assert_eq!(r.min_eigenvalue, 1.0);
        assert!(r.certified);
        assert_eq!(r.unweighted_coordinates, 2);
        assert_eq!(r.lsi.alpha, 1.0);
        let l2 = certify_convexity(Functional::H, &f, NormWeight::L2, &model, &c).unwrap();
        assert!(!l2.certified);
    }

    #[test]
    fn quadratic_potential_defocusing_is_uniformly_convex() {
        let c = ConvexityParams::defaults(2.0, 4).unwrap();
        let f = random_field(4, 6);
        let model = Model { p: 2.0, beta: 0.7, ball_radius: 1.0, holder_k: 3.0 };
        let r = certify_convexity(Functional::H, &f, NormWeight::L2, &model, &c).unwrap();
        assert_relative_eq!(r.min_eigenvalue, 0.7, max_relative = 1e-10);
    }

    #[test]
    fn focusing_gn_is_certified_on_the_ball() {
        let c = params();
        let gp = GibbsParams::nls(4.0, -1.0, 1.0, 8);
        let ens = importance_ensemble(10, &gp, 17).unwrap();
        let model = Model { p: 4.0, beta: -1.0, ball_radius: 1.0, holder_k: 5.0 };
        for s in &ens.samples {
            let r = certify_convexity(Functional::GN, s, NormWeight::H1, &model, &c).unwrap();
            assert!(r.certified, "min eigenvalue {}", r.min_eigenvalue);
            let hk = certify_convexity(Functional::HK, s, NormWeight::HDelta, &model, &c).unwrap();
            assert!(hk.certified, "H_K min eigenvalue {}", hk.min_eigenvalue);
        }
    }

    #[test]
    fn lsi_bound_formula() {
        let c = params();
        assert_eq!(lsi_lower_bound(0.0, 4.0, 1.0, Some(3.0), &c, 0.25).alpha, 0.25);
        let small = lsi_lower_bound(-0.1, 4.0, 0.2, None, &c, 0.125);
        let big = lsi_lower_bound(-0.1, 4.0, 0.4, None, &c, 0.125);
        assert!(big.log_alpha < small.log_alpha);
        let d: f64 = 0.75;
        let sup = 0.25 * (0.1 * c.c_y).powf(4.0) * 0.2f64.powf(5.0);
        assert_relative_eq!(small.log_alpha, 0.125f64.ln() - 2.0 * sup, max_relative = 1e-13);
        assert!((d - c.delta).abs() < 1e-15);
        let x = c.holder_factor(-0.1, 4.0, 1.0);
        let m = c.truncation(-0.1, 4.0, 1.0) as f64;
        let hk = lsi_lower_bound(-0.1, 4.0, 0.2, Some(1.0), &c, 0.25);
        assert_relative_eq!(hk.log_alpha, 0.25f64.ln() - 2.0 * x * m.powf(1.5) * 0.2, max_relative = 1e-13);
    }
}
