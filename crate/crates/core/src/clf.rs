//! Lyapunov design data for the DADS construction and sampled verification of
//! the two structural inequalities it relies on:
//!
//! ```text
//! (A)  ∇V f ≤ −Q + σ Σ δ_i ∇V g_i + Σ s_i (∇V g_i)²
//! (B)  Σ |φ_i|² ≤ μ (Q + Λ)
//! ```
//!
//! Both are stated for all of ℝⁿ. Here they are certified on a bounded box by
//! a uniform grid plus seeded uniform-random samples; the report records the
//! worst point found.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm_sq, Scalar};
use crate::systems::{PlantModel, VectorFn};

pub type ScalarFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// Class-K∞ comparison function used as the decrease-rate lower bound.
pub type RateFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// `(V, ∇V, Q, s, δ, μ, σ, Λ, rate_lb)`.
///
/// `s` and `δ` return one value per input channel. `rate_lb` must satisfy
/// `Q(y) ≥ 2·rate_lb(V(y))`.
#[derive(Clone)]
pub struct ClfBundle<T> {
    pub name: String,
    pub v: ScalarFn<T>,
    pub grad_v: VectorFn<T>,
    pub q: ScalarFn<T>,
    pub s: VectorFn<T>,
    pub delta: VectorFn<T>,
    pub mu: ScalarFn<T>,
    pub sigma: T,
    pub lambda: T,
    pub rate_lb: RateFn<T>,
}

impl<T: fmt::Debug> fmt::Debug for ClfBundle<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClfBundle")
            .field("name", &self.name)
            .field("sigma", &self.sigma)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

/// Constant `s` of the double-integrator bundle: `((1−c²)² + 3c²) / (2c)`.
pub fn double_integrator_s<T: Scalar>(c: T) -> T {
    let one = T::one();
    let c2 = c * c;
    ((one - c2) * (one - c2) + T::lit(3.0) * c2) / (T::lit(2.0) * c)
}

/// Constant `μ` of the double-integrator bundle: `2(√(c²+4) + c) / (c√(c²+4) − c²)`.
pub fn double_integrator_mu<T: Scalar>(c: T) -> T {
    let r = (c * c + T::lit(4.0)).sqrt();
    T::lit(2.0) * (r + c) / (c * r - c * c)
}

/// Bundle for the double integrator with `V(y) = ½y₁² + ½(y₂ + c y₁)²`,
/// `Q = cV`, `σ = Λ = 0`, `δ ≡ 0` and `rate_lb(s) = cs/2`.
pub fn double_integrator_clf<T: Scalar>(c: T) -> Result<ClfBundle<T>> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::domain(format!("CLF slope c = {c} must be positive")));
    }
    let half = T::lit(0.5);
    let v = move |y: &[T]| {
        let w = y[1] + c * y[0];
        half * y[0] * y[0] + half * w * w
    };
    let s = double_integrator_s(c);
    let mu = double_integrator_mu(c);
    Ok(ClfBundle {
        name: format!("double-integrator(c={c})"),
        v: Arc::new(v),
        grad_v: Arc::new(move |y: &[T]| {
            let w = y[1] + c * y[0];
            vec![y[0] + c * w, w]
        }),
        q: Arc::new(move |y: &[T]| c * v(y)),
        s: Arc::new(move |_| vec![s]),
        delta: Arc::new(|_| vec![T::zero()]),
        mu: Arc::new(move |_| mu),
        sigma: T::zero(),
        lambda: T::zero(),
        rate_lb: Arc::new(move |x| c * x * half),
    })
}

/// Bundle induced by a known stabilizing feedback `u_i = k_i(y)` with
/// `∇V f + Σ k_i ∇V g_i ≤ −V`: `s ≡ 0`, `σ = −1`, `δ = k`, `Q = V`,
/// `μ = Λ + Σ|φ_i|² / (V + Λ)`, `rate_lb(s) = s/2`.
///
/// The decrease inequality is not checked here; run [`check_assumption_a`].
pub fn bundle_from_stabilizer<T: Scalar>(
    v: ScalarFn<T>,
    grad_v: VectorFn<T>,
    feedback: VectorFn<T>,
    regressors: Vec<VectorFn<T>>,
    lambda: T,
) -> Result<ClfBundle<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::domain(format!(
            "Λ = {lambda} must be positive for a stabilizer-induced bundle"
        )));
    }
    let m = regressors.len();
    let v_mu = v.clone();
    Ok(ClfBundle {
        name: "from-stabilizer".into(),
        q: v.clone(),
        v,
        grad_v,
        s: Arc::new(move |_| vec![T::zero(); m]),
        delta: feedback,
        mu: Arc::new(move |y| {
            let phi_sq = regressors
                .iter()
                .fold(T::zero(), |acc, phi| acc + norm_sq(&phi(y)));
            lambda + phi_sq / (v_mu(y) + lambda)
        }),
        sigma: -T::one(),
        lambda,
        rate_lb: Arc::new(|x| x * T::lit(0.5)),
    })
}

/// Scenario-file handle for shipped bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClfPreset<T> {
    DoubleIntegrator { c: T },
}

impl<T: Scalar> ClfPreset<T> {
    pub fn build(&self) -> Result<ClfBundle<T>> {
        match self {
            ClfPreset::DoubleIntegrator { c } => double_integrator_clf(*c),
        }
    }

    pub fn slope(&self) -> T {
        match self {
            ClfPreset::DoubleIntegrator { c } => *c,
        }
    }
}

/// Sampling region and budget for the assumption checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling<T> {
    pub box_radius: T,
    /// Grid points per axis; `1` places a single point at the origin.
    pub grid_pts: usize,
    pub random_pts: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for Sampling<T> {
    fn default() -> Self {
        Self {
            box_radius: T::lit(5.0),
            grid_pts: 101,
            random_pts: 10_000,
            seed: 0,
        }
    }
}

/// Default pass threshold on `max_violation`.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport<T> {
    /// `max (LHS − RHS)⁺` over all samples.
    pub max_violation: T,
    pub worst_point: Vec<T>,
    pub samples_checked: usize,
    pub box_radius: T,
    pub seed: u64,
}

impl<T: Scalar> AssumptionReport<T> {
    pub fn passes(&self, tol: T) -> bool {
        self.max_violation <= tol
    }
}

impl<T: Scalar> fmt::Display for AssumptionReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max_violation = {:e} at y = {:?} ({} samples in [-{r}, {r}]^n, seed {})",
            self.max_violation.to_f64_lossy(),
            self.worst_point
                .iter()
                .map(|x| x.to_f64_lossy())
                .collect::<Vec<_>>(),
            self.samples_checked,
            self.seed,
            r = self.box_radius,
        )
    }
}

/// Visits every grid point and then the random points, in a fixed order.
fn for_each_sample<T: Scalar>(
    n: usize,
    sampling: &Sampling<T>,
    mut visit: impl FnMut(&[T]) -> Result<()>,
) -> Result<usize> {
    let r = sampling.box_radius;
    if !(r > T::zero()) {
        return Err(Error::domain(format!("box radius {r} must be positive")));
    }
    if sampling.grid_pts == 0 {
        return Err(Error::domain("grid_pts must be at least 1"));
    }
    let k = sampling.grid_pts;
    let coord = |j: usize| -> T {
        if k == 1 {
            T::zero()
        } else {
            -r + T::lit(2.0) * r * T::lit(j as f64) / T::lit((k - 1) as f64)
        }
    };

    let mut idx = vec![0usize; n];
    let mut y = vec![T::zero(); n];
    let mut count = 0;
    'grid: loop {
        for (yi, &j) in y.iter_mut().zip(&idx) {
            *yi = coord(j);
        }
        visit(&y)?;
        count += 1;
        for i in idx.iter_mut() {
            *i += 1;
            if *i < k {
                continue 'grid;
            }
            *i = 0;
        }
        break;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let r64 = r.to_f64_lossy();
    for _ in 0..sampling.random_pts {
        for yi in y.iter_mut() {
            *yi = T::lit(rng.gen_range(-r64..=r64));
        }
        visit(&y)?;
        count += 1;
    }
    Ok(count)
}

fn worst_over<T: Scalar>(
    n: usize,
    sampling: &Sampling<T>,
    mut residual: impl FnMut(&[T]) -> Result<T>,
) -> Result<AssumptionReport<T>> {
    let mut max_violation = T::zero();
    let mut worst_point = vec![T::zero(); n];
    let samples_checked = for_each_sample(n, sampling, |y| {
        let r = residual(y)?;
        if r.is_nan() {
            return Err(Error::NonFinite {
                evaluator: "assumption residual",
                at: y.iter().map(|v| v.to_f64_lossy()).collect(),
            });
        }
        if r > max_violation {
            max_violation = r;
            worst_point.copy_from_slice(y);
        }
        Ok(())
    })?;
    Ok(AssumptionReport {
        max_violation,
        worst_point,
        samples_checked,
        box_radius: sampling.box_radius,
        seed: sampling.seed,
    })
}

/// `∇V f + Q − σ Σ δ_i ∇V g_i − Σ s_i (∇V g_i)²`; nonpositive where (A) holds.
pub fn assumption_a_residual<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    y: &[T],
) -> Result<T> {
    let grad = (clf.grad_v)(y);
    let lg = plant.lie_derivatives(&grad, y)?;
    let s = (clf.s)(y);
    let delta = (clf.delta)(y);
    let mut r = dot(&grad, &plant.drift(y)?) + (clf.q)(y);
    for i in 0..plant.dims.m {
        r = r - clf.sigma * delta[i] * lg[i] - s[i] * lg[i] * lg[i];
    }
    Ok(r)
}

/// `Σ |φ_i|² − μ (Q + Λ)`; nonpositive where (B) holds.
pub fn assumption_b_residual<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    y: &[T],
) -> Result<T> {
    let mut phi_sq = T::zero();
    for i in 0..plant.dims.m {
        phi_sq = phi_sq + norm_sq(&plant.regressor(i, y)?);
    }
    Ok(phi_sq - (clf.mu)(y) * ((clf.q)(y) + clf.lambda))
}

pub fn check_assumption_a<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    sampling: &Sampling<T>,
) -> Result<AssumptionReport<T>> {
    worst_over(plant.dims.n, sampling, |y| {
        assumption_a_residual(plant, clf, y)
    })
}

pub fn check_assumption_b<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    sampling: &Sampling<T>,
) -> Result<AssumptionReport<T>> {
    worst_over(plant.dims.n, sampling, |y| {
        assumption_b_residual(plant, clf, y)
    })
}

/// Worst violation of `2·rate_lb(V(y)) ≤ Q(y)` over the samples.
pub fn check_rate_compatibility<T: Scalar>(
    n: usize,
    clf: &ClfBundle<T>,
    sampling: &Sampling<T>,
) -> Result<AssumptionReport<T>> {
    worst_over(n, sampling, |y| {
        Ok(T::lit(2.0) * (clf.rate_lb)((clf.v)(y)) - (clf.q)(y))
    })
}

/// Worst violation of the sign conditions `V, Q > 0` off the origin,
/// `V(0) = Q(0) = 0`, `μ > 0` and `s_i ≥ 0`, reported as a positive number
/// when any fails (1 for a sign failure, otherwise the magnitude).
pub fn check_bundle_signs<T: Scalar>(
    n: usize,
    clf: &ClfBundle<T>,
    sampling: &Sampling<T>,
) -> Result<AssumptionReport<T>> {
    let origin = vec![T::zero(); n];
    let at_origin = (clf.v)(&origin).abs().max((clf.q)(&origin).abs());
    let mut report = worst_over(n, sampling, |y| {
        let nonzero = y.iter().any(|x| *x != T::zero());
        let mut bad = T::zero();
        if nonzero && (!((clf.v)(y) > T::zero()) || !((clf.q)(y) > T::zero())) {
            bad = T::one();
        }
        if !((clf.mu)(y) > T::zero()) {
            bad = T::one();
        }
        for si in (clf.s)(y) {
            bad = bad.max((-si).pos());
        }
        Ok(bad)
    })?;
    if at_origin > report.max_violation {
        report.max_violation = at_origin;
        report.worst_point = origin;
    }
    Ok(report)
}
