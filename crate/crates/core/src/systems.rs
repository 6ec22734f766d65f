//! Control-affine plants with matched uncertainty and the time signals that
//! drive them.
//!
//! A plant has the form
//!
//! ```text
//! ẏ = f(y) + Σ_i g_i(y) · (b_i u_i + φ_i(y)ᵀθ + A_i(y)ᵀd)
//! ```
//!
//! with state `y ∈ ℝⁿ`, inputs `u ∈ ℝᵐ`, unknown parameters `θ ∈ ℝᵖ`,
//! disturbance `d ∈ ℝ^q` and positive input coefficients `b ∈ (0, ∞)ᵐ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, Scalar};

/// State-dependent vector field `y ↦ ℝᵏ`.
pub type VectorFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
}

/// Evaluators `f, g_i, φ_i, A_i` plus dimensions.
///
/// All evaluators must be pure; outputs are finite-checked on every call.
#[derive(Clone)]
pub struct PlantModel<T> {
    pub name: String,
    pub dims: Dims,
    drift: VectorFn<T>,
    input: Vec<VectorFn<T>>,
    regressor: Vec<VectorFn<T>>,
    disturbance: Vec<VectorFn<T>>,
}

impl<T> fmt::Debug for PlantModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

fn checked<T: Scalar>(evaluator: &'static str, y: &[T], out: Vec<T>, len: usize) -> Result<Vec<T>> {
    if out.len() != len {
        return Err(Error::Dimension {
            what: evaluator,
            expected: len,
            got: out.len(),
        });
    }
    if !all_finite(&out) {
        return Err(Error::NonFinite {
            evaluator,
            at: y.iter().map(|v| v.to_f64_lossy()).collect(),
        });
    }
    Ok(out)
}

fn expect_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

impl<T: Scalar> PlantModel<T> {
    /// Builds a plant from its evaluators. `input`, `regressor` and
    /// `disturbance` hold one evaluator per input channel.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: usize,
        p: usize,
        q: usize,
        drift: VectorFn<T>,
        input: Vec<VectorFn<T>>,
        regressor: Vec<VectorFn<T>>,
        disturbance: Vec<VectorFn<T>>,
    ) -> Result<Self> {
        let m = input.len();
        expect_len("regressor channels", m, regressor.len())?;
        expect_len("disturbance channels", m, disturbance.len())?;
        if n == 0 || m == 0 {
            return Err(Error::config("plant needs n ≥ 1 and m ≥ 1"));
        }
        let plant = Self {
            name: name.into(),
            dims: Dims { n, m, p, q },
            drift,
            input,
            regressor,
            disturbance,
        };
        // f(0) = 0 and φ_i(0) = 0 are structural requirements of the plant class.
        let origin = vec![T::zero(); n];
        if plant.drift(&origin)?.iter().any(|v| *v != T::zero()) {
            return Err(Error::config("drift must vanish at the origin: f(0) ≠ 0"));
        }
        for i in 0..m {
            if plant.regressor(i, &origin)?.iter().any(|v| *v != T::zero()) {
                return Err(Error::config(format!(
                    "regressor must vanish at the origin: φ_{}(0) ≠ 0",
                    i + 1
                )));
            }
        }
        Ok(plant)
    }

    pub fn drift(&self, y: &[T]) -> Result<Vec<T>> {
        expect_len("state", self.dims.n, y.len())?;
        checked("f", y, (self.drift)(y), self.dims.n)
    }

    pub fn input_channel(&self, i: usize, y: &[T]) -> Result<Vec<T>> {
        expect_len("state", self.dims.n, y.len())?;
        checked("g", y, (self.input[i])(y), self.dims.n)
    }

    pub fn regressor(&self, i: usize, y: &[T]) -> Result<Vec<T>> {
        expect_len("state", self.dims.n, y.len())?;
        checked("phi", y, (self.regressor[i])(y), self.dims.p)
    }

    pub fn disturbance_channel(&self, i: usize, y: &[T]) -> Result<Vec<T>> {
        expect_len("state", self.dims.n, y.len())?;
        checked("A", y, (self.disturbance[i])(y), self.dims.q)
    }

    /// `∇V(y)·g_i(y)` for every channel.
    pub fn lie_derivatives(&self, grad_v: &[T], y: &[T]) -> Result<Vec<T>> {
        (0..self.dims.m)
            .map(|i| Ok(dot(grad_v, &self.input_channel(i, y)?)))
            .collect()
    }
}

/// Right-hand side `f(y) + Σ g_i(y)(b_i u_i + φ_i(y)ᵀθ + A_i(y)ᵀd)`.
pub fn plant_rhs<T: Scalar>(
    plant: &PlantModel<T>,
    y: &[T],
    u: &[T],
    theta: &[T],
    d: &[T],
    b: &[T],
) -> Result<Vec<T>> {
    let Dims { n, m, p, q } = plant.dims;
    expect_len("state", n, y.len())?;
    expect_len("input", m, u.len())?;
    expect_len("parameter", p, theta.len())?;
    expect_len("disturbance", q, d.len())?;
    expect_len("input coefficients", m, b.len())?;
    if let Some(i) = b.iter().position(|bi| !(*bi > T::zero())) {
        return Err(Error::domain(format!(
            "input coefficient b_{} = {} must be positive",
            i + 1,
            b[i]
        )));
    }

    let mut out = plant.drift(y)?;
    for i in 0..m {
        let g = plant.input_channel(i, y)?;
        let coeff = b[i] * u[i]
            + dot(&plant.regressor(i, y)?, theta)
            + dot(&plant.disturbance_channel(i, y)?, d);
        for (o, gk) in out.iter_mut().zip(&g) {
            *o = *o + *gk * coeff;
        }
    }
    Ok(out)
}

/// The uncertain double integrator `ẏ₁ = y₂, ẏ₂ = θ₁y₁ + θ₂y₂ + bu + d`.
pub fn double_integrator_plant<T: Scalar>() -> PlantModel<T> {
    PlantModel::new(
        "double-integrator",
        2,
        2,
        1,
        Arc::new(|y: &[T]| vec![y[1], T::zero()]),
        vec![Arc::new(|_: &[T]| vec![T::zero(), T::one()])],
        vec![Arc::new(|y: &[T]| vec![y[0], y[1]])],
        vec![Arc::new(|_: &[T]| vec![T::one()])],
    )
    .expect("double integrator satisfies the plant invariants")
}

/// Plant presets addressable from scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantPreset {
    DoubleIntegrator,
}

impl PlantPreset {
    pub fn build<T: Scalar>(self) -> PlantModel<T> {
        match self {
            PlantPreset::DoubleIntegrator => double_integrator_plant(),
        }
    }
}

/// Closed-form scalar time signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    deny_unknown_fields,
    bound(deserialize = "T: Deserialize<'de> + Default")
)]
pub enum Signal<T> {
    Zero,
    Constant {
        value: T,
    },
    /// `amplitude · sin(omega · t + phase) + offset`.
    Sinusoid {
        amplitude: T,
        omega: T,
        #[serde(default)]
        phase: T,
        #[serde(default)]
        offset: T,
    },
    /// Holds `values[k]` on `[times[k], times[k+1])`; `times[0]` must be 0.
    Piecewise {
        times: Vec<T>,
        values: Vec<T>,
    },
}

impl<T: Scalar> Signal<T> {
    pub fn constant(value: T) -> Self {
        Signal::Constant { value }
    }

    pub fn sinusoid(amplitude: T, omega: T) -> Self {
        Signal::Sinusoid {
            amplitude,
            omega,
            phase: T::zero(),
            offset: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |x: T, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("signal {what} must be finite")))
            }
        };
        match self {
            Signal::Zero => Ok(()),
            Signal::Constant { value } => finite(*value, "value"),
            Signal::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => {
                finite(*amplitude, "amplitude")?;
                finite(*omega, "omega")?;
                finite(*phase, "phase")?;
                finite(*offset, "offset")
            }
            Signal::Piecewise { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::config(
                        "piecewise signal needs equally many times and values (at least one)",
                    ));
                }
                if times[0] != T::zero() {
                    return Err(Error::config("piecewise signal must start at t = 0"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::config(
                        "piecewise signal times must be strictly increasing",
                    ));
                }
                values.iter().try_for_each(|v| finite(*v, "value"))
            }
        }
    }

    /// Value at `t ≥ 0`.
    pub fn eval(&self, t: T) -> Result<T> {
        if !(t >= T::zero()) {
            return Err(Error::domain(format!("signal evaluated at t = {t} < 0")));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: T) -> T {
        match self {
            Signal::Zero => T::zero(),
            Signal::Constant { value } => *value,
            Signal::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => *amplitude * (*omega * t + *phase).sin() + *offset,
            Signal::Piecewise { times, values } => {
                let k = times.partition_point(|s| *s <= t);
                values[k.saturating_sub(1)]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Signal::Zero | Signal::Constant { .. } => true,
            Signal::Sinusoid {
                amplitude, omega, ..
            } => *amplitude == T::zero() || *omega == T::zero(),
            Signal::Piecewise { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Lower bound of the signal over `t ≥ 0`.
    pub fn infimum(&self) -> T {
        match self {
            Signal::Zero => T::zero(),
            Signal::Constant { value } => *value,
            Signal::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => {
                if *omega == T::zero() {
                    *amplitude * phase.sin() + *offset
                } else {
                    *offset - amplitude.abs()
                }
            }
            Signal::Piecewise { values, .. } => values.iter().copied().fold(T::infinity(), T::min),
        }
    }

    /// `sup_t |s(t)|`.
    pub fn sup_abs(&self) -> T {
        match self {
            Signal::Zero => T::zero(),
            Signal::Constant { value } => value.abs(),
            Signal::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => {
                if *omega == T::zero() {
                    (*amplitude * phase.sin() + *offset).abs()
                } else {
                    offset.abs() + amplitude.abs()
                }
            }
            Signal::Piecewise { values, .. } => {
                values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
            }
        }
    }

    /// `limsup_{t→∞} |s(t)|`.
    pub fn limsup_abs(&self) -> T {
        match self {
            Signal::Piecewise { values, .. } => values[values.len() - 1].abs(),
            other => other.sup_abs(),
        }
    }

    /// `liminf_{t→∞} s(t)`.
    pub fn liminf(&self) -> T {
        match self {
            Signal::Piecewise { values, .. } => values[values.len() - 1],
            other => other.infimum(),
        }
    }

    /// True when `s(t) → 0` as `t → ∞`.
    pub fn vanishes(&self) -> bool {
        self.limsup_abs() == T::zero()
    }
}

/// Evaluates one signal component at `t`.
pub fn signal_eval<T: Scalar>(signal: &Signal<T>, t: T) -> Result<T> {
    signal.eval(t)
}

/// Time-varying `d(t)`, `θ(t)`, `b(t)`, one signal per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(deserialize = "T: Deserialize<'de> + Default")
)]
pub struct DisturbanceProfile<T> {
    pub d: Vec<Signal<T>>,
    pub theta: Vec<Signal<T>>,
    pub b: Vec<Signal<T>>,
}

/// Values of the profile at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSample<T> {
    pub d: Vec<T>,
    pub theta: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> DisturbanceProfile<T> {
    /// Checks component counts against the plant and positivity of `b`.
    pub fn validate(&self, dims: &Dims) -> Result<()> {
        let count = |what: &str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "disturbance.{what} has {got} components, plant expects {expected}"
                )))
            }
        };
        count("d", dims.q, self.d.len())?;
        count("theta", dims.p, self.theta.len())?;
        count("b", dims.m, self.b.len())?;
        for s in self.d.iter().chain(&self.theta).chain(&self.b) {
            s.validate()?;
        }
        for (i, s) in self.b.iter().enumerate() {
            if !(s.infimum() > T::zero()) {
                return Err(Error::config(format!(
                    "disturbance.b[{i}] must stay positive (inf b_{} > 0)",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn sample(&self, t: T) -> ProfileSample<T> {
        let ev = |v: &[Signal<T>]| v.iter().map(|s| s.eval_unchecked(t)).collect();
        ProfileSample {
            d: ev(&self.d),
            theta: ev(&self.theta),
            b: ev(&self.b),
        }
    }

    /// `min_i inf_t b_i(t)`.
    pub fn b_lower_bound(&self) -> T {
        self.b
            .iter()
            .map(Signal::infimum)
            .fold(T::infinity(), T::min)
    }

    /// Upper bound `sqrt(Σ_k sup|d_k|²)` on `‖d‖∞`.
    pub fn d_sup(&self) -> T {
        self.d
            .iter()
            .map(|s| s.sup_abs() * s.sup_abs())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn theta_sup(&self) -> T {
        self.theta
            .iter()
            .map(|s| s.sup_abs() * s.sup_abs())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn theta_limsup(&self) -> T {
        self.theta
            .iter()
            .map(|s| s.limsup_abs() * s.limsup_abs())
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    /// `min_i liminf_t b_i(t)`.
    pub fn b_liminf(&self) -> T {
        self.b
            .iter()
            .map(Signal::liminf)
            .fold(T::infinity(), T::min)
    }

    pub fn parameters_constant(&self) -> bool {
        self.theta.iter().chain(&self.b).all(Signal::is_constant)
    }
}
