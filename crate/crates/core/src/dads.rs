//! Deadzone-adapted disturbance suppression controller.
//!
//! ```text
//! u_i = −r_i(y, ρ) ∇V(y) g_i(y)
//! ρ̇   = Γ (V(y) − ε)⁺,            ρ = κ + exp(z)
//! ```
//!
//! The adapted gain is integrated directly in `ρ`; `z = ln(ρ − κ)` is derived
//! on demand. Three mutually exclusive gain formulas are provided; each
//! checks its own preconditions.

use serde::{Deserialize, Serialize};

use crate::clf::ClfBundle;
use crate::error::{Error, Result};
use crate::scalar::{norm_sq, Scalar};
use crate::systems::PlantModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainVariant {
    /// General formula; needs `2Cκ ≥ 1`.
    Full,
    /// Needs `σ = Λ = 0`.
    Simplified,
    /// Needs `σ = Λ = 0` and `φ_i ≡ 0`.
    Matched,
}

impl GainVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            GainVariant::Full => "full",
            GainVariant::Simplified => "simplified",
            GainVariant::Matched => "matched",
        }
    }
}

/// Controller constants `(ε, Γ, C, κ)` and gain formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DadsParams<T> {
    pub epsilon: T,
    pub gamma: T,
    pub damping: T,
    pub kappa: T,
    pub variant: GainVariant,
}

impl<T: Scalar> DadsParams<T> {
    /// Checks positivity of the constants and, for the full variant, `2Cκ ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("gamma", self.gamma),
            ("damping", self.damping),
            ("kappa", self.kappa),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::config(format!("{name} = {v} must be positive")));
            }
        }
        if self.variant == GainVariant::Full {
            check_full_condition(self)?;
        }
        Ok(())
    }

    /// Variant preconditions that depend on the bundle (and, for the matched
    /// variant, on the plant's regressor at the given probe points).
    pub fn validate_against(
        &self,
        plant: &PlantModel<T>,
        clf: &ClfBundle<T>,
        probes: &[Vec<T>],
    ) -> Result<()> {
        self.validate()?;
        match self.variant {
            GainVariant::Full => Ok(()),
            GainVariant::Simplified => check_sigma_lambda_zero(clf),
            GainVariant::Matched => {
                check_sigma_lambda_zero(clf)?;
                for y in probes {
                    check_regressor_zero(plant, y)?;
                }
                Ok(())
            }
        }
    }
}

fn check_full_condition<T: Scalar>(params: &DadsParams<T>) -> Result<()> {
    let two_ck = T::lit(2.0) * params.damping * params.kappa;
    if two_ck < T::one() {
        return Err(Error::config(format!(
            "full gain requires 2Cκ ≥ 1, got 2·{}·{} = {}",
            params.damping, params.kappa, two_ck
        )));
    }
    Ok(())
}

fn check_sigma_lambda_zero<T: Scalar>(clf: &ClfBundle<T>) -> Result<()> {
    if clf.sigma != T::zero() || clf.lambda != T::zero() {
        return Err(Error::config(format!(
            "simplified/matched gains require σ = Λ = 0, bundle has σ = {}, Λ = {}",
            clf.sigma, clf.lambda
        )));
    }
    Ok(())
}

fn check_regressor_zero<T: Scalar>(plant: &PlantModel<T>, y: &[T]) -> Result<()> {
    for i in 0..plant.dims.m {
        if plant.regressor(i, y)?.iter().any(|v| *v != T::zero()) {
            return Err(Error::config(format!(
                "matched gain requires φ_{} ≡ 0, nonzero at y = {:?}",
                i + 1,
                y.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()
            )));
        }
    }
    Ok(())
}

fn check_rho<T: Scalar>(rho: T, kappa: T) -> Result<()> {
    if !(rho > kappa) {
        return Err(Error::domain(format!(
            "adapted gain ρ = {rho} must exceed κ = {kappa}"
        )));
    }
    Ok(())
}

/// Adaptation state `ρ > κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DadsState<T> {
    pub rho: T,
}

impl<T: Scalar> DadsState<T> {
    pub fn new(rho: T, kappa: T) -> Result<Self> {
        check_rho(rho, kappa)?;
        Ok(Self { rho })
    }

    /// `z = ln(ρ − κ)`.
    pub fn z(&self, kappa: T) -> T {
        (self.rho - kappa).ln()
    }
}

/// Per-channel quantities the gain formulas need.
struct Channel<T> {
    lg: T,
    s: T,
    delta: T,
    phi_sq: T,
    a_sq: T,
}

fn channels<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    y: &[T],
) -> Result<(Vec<Channel<T>>, T)> {
    let grad = (clf.grad_v)(y);
    let lg = plant.lie_derivatives(&grad, y)?;
    let s = (clf.s)(y);
    let delta = (clf.delta)(y);
    let out = (0..plant.dims.m)
        .map(|i| {
            Ok(Channel {
                lg: lg[i],
                s: s[i],
                delta: delta[i],
                phi_sq: norm_sq(&plant.regressor(i, y)?),
                a_sq: norm_sq(&plant.disturbance_channel(i, y)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, (clf.mu)(y)))
}

/// General gain
///
/// ```text
/// r_i = C E s_i² (∇Vg_i)² + E s_i + C³ E³ P_i² (∇Vg_i)² + C E² P_i,
/// P_i = |φ_i|² + |A_i|² + E² μ + δ_i²,   E = ρ.
/// ```
pub fn gain_full<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    params: &DadsParams<T>,
    y: &[T],
    rho: T,
) -> Result<Vec<T>> {
    check_full_condition(params)?;
    check_rho(rho, params.kappa)?;
    let (ch, mu) = channels(plant, clf, y)?;
    let c = params.damping;
    let e = rho;
    Ok(ch
        .iter()
        .map(|k| {
            let lg2 = k.lg * k.lg;
            let p = k.phi_sq + k.a_sq + e * e * mu + k.delta * k.delta;
            c * e * k.s * k.s * lg2 + e * k.s + c * c * c * e * e * e * p * p * lg2 + c * e * e * p
        })
        .collect())
}

/// `r_i = E P_i (1 + C P_i (∇Vg_i)²)` with `P_i = s_i + (μ/2) E² + C E (|A_i|² + |φ_i|²)`.
pub fn gain_simplified<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    params: &DadsParams<T>,
    y: &[T],
    rho: T,
) -> Result<Vec<T>> {
    check_sigma_lambda_zero(clf)?;
    check_rho(rho, params.kappa)?;
    let (ch, mu) = channels(plant, clf, y)?;
    let c = params.damping;
    let e = rho;
    let half = T::lit(0.5);
    Ok(ch
        .iter()
        .map(|k| {
            let p = k.s + half * mu * e * e + c * e * (k.a_sq + k.phi_sq);
            e * p * (T::one() + c * p * k.lg * k.lg)
        })
        .collect())
}

/// `r_i = E P_i (1 + C P_i (∇Vg_i)²)` with `P_i = s_i + C E |A_i|²`.
pub fn gain_matched<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    params: &DadsParams<T>,
    y: &[T],
    rho: T,
) -> Result<Vec<T>> {
    check_sigma_lambda_zero(clf)?;
    check_rho(rho, params.kappa)?;
    check_regressor_zero(plant, y)?;
    let (ch, _) = channels(plant, clf, y)?;
    let c = params.damping;
    let e = rho;
    Ok(ch
        .iter()
        .map(|k| {
            let p = k.s + c * e * k.a_sq;
            e * p * (T::one() + c * p * k.lg * k.lg)
        })
        .collect())
}

/// Gains for the configured variant.
pub fn gains<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    params: &DadsParams<T>,
    y: &[T],
    rho: T,
) -> Result<Vec<T>> {
    match params.variant {
        GainVariant::Full => gain_full(plant, clf, params, y, rho),
        GainVariant::Simplified => gain_simplified(plant, clf, params, y, rho),
        GainVariant::Matched => gain_matched(plant, clf, params, y, rho),
    }
}

/// `u_i = −r_i(y, ρ) ∇V(y) g_i(y)`.
pub fn dads_control<T: Scalar>(
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    params: &DadsParams<T>,
    y: &[T],
    rho: T,
) -> Result<Vec<T>> {
    let r = gains(plant, clf, params, y, rho)?;
    let grad = (clf.grad_v)(y);
    let lg = plant.lie_derivatives(&grad, y)?;
    Ok(r.iter().zip(&lg).map(|(ri, li)| -*ri * *li).collect())
}

/// `ρ̇ = Γ (V(y) − ε)⁺`; exactly zero whenever `V(y) ≤ ε`.
pub fn adaptation_rate<T: Scalar>(clf: &ClfBundle<T>, params: &DadsParams<T>, y: &[T]) -> T {
    params.gamma * ((clf.v)(y) - params.epsilon).pos()
}

/// `ż = exp(−z) ρ̇` for reporting in `z` coordinates.
pub fn z_rate<T: Scalar>(rho_dot: T, rho: T, kappa: T) -> T {
    rho_dot / (rho - kappa)
}

/// Structural constants entering the disturbance-level function χ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiConstants<T> {
    pub m: usize,
    pub sigma: T,
    pub lambda: T,
    pub damping: T,
    pub kappa: T,
}

/// Disturbance-level function
///
/// ```text
/// χ(s₁,s₂,s₃,s₄) = [m s₁² + m σ² + m ((s₂−κ−s₄)⁺)² + 2CκΛ + 2m s₃ ((1/s₃−κ−s₄)⁺)²] / (4C(κ+s₄))
/// ```
///
/// with `s₁` the disturbance bound, `s₂` the parameter bound, `s₃` the input
/// coefficient lower bound and `s₄` the gain level `exp(z)`.
pub fn chi<T: Scalar>(s1: T, s2: T, s3: T, s4: T, k: &ChiConstants<T>) -> Result<T> {
    if !(s3 > T::zero()) {
        return Err(Error::domain(format!("χ needs s₃ > 0, got {s3}")));
    }
    if s1 < T::zero() || s2 < T::zero() || s4 < T::zero() {
        return Err(Error::domain("χ needs s₁, s₂, s₄ ≥ 0"));
    }
    let m = T::lit(k.m as f64);
    let two = T::lit(2.0);
    let level = k.kappa + s4;
    let theta_excess = (s2 - level).pos();
    let b_excess = (T::one() / s3 - level).pos();
    let num = m * s1 * s1
        + m * k.sigma * k.sigma
        + m * theta_excess * theta_excess
        + two * k.damping * k.kappa * k.lambda
        + two * m * s3 * b_excess * b_excess;
    Ok(num / (T::lit(4.0) * k.damping * level))
}
