//! σ-modification adaptive controller for the uncertain double integrator,
//! used as the comparison baseline.
//!
//! With `w = y₂ + c y₁`:
//!
//! ```text
//! u    = −ρ(y₁ + c y₂) − cρ w − ρ(θ̂₁y₁ + θ̂₂y₂)
//! θ̂₁'  = Γ y₁ w − Γσ̄ θ̂₁
//! θ̂₂'  = Γ y₂ w − Γσ̄ θ̂₂
//! ρ'   = Γ w ((1 + c² + θ̂₁) y₁ + (2c + θ̂₂) y₂) − Γσ̄ ρ
//! ```
//!
//! The certificate helpers evaluate the composite Lyapunov function
//! `V(y, θ̂, ρ) = ½y₁² + ½w² + Σ(θ̂_i − θ_i)²/(2Γ) + b(ρ − 1/b)²/(2Γ)`, which
//! needs the true `θ` and `b`. Only the analysis side reads them.

use serde::{Deserialize, Serialize};

pub use crate::analysis::c1_certificate;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaModParams<T> {
    /// Leakage coefficient σ̄ ≥ 0; zero gives the nominal controller.
    pub sigma_bar: T,
    pub gamma: T,
    /// CLF slope `c`.
    pub c: T,
}

impl<T: Scalar> SigmaModParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_bar >= T::zero()) {
            return Err(Error::config(format!(
                "sigma_bar = {} must be nonnegative",
                self.sigma_bar
            )));
        }
        if !(self.gamma > T::zero()) {
            return Err(Error::config(format!(
                "gamma = {} must be positive",
                self.gamma
            )));
        }
        if !(self.c > T::zero()) {
            return Err(Error::config(format!("c = {} must be positive", self.c)));
        }
        Ok(())
    }
}

/// Controller states `(θ̂₁, θ̂₂, ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SigmaModState<T> {
    pub theta_hat: [T; 2],
    pub rho: T,
}

impl<T: Scalar> SigmaModState<T> {
    pub fn from_slice(x: &[T]) -> Self {
        Self {
            theta_hat: [x[0], x[1]],
            rho: x[2],
        }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.theta_hat[0], self.theta_hat[1], self.rho]
    }
}

/// Time derivatives of the controller states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaModRates<T> {
    pub theta_hat: [T; 2],
    pub rho: T,
}

pub fn c1_control<T: Scalar>(params: &SigmaModParams<T>, y: &[T], st: &SigmaModState<T>) -> T {
    let c = params.c;
    let rho = st.rho;
    let w = y[1] + c * y[0];
    -rho * (y[0] + c * y[1]) - c * rho * w - rho * (st.theta_hat[0] * y[0] + st.theta_hat[1] * y[1])
}

pub fn c1_update<T: Scalar>(
    params: &SigmaModParams<T>,
    y: &[T],
    st: &SigmaModState<T>,
) -> SigmaModRates<T> {
    let c = params.c;
    let g = params.gamma;
    let leak = g * params.sigma_bar;
    let w = y[1] + c * y[0];
    let one = T::one();
    let two = T::lit(2.0);
    SigmaModRates {
        theta_hat: [
            g * y[0] * w - leak * st.theta_hat[0],
            g * y[1] * w - leak * st.theta_hat[1],
        ],
        rho: g * w * ((one + c * c + st.theta_hat[0]) * y[0] + (two * c + st.theta_hat[1]) * y[1])
            - leak * st.rho,
    }
}

/// True plant values the composite Lyapunov function is built around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueParameters<T> {
    pub theta: [T; 2],
    pub b: T,
}

/// Composite Lyapunov function of the baseline design.
pub fn c1_lyapunov<T: Scalar>(
    params: &SigmaModParams<T>,
    truth: &TrueParameters<T>,
    y: &[T],
    st: &SigmaModState<T>,
) -> T {
    let half = T::lit(0.5);
    let g = params.gamma;
    let w = y[1] + params.c * y[0];
    let e1 = st.theta_hat[0] - truth.theta[0];
    let e2 = st.theta_hat[1] - truth.theta[1];
    let er = st.rho - T::one() / truth.b;
    half * y[0] * y[0]
        + half * w * w
        + (e1 * e1 + e2 * e2) / (T::lit(2.0) * g)
        + truth.b * er * er / (T::lit(2.0) * g)
}

/// Analytic `V̇` by the chain rule, given the plant velocity `y_dot` and the
/// controller state rates.
pub fn c1_lyapunov_rate<T: Scalar>(
    params: &SigmaModParams<T>,
    truth: &TrueParameters<T>,
    y: &[T],
    y_dot: &[T],
    st: &SigmaModState<T>,
    rates: &SigmaModRates<T>,
) -> T {
    let c = params.c;
    let g = params.gamma;
    let w = y[1] + c * y[0];
    let w_dot = y_dot[1] + c * y_dot[0];
    let e1 = st.theta_hat[0] - truth.theta[0];
    let e2 = st.theta_hat[1] - truth.theta[1];
    let er = st.rho - T::one() / truth.b;
    y[0] * y_dot[0]
        + w * w_dot
        + (e1 * rates.theta_hat[0] + e2 * rates.theta_hat[1]) / g
        + truth.b * er * rates.rho / g
}

/// Right-hand side of the differential inequality the baseline guarantees:
///
/// * σ̄ > 0: `−min(c, σ̄Γ) V + d²/(2c) + (σ̄/2)(θ₁² + θ₂² + 1/b)`
/// * σ̄ = 0: `−c y₁² − (c/2) w² + d²/(2c)`
pub fn c1_bound<T: Scalar>(
    params: &SigmaModParams<T>,
    truth: &TrueParameters<T>,
    y: &[T],
    st: &SigmaModState<T>,
    d: T,
) -> T {
    let c = params.c;
    let two = T::lit(2.0);
    let dist = d * d / (two * c);
    if params.sigma_bar == T::zero() {
        let w = y[1] + c * y[0];
        -c * y[0] * y[0] - c / two * w * w + dist
    } else {
        let rate = c.min(params.sigma_bar * params.gamma);
        let v = c1_lyapunov(params, truth, y, st);
        let th = truth.theta;
        -rate * v
            + dist
            + params.sigma_bar / two * (th[0] * th[0] + th[1] * th[1] + T::one() / truth.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(sigma_bar: f64) -> SigmaModParams<f64> {
        SigmaModParams {
            sigma_bar,
            gamma: 20.0,
            c: 0.5,
        }
    }

    fn st(t1: f64, t2: f64, rho: f64) -> SigmaModState<f64> {
        SigmaModState {
            theta_hat: [t1, t2],
            rho,
        }
    }

    #[test]
    fn control_examples() {
        assert_relative_eq!(
            c1_control(&p(0.0), &[1.0, 0.0], &st(0.0, 0.0, 0.11)),
            -0.1375
        );
        assert_eq!(c1_control(&p(0.0), &[0.0, 0.0], &st(3.0, -2.0, 7.0)), 0.0);
        assert_relative_eq!(
            c1_control(&p(0.0), &[1.0, 1.0], &st(1.0, 1.0, 0.11)),
            -0.4675,
            epsilon = 1e-15
        );
    }

    #[test]
    fn update_examples() {
        let r = c1_update(&p(0.0), &[1.0, 0.0], &st(0.3, 0.0, 1.0));
        assert_eq!(r.theta_hat, [10.0, 0.0]);
        assert_relative_eq!(r.rho, 20.0 * 0.5 * (1.25 + 0.3), epsilon = 1e-14);

        let r = c1_update(&p(0.2), &[0.0, 0.0], &st(1.0, 0.0, 0.0));
        assert_relative_eq!(r.theta_hat[0], -4.0);

        let r = c1_update(&p(0.0), &[0.0, 0.0], &st(1.0, 2.0, 3.0));
        assert_eq!(r.theta_hat, [0.0, 0.0]);
        assert_eq!(r.rho, 0.0);
    }

    #[test]
    fn equilibrium_certificate() {
        let truth = TrueParameters {
            theta: [1.0, 1.0],
            b: 0.01,
        };
        let s = st(1.0, 1.0, 100.0);
        let y = [0.0, 0.0];
        let rates = c1_update(&p(0.0), &y, &s);
        let vdot = c1_lyapunov_rate(&p(0.0), &truth, &y, &[0.0, 0.0], &s, &rates);
        assert_eq!(vdot, 0.0);
        assert_eq!(c1_bound(&p(0.0), &truth, &y, &s, 0.0), 0.0);
        assert_eq!(c1_lyapunov(&p(0.0), &truth, &y, &s), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(p(0.0).validate().is_ok());
        assert!(p(-0.1).validate().is_err());
        let mut q = p(0.2);
        q.gamma = 0.0;
        assert!(q.validate().is_err());
    }

    fn closed_loop_vdot(
        sp: &SigmaModParams<f64>,
        truth: &TrueParameters<f64>,
        y: [f64; 2],
        s: &SigmaModState<f64>,
        d: f64,
    ) -> f64 {
        let u = c1_control(sp, &y, s);
        let y_dot = [
            y[1],
            truth.theta[0] * y[0] + truth.theta[1] * y[1] + truth.b * u + d,
        ];
        let rates = c1_update(sp, &y, s);
        c1_lyapunov_rate(sp, truth, &y, &y_dot, s, &rates)
    }

    proptest! {
        #[test]
        fn rho_rate_structure(
            y in prop::array::uniform2(-5.0f64..5.0),
            th in prop::array::uniform2(-5.0f64..5.0),
            rho in -5.0f64..5.0,
        ) {
            let s = st(th[0], th[1], rho);
            let r = c1_update(&p(0.0), &y, &s);
            let w = y[1] + 0.5 * y[0];
            let expect = 20.0 * w * ((1.0 + 0.25 + th[0]) * y[0] + (1.0 + th[1]) * y[1]);
            prop_assert!((r.rho - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }

        #[test]
        fn differential_inequalities_hold_pointwise(
            y in prop::array::uniform2(-3.0f64..3.0),
            th in prop::array::uniform2(-5.0f64..5.0),
            rho in -50.0f64..200.0,
            d in -3.0f64..3.0,
            truth_th in prop::array::uniform2(-2.0f64..2.0),
            b in 0.01f64..2.0,
            leak in prop::bool::ANY,
        ) {
            let sp = p(if leak { 0.2 } else { 0.0 });
            let truth = TrueParameters { theta: truth_th, b };
            let s = st(th[0], th[1], rho);
            let vdot = closed_loop_vdot(&sp, &truth, y, &s, d);
            let bound = c1_bound(&sp, &truth, &y, &s, d);
            let scale = 1.0 + vdot.abs() + bound.abs() + rho.abs() * 10.0;
            prop_assert!(vdot - bound <= 1e-12 * scale, "{} > {}", vdot, bound);
        }

        #[test]
        fn nominal_rate_identity(
            y in prop::array::uniform2(-3.0f64..3.0),
            th in prop::array::uniform2(-5.0f64..5.0),
            rho in -5.0f64..200.0,
            d in -3.0f64..3.0,
            b in 0.01f64..2.0,
        ) {
            // With σ̄ = 0 the estimation error terms cancel: V̇ = −c y₁² − c w² + w d.
            let sp = p(0.0);
            let truth = TrueParameters { theta: [1.0, 1.0], b };
            let s = st(th[0], th[1], rho);
            let vdot = closed_loop_vdot(&sp, &truth, y, &s, d);
            let w = y[1] + 0.5 * y[0];
            let expect = -0.5 * y[0] * y[0] - 0.5 * w * w + w * d;
            prop_assert!((vdot - expect).abs() <= 1e-9 * (1.0 + rho.abs()));
        }
    }
}
