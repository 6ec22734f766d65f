//! Post-hoc checks on recorded trajectories: pointwise Lyapunov certificates,
//! tail statistics, deadzone exactness, gain drift and the regulation
//! dichotomy for vanishing disturbances.

use std::fmt;

use crate::baseline::{
    c1_bound, c1_lyapunov_rate, c1_update, SigmaModParams, SigmaModState, TrueParameters,
};
use crate::clf::ClfBundle;
use crate::dads::DadsParams;
use crate::error::{Error, Result};
use crate::scalar::{dot, norm, norm_sq, Scalar};
use crate::sim::{ControllerKind, Trajectory};
use crate::systems::{plant_rhs, DisturbanceProfile, PlantModel};

/// Default `|y(T)|` tolerance for the exact-regulation branch.
pub const REGULATION_TOL: f64 = 1e-3;
pub const CERTIFICATE_TOL: f64 = 1e-6;

/// Worst excess of the analytic `V̇` over a pointwise bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport<T> {
    /// `max_k (V̇_k − bound_k)⁺`.
    pub max_violation: T,
    /// Time of the largest excess (0 when nothing exceeds).
    pub violation_time: T,
    pub samples_checked: usize,
    pub bound_descriptor: String,
    /// Samples where the bound is negative yet `V̇ ≥ 0`.
    pub sandwich_failures: usize,
}

impl<T: Scalar> CertificateReport<T> {
    pub fn passes(&self, tol: T) -> bool {
        self.max_violation <= tol
    }
}

impl<T: Scalar> fmt::Display for CertificateReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: max_violation={:?} at t={:?} over {} samples, sandwich_failures={}",
            self.bound_descriptor,
            self.max_violation.to_f64_lossy(),
            self.violation_time.to_f64_lossy(),
            self.samples_checked,
            self.sandwich_failures
        )
    }
}

struct Worst<T> {
    violation: T,
    time: T,
    sandwich: usize,
}

impl<T: Scalar> Worst<T> {
    fn new() -> Self {
        Self {
            violation: T::zero(),
            time: T::zero(),
            sandwich: 0,
        }
    }

    fn record(&mut self, t: T, v_dot: T, bound: T) -> Result<()> {
        if !v_dot.is_finite() || !bound.is_finite() {
            return Err(Error::NonFinite {
                evaluator: "certificate",
                at: vec![t.to_f64_lossy()],
            });
        }
        let excess = (v_dot - bound).pos();
        if excess > self.violation {
            self.violation = excess;
            self.time = t;
        }
        if bound < T::zero() && v_dot >= T::zero() {
            self.sandwich += 1;
        }
        Ok(())
    }

    fn finish(self, samples: usize, descriptor: String) -> CertificateReport<T> {
        CertificateReport {
            max_violation: self.violation,
            violation_time: self.time,
            samples_checked: samples,
            bound_descriptor: descriptor,
            sandwich_failures: self.sandwich,
        }
    }
}

/// Checks along a DADS trajectory
///
/// ```text
/// V̇ ≤ −rate_lb(V) + [m|d|² + mσ² + m((|θ|−ρ)⁺)² + 2CκΛ + 2mB((1/B−ρ)⁺)²] / (4Cρ)
/// ```
///
/// with `V̇ = ∇V(y)·ẏ` computed from the recorded input and exogenous
/// signals, and `B` a positive lower bound on every `b_i`.
pub fn dads_certificate<T: Scalar>(
    traj: &Trajectory<T>,
    plant: &PlantModel<T>,
    clf: &ClfBundle<T>,
    params: &DadsParams<T>,
    b_lower: T,
) -> Result<CertificateReport<T>> {
    if !(b_lower > T::zero()) {
        return Err(Error::domain(format!(
            "input-coefficient lower bound B = {b_lower} must be positive"
        )));
    }
    if !matches!(traj.controller, ControllerKind::Dads { .. }) {
        return Err(Error::config("dads_certificate needs a DADS trajectory"));
    }
    if traj.dims != plant.dims {
        return Err(Error::config("trajectory and plant dimensions differ"));
    }
    let m = T::lit(plant.dims.m as f64);
    let two = T::lit(2.0);
    let c = params.damping;
    let fixed = m * clf.sigma * clf.sigma + two * c * params.kappa * clf.lambda;
    let mut worst = Worst::new();
    for k in 0..traj.len() {
        let y = traj.y(k);
        let rho = traj.rho(k).expect("DADS trajectory records ρ");
        let y_dot = plant_rhs(plant, y, traj.u(k), traj.theta(k), traj.d(k), traj.b(k))?;
        let v_dot = dot(&(clf.grad_v)(y), &y_dot);
        let theta_gap = (norm(traj.theta(k)) - rho).pos();
        let b_gap = (T::one() / b_lower - rho).pos();
        let numer = m * norm_sq(traj.d(k))
            + fixed
            + m * theta_gap * theta_gap
            + two * m * b_lower * b_gap * b_gap;
        let bound = -(clf.rate_lb)(traj.v[k]) + numer / (T::lit(4.0) * c * rho);
        worst.record(traj.times[k], v_dot, bound)?;
    }
    Ok(worst.finish(
        traj.len(),
        format!(
            "dads certificate ({} gain, B={})",
            params.variant.as_str(),
            b_lower
        ),
    ))
}

/// Checks the differential inequality of the σ-modification baseline along a
/// trajectory, using the composite Lyapunov function built on the true
/// (constant) `θ` and `b`.
pub fn c1_certificate<T: Scalar>(
    traj: &Trajectory<T>,
    profile: &DisturbanceProfile<T>,
    params: &SigmaModParams<T>,
) -> Result<CertificateReport<T>> {
    if traj.controller != ControllerKind::SigmaMod {
        return Err(Error::config("c1_certificate needs a sigma-mod trajectory"));
    }
    if !profile.parameters_constant() {
        return Err(Error::config(
            "c1_certificate needs constant θ and b; no inequality is claimed otherwise",
        ));
    }
    if profile.theta.len() != 2 || profile.b.len() != 1 || profile.d.len() != 1 {
        return Err(Error::config(
            "c1_certificate is defined for the double integrator",
        ));
    }
    let truth = TrueParameters {
        theta: [profile.theta[0].infimum(), profile.theta[1].infimum()],
        b: profile.b[0].infimum(),
    };
    let mut worst = Worst::new();
    for k in 0..traj.len() {
        let y = traj.y(k);
        let st = SigmaModState::from_slice(traj.controller_state(k));
        let d = traj.d(k)[0];
        let b = traj.b(k)[0];
        let theta = traj.theta(k);
        let u = traj.u(k)[0];
        let y_dot = [y[1], b * u + theta[0] * y[0] + theta[1] * y[1] + d];
        let rates = c1_update(params, y, &st);
        let v_dot = c1_lyapunov_rate(params, &truth, y, &y_dot, &st, &rates);
        let bound = c1_bound(params, &truth, y, &st, d);
        worst.record(traj.times[k], v_dot, bound)?;
    }
    let kind = if params.sigma_bar == T::zero() {
        "nominal"
    } else {
        "leakage"
    };
    Ok(worst.finish(traj.len(), format!("sigma-mod certificate ({kind})")))
}

/// First sample index of the final `fraction` of the horizon.
fn tail_start<T: Scalar>(traj: &Trajectory<T>, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!(
            "tail fraction {fraction} must lie in (0, 1)"
        )));
    }
    let last = traj.len() - 1;
    Ok(((1.0 - fraction) * last as f64).ceil() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailStats<T> {
    pub max_v: T,
    pub max_norm_y: T,
    pub mean_v: T,
    pub samples: usize,
}

/// Statistics over the final `fraction` of the horizon.
pub fn tail_stats<T: Scalar>(traj: &Trajectory<T>, fraction: f64) -> Result<TailStats<T>> {
    let start = tail_start(traj, fraction)?;
    let window = start..traj.len();
    let samples = window.len();
    let mut max_v = T::zero();
    let mut max_norm_y = T::zero();
    let mut sum = T::zero();
    for k in window {
        max_v = max_v.max(traj.v[k]);
        max_norm_y = max_norm_y.max(norm(traj.y(k)));
        sum = sum + traj.v[k];
    }
    Ok(TailStats {
        max_v,
        max_norm_y,
        mean_v: sum / T::lit(samples as f64),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadzoneReport<T> {
    /// Share of samples with `V > ε`.
    pub activity_fraction: f64,
    /// Largest `|ρ̇|` recorded where `V ≤ ε`; zero by construction.
    pub max_rate_in_deadzone: T,
}

/// Deadzone statistics over the samples with `t/T ∈ [from, to]`.
pub fn deadzone_window<T: Scalar>(
    traj: &Trajectory<T>,
    epsilon: T,
    from: f64,
    to: f64,
) -> Result<DeadzoneReport<T>> {
    if !(0.0..=1.0).contains(&from) || !(from..=1.0).contains(&to) {
        return Err(Error::domain(format!(
            "window [{from}, {to}] must lie in [0, 1]"
        )));
    }
    let last = (traj.len() - 1) as f64;
    let lo = (from * last).ceil() as usize;
    let hi = (to * last).floor() as usize;
    let mut active = 0usize;
    let mut max_rate = T::zero();
    for k in lo..=hi {
        if traj.v[k] > epsilon {
            active += 1;
        } else {
            max_rate = max_rate.max(traj.rho_dot[k].abs());
        }
    }
    Ok(DeadzoneReport {
        activity_fraction: active as f64 / (hi - lo + 1) as f64,
        max_rate_in_deadzone: max_rate,
    })
}

pub fn deadzone_check<T: Scalar>(traj: &Trajectory<T>, epsilon: T) -> DeadzoneReport<T> {
    deadzone_window(traj, epsilon, 0.0, 1.0).expect("full window is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMetric<T> {
    pub rho_end: T,
    /// `ρ(T) − ρ(split·T)`.
    pub late_increment: T,
}

impl<T: Scalar> DriftMetric<T> {
    pub fn relative_increment(&self) -> T {
        self.late_increment / self.rho_end.abs()
    }
}

pub fn drift_metric<T: Scalar>(traj: &Trajectory<T>, split: f64) -> Result<DriftMetric<T>> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::domain(format!("split {split} must lie in (0, 1)")));
    }
    let last = traj.len() - 1;
    let rho = |k| {
        traj.rho(k)
            .ok_or_else(|| Error::config("drift_metric needs an adaptive controller"))
    };
    let rho_end = rho(last)?;
    let mid = (split * last as f64).round() as usize;
    Ok(DriftMetric {
        rho_end,
        late_increment: rho_end - rho(mid)?,
    })
}

/// Outcome of the exact-regulation dichotomy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulationVerdict<T> {
    pub final_norm: T,
    /// `|y(T)| ≤ tol`.
    pub regulated: bool,
    /// `M = max(limsup|θ|, 1/liminf b)`.
    pub level: T,
    /// `M > κ` and `ρ(t) < M` at every sample.
    pub gain_below_level: bool,
}

impl<T> RegulationVerdict<T> {
    pub fn holds(&self) -> bool {
        self.regulated || self.gain_below_level
    }
}

/// Either the state is regulated or the gain never reached `M`. Requires a
/// DADS trajectory, `σ = Λ = 0` and a vanishing disturbance.
pub fn regulation_dichotomy<T: Scalar>(
    traj: &Trajectory<T>,
    clf: &ClfBundle<T>,
    profile: &DisturbanceProfile<T>,
    tol: T,
) -> Result<RegulationVerdict<T>> {
    let kappa = match traj.controller {
        ControllerKind::Dads { kappa } => kappa,
        _ => {
            return Err(Error::config(
                "regulation dichotomy needs a DADS trajectory",
            ))
        }
    };
    if clf.sigma != T::zero() || clf.lambda != T::zero() {
        return Err(Error::config("regulation dichotomy needs σ = Λ = 0"));
    }
    if !profile.d.iter().all(|s| s.vanishes()) {
        return Err(Error::config(
            "regulation dichotomy needs a vanishing disturbance",
        ));
    }
    let b_tail = profile.b_liminf();
    if !(b_tail > T::zero()) {
        return Err(Error::config("liminf b must be positive"));
    }
    let level = profile.theta_limsup().max(T::one() / b_tail);
    let last = traj.len() - 1;
    let final_norm = norm(traj.y(last));
    let gain_below_level =
        level > kappa && (0..traj.len()).all(|k| traj.rho(k).expect("DADS trajectory") < level);
    Ok(RegulationVerdict {
        final_norm,
        regulated: final_norm <= tol,
        level,
        gain_below_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clf::double_integrator_clf;
    use crate::dads::GainVariant;
    use crate::sim::{simulate, ClosedLoop, ControllerConfig, StepSettings};
    use crate::systems::{double_integrator_plant, Signal};
    use proptest::prelude::*;

    fn dads() -> DadsParams<f64> {
        DadsParams {
            epsilon: 0.005,
            gamma: 20.0,
            damping: 1.0,
            kappa: 0.1,
            variant: GainVariant::Simplified,
        }
    }

    fn profile(d: Signal<f64>, theta: f64, b: f64) -> DisturbanceProfile<f64> {
        DisturbanceProfile {
            d: vec![d],
            theta: vec![Signal::constant(theta); 2],
            b: vec![Signal::constant(b)],
        }
    }

    fn run(
        controller: ControllerConfig<f64>,
        prof: DisturbanceProfile<f64>,
        x0: &[f64],
        horizon: f64,
        dt: f64,
    ) -> Trajectory<f64> {
        let cl = ClosedLoop {
            plant: double_integrator_plant(),
            clf: double_integrator_clf(0.5).unwrap(),
            controller,
            profile: prof,
        };
        simulate(
            &cl,
            x0,
            &StepSettings {
                horizon,
                dt,
                blowup_threshold: 1e8,
            },
        )
        .unwrap()
    }

    #[test]
    fn resting_trajectory() {
        let tr = run(
            ControllerConfig::Dads(dads()),
            profile(Signal::Zero, 1.0, 0.01),
            &[0.0, 0.0, 0.11],
            1.0,
            0.01,
        );
        assert_eq!(
            tail_stats(&tr, 0.25).unwrap(),
            TailStats {
                max_v: 0.0,
                max_norm_y: 0.0,
                mean_v: 0.0,
                samples: 26
            }
        );
        let dz = deadzone_check(&tr, 0.005);
        assert_eq!(dz.activity_fraction, 0.0);
        assert_eq!(dz.max_rate_in_deadzone, 0.0);
        assert_eq!(drift_metric(&tr, 0.5).unwrap().late_increment, 0.0);
        let plant = double_integrator_plant();
        let clf = double_integrator_clf(0.5).unwrap();
        let rep = dads_certificate(&tr, &plant, &clf, &dads(), 0.01).unwrap();
        assert_eq!(rep.max_violation, 0.0);
        assert_eq!(rep.samples_checked, 101);
        let verdict =
            regulation_dichotomy(&tr, &clf, &profile(Signal::Zero, 1.0, 0.01), 1e-3).unwrap();
        assert!(verdict.regulated);
        assert_eq!(verdict.level, 100.0);
    }

    #[test]
    fn argument_errors() {
        let tr = run(
            ControllerConfig::Dads(dads()),
            profile(Signal::Zero, 1.0, 0.01),
            &[1.0, 0.0, 0.11],
            0.1,
            0.01,
        );
        let plant = double_integrator_plant();
        let clf = double_integrator_clf(0.5).unwrap();
        assert!(matches!(
            dads_certificate(&tr, &plant, &clf, &dads(), 0.0),
            Err(Error::Domain(_))
        ));
        assert!(tail_stats(&tr, 1.0).is_err());
        assert!(drift_metric(&tr, 0.0).is_err());
        let sin = profile(Signal::sinusoid(2.0, 1.0), 1.0, 0.01);
        assert!(matches!(
            regulation_dichotomy(&tr, &clf, &sin, 1e-3),
            Err(Error::Config(_))
        ));
        let sm = SigmaModParams {
            sigma_bar: 0.0,
            gamma: 20.0,
            c: 0.5,
        };
        assert!(c1_certificate(&tr, &sin, &sm).is_err());
    }

    #[test]
    fn c1_rejects_time_varying_parameters() {
        let sm = SigmaModParams {
            sigma_bar: 0.0,
            gamma: 20.0,
            c: 0.5,
        };
        let prof = profile(Signal::Zero, 1.0, 0.01);
        let tr = run(
            ControllerConfig::SigmaMod(sm),
            prof.clone(),
            &[1.0, 0.0, 0.0, 0.0, 0.11],
            0.1,
            0.01,
        );
        let mut varying = prof;
        varying.theta[0] = Signal::sinusoid(1.0, 1.0);
        assert!(matches!(
            c1_certificate(&tr, &varying, &sm),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn short_runs_satisfy_certificates() {
        let plant = double_integrator_plant();
        let clf = double_integrator_clf(0.5).unwrap();
        let sin = profile(Signal::sinusoid(2.0, 1.0), 1.0, 0.01);
        let tr = run(
            ControllerConfig::Dads(dads()),
            sin.clone(),
            &[1.0, 0.0, 0.11],
            5.0,
            1e-3,
        );
        let rep = dads_certificate(&tr, &plant, &clf, &dads(), 0.01).unwrap();
        assert!(rep.passes(1e-9), "{rep}");
        assert_eq!(rep.sandwich_failures, 0);

        for sigma_bar in [0.0, 0.2] {
            let sm = SigmaModParams {
                sigma_bar,
                gamma: 20.0,
                c: 0.5,
            };
            let tr = run(
                ControllerConfig::SigmaMod(sm),
                sin.clone(),
                &[1.0, 0.0, 0.0, 0.0, 0.11],
                5.0,
                1e-3,
            );
            let rep = c1_certificate(&tr, &sin, &sm).unwrap();
            assert!(rep.passes(1e-9), "{rep}");
        }
    }

    #[test]
    fn overstated_input_bound_is_detected() {
        let plant = double_integrator_plant();
        let clf = double_integrator_clf(0.5).unwrap();
        let prof = profile(Signal::sinusoid(2.0, 1.0), 1.0, 0.01);
        let tr = run(
            ControllerConfig::Dads(dads()),
            prof,
            &[1.0, 0.0, 0.11],
            2.0,
            1e-4,
        );
        assert!(dads_certificate(&tr, &plant, &clf, &dads(), 0.01)
            .unwrap()
            .passes(1e-9));
        let wrong = dads_certificate(&tr, &plant, &clf, &dads(), 1.0).unwrap();
        assert!(wrong.max_violation > 1e-3, "{wrong}");
    }

    #[test]
    fn deadzone_windows() {
        let tr = run(
            ControllerConfig::Dads(dads()),
            profile(Signal::Zero, 1.0, 0.01),
            &[1.0, 0.0, 0.11],
            20.0,
            1e-3,
        );
        let early = deadzone_window(&tr, 0.005, 0.0, 0.25).unwrap();
        let late = deadzone_window(&tr, 0.005, 0.75, 1.0).unwrap();
        assert!(early.activity_fraction > late.activity_fraction);
        assert_eq!(deadzone_check(&tr, 0.005).max_rate_in_deadzone, 0.0);
        assert!(deadzone_window(&tr, 0.005, 0.5, 0.4).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn certificate_and_monotone_z_on_random_runs(
            y1 in -2.0f64..2.0,
            y2 in -2.0f64..2.0,
            rho0 in 0.11f64..3.0,
            theta in -2.0f64..2.0,
            b in 0.05f64..2.0,
            amp in 0.0f64..3.0,
            full in any::<bool>(),
        ) {
            let mut p = dads();
            if full {
                p.variant = GainVariant::Full;
                p.kappa = 0.5;
            }
            let rho0 = rho0.max(p.kappa + 0.01);
            // High gains make the loop stiff; halve the explicit step until it is stable.
            let plant = double_integrator_plant();
            let clf = double_integrator_clf(0.5).unwrap();
            let prof = profile(Signal::sinusoid(amp, 1.3), theta, b);
            let cl = ClosedLoop {
                plant: plant.clone(),
                clf: clf.clone(),
                controller: ControllerConfig::Dads(p),
                profile: prof,
            };
            let horizon = if full { 0.05 } else { 0.5 };
            let mut dt = 1e-3;
            let tr = loop {
                let settings = StepSettings { horizon, dt, blowup_threshold: 1e8 };
                match simulate(&cl, &[y1, y2, rho0], &settings) {
                    Ok(tr) => break tr,
                    Err(_) if dt > 1e-7 => dt /= 4.0,
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            };
            let rep = dads_certificate(&tr, &plant, &clf, &p, b).unwrap();
            prop_assert!(rep.max_violation <= 1e-8, "{}", rep);
            prop_assert_eq!(rep.sandwich_failures, 0);
            for k in 1..tr.len() {
                prop_assert!(tr.z(k).unwrap() >= tr.z(k - 1).unwrap());
            }
        }
    }
}
