//! Fixed-step RK4 integration of plant + controller.
//!
//! The combined state is `[y, controller state]`, where the controller state
//! is `[ρ]` for DADS, `[θ̂₁, θ̂₂, ρ]` for the σ-modification baseline and empty
//! for open loop. Disturbance signals are evaluated at the RK4 stage times.

use crate::baseline::{c1_control, c1_update, SigmaModParams, SigmaModState};
use crate::clf::{ClfBundle, ClfPreset};
use crate::dads::{adaptation_rate, dads_control, DadsParams};
use crate::error::{Error, Result};
use crate::scalar::{all_finite, Scalar};
use crate::systems::{plant_rhs, Dims, DisturbanceProfile, PlantModel, PlantPreset};

/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_HORIZON: f64 = 100.0;
pub const DEFAULT_BLOWUP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerConfig<T> {
    Dads(DadsParams<T>),
    SigmaMod(SigmaModParams<T>),
    /// `u ≡ 0`.
    OpenLoop,
}

impl<T: Scalar> ControllerConfig<T> {
    pub fn state_dim(&self) -> usize {
        match self {
            ControllerConfig::Dads(_) => 1,
            ControllerConfig::SigmaMod(_) => 3,
            ControllerConfig::OpenLoop => 0,
        }
    }

    pub fn kind(&self) -> ControllerKind<T> {
        match self {
            ControllerConfig::Dads(p) => ControllerKind::Dads { kappa: p.kappa },
            ControllerConfig::SigmaMod(_) => ControllerKind::SigmaMod,
            ControllerConfig::OpenLoop => ControllerKind::OpenLoop,
        }
    }
}

/// Which controller produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerKind<T> {
    Dads { kappa: T },
    SigmaMod,
    OpenLoop,
}

/// Plant, bundle, controller and exogenous signals: everything the
/// right-hand side needs.
#[derive(Debug, Clone)]
pub struct ClosedLoop<T> {
    pub plant: PlantModel<T>,
    pub clf: ClfBundle<T>,
    pub controller: ControllerConfig<T>,
    pub profile: DisturbanceProfile<T>,
}

impl<T: Scalar> ClosedLoop<T> {
    pub fn state_dim(&self) -> usize {
        self.plant.dims.n + self.controller.state_dim()
    }

    /// Feedback from the plant state and controller state only.
    pub fn control(&self, x: &[T]) -> Result<Vec<T>> {
        let n = self.plant.dims.n;
        let (y, ctrl) = x.split_at(n);
        match &self.controller {
            ControllerConfig::Dads(p) => dads_control(&self.plant, &self.clf, p, y, ctrl[0]),
            ControllerConfig::SigmaMod(p) => {
                Ok(vec![c1_control(p, y, &SigmaModState::from_slice(ctrl))])
            }
            ControllerConfig::OpenLoop => Ok(vec![T::zero(); self.plant.dims.m]),
        }
    }

    /// Controller-state derivative (and the adapted-gain rate for recording).
    fn controller_rates(&self, x: &[T], out: &mut Vec<T>) {
        let n = self.plant.dims.n;
        let (y, ctrl) = x.split_at(n);
        match &self.controller {
            ControllerConfig::Dads(p) => out.push(adaptation_rate(&self.clf, p, y)),
            ControllerConfig::SigmaMod(p) => {
                let r = c1_update(p, y, &SigmaModState::from_slice(ctrl));
                out.extend_from_slice(&[r.theta_hat[0], r.theta_hat[1], r.rho]);
            }
            ControllerConfig::OpenLoop => {}
        }
    }

    pub fn rhs(&self, t: T, x: &[T]) -> Result<Vec<T>> {
        let n = self.plant.dims.n;
        let u = self.control(x)?;
        let s = self.profile.sample(t);
        let mut out = plant_rhs(&self.plant, &x[..n], &u, &s.theta, &s.d, &s.b)?;
        self.controller_rates(x, &mut out);
        Ok(out)
    }

    /// Rate of the adapted gain ρ at state `x` (zero for open loop).
    pub fn rho_rate(&self, x: &[T]) -> T {
        let mut r = Vec::with_capacity(3);
        self.controller_rates(x, &mut r);
        match self.controller {
            ControllerConfig::Dads(_) => r[0],
            ControllerConfig::SigmaMod(_) => r[2],
            ControllerConfig::OpenLoop => T::zero(),
        }
    }
}

/// One classical Runge–Kutta step of `ẋ = rhs(t, x)`.
pub fn rk4_step<T, F>(rhs: &mut F, t: T, x: &[T], dt: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(T, &[T]) -> Result<Vec<T>>,
{
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    let mut eval = |tt: T, xx: &[T]| -> Result<Vec<T>> {
        let k = rhs(tt, xx)?;
        if !all_finite(&k) {
            return Err(Error::Integration {
                time: tt.to_f64_lossy(),
                reason: "non-finite right-hand side".into(),
            });
        }
        Ok(k)
    };
    let stage = |k: &[T], h: T| -> Vec<T> { x.iter().zip(k).map(|(a, b)| *a + h * *b).collect() };

    let k1 = eval(t, x)?;
    let k2 = eval(t + half * dt, &stage(&k1, half * dt))?;
    let k3 = eval(t + half * dt, &stage(&k2, half * dt))?;
    let k4 = eval(t + dt, &stage(&k3, dt))?;
    Ok((0..x.len())
        .map(|i| x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect())
}

/// Horizon, step and blow-up guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSettings<T> {
    pub horizon: T,
    pub dt: T,
    pub blowup_threshold: T,
}

impl<T: Scalar> StepSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::config(format!(
                "horizon T = {} must be positive",
                self.horizon
            )));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::config(format!(
                "step dt = {} must be positive",
                self.dt
            )));
        }
        if self.dt > self.horizon {
            return Err(Error::config(format!(
                "step dt = {} must not exceed horizon T = {}",
                self.dt, self.horizon
            )));
        }
        if !(self.blowup_threshold > T::zero()) {
            return Err(Error::config("blowup_threshold must be positive"));
        }
        Ok(())
    }

    /// `floor(T/dt)`, tolerant of the rounding in the quotient.
    pub fn steps(&self) -> usize {
        let q = (self.horizon / self.dt).to_f64_lossy();
        (q * (1.0 + 1e-12)).floor() as usize
    }

    pub fn halved(&self) -> Self {
        Self {
            dt: self.dt / T::lit(2.0),
            ..*self
        }
    }
}

/// Integrates `ẋ = rhs(t, x)` on the uniform grid, handing every sample to
/// `observe(k, t_k, x_k)`. Returns the final state.
pub fn integrate_with<T, F, O>(
    mut rhs: F,
    x0: &[T],
    settings: &StepSettings<T>,
    mut observe: O,
) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(T, &[T]) -> Result<Vec<T>>,
    O: FnMut(usize, T, &[T]) -> Result<()>,
{
    settings.validate()?;
    let steps = settings.steps();
    let mut x = x0.to_vec();
    observe(0, T::zero(), &x)?;
    for k in 0..steps {
        let t = T::lit(k as f64) * settings.dt;
        let next = rk4_step(&mut rhs, t, &x, settings.dt)?;
        if next
            .iter()
            .any(|v| !v.is_finite() || v.abs() > settings.blowup_threshold)
        {
            return Err(Error::Blowup {
                last_time: t.to_f64_lossy(),
                last_state: x.iter().map(|v| v.to_f64_lossy()).collect(),
                threshold: settings.blowup_threshold.to_f64_lossy(),
            });
        }
        x = next;
        observe(k + 1, T::lit((k + 1) as f64) * settings.dt, &x)?;
    }
    Ok(x)
}

/// Initial plant and controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState<T> {
    pub y: Vec<T>,
    /// ρ₀ (DADS) or the initial input-coefficient estimate (baseline).
    pub rho: T,
    /// θ̂(0), baseline only.
    pub theta_hat: Vec<T>,
}

/// A complete closed-loop experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub plant: PlantPreset,
    pub clf: ClfPreset<T>,
    pub controller: ControllerConfig<T>,
    pub initial: InitialState<T>,
    pub disturbance: DisturbanceProfile<T>,
    pub settings: StepSettings<T>,
    pub seed: u64,
}

impl<T: Scalar> Scenario<T> {
    pub fn closed_loop(&self) -> Result<ClosedLoop<T>> {
        let plant = self.plant.build();
        let clf = self.clf.build()?;
        Ok(ClosedLoop {
            plant,
            clf,
            controller: self.controller.clone(),
            profile: self.disturbance.clone(),
        })
    }

    pub fn initial_vector(&self) -> Vec<T> {
        let mut x = self.initial.y.clone();
        match self.controller {
            ControllerConfig::Dads(_) => x.push(self.initial.rho),
            ControllerConfig::SigmaMod(_) => {
                x.extend_from_slice(&self.initial.theta_hat);
                x.push(self.initial.rho);
            }
            ControllerConfig::OpenLoop => {}
        }
        x
    }

    /// Checks every scenario invariant, naming the offending setting.
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        let cl = self.closed_loop()?;
        let dims = cl.plant.dims;
        if self.initial.y.len() != dims.n {
            return Err(Error::config(format!(
                "initial.y has {} components, plant state has {}",
                self.initial.y.len(),
                dims.n
            )));
        }
        if !all_finite(&self.initial.y) || !self.initial.rho.is_finite() {
            return Err(Error::config("initial state must be finite"));
        }
        self.disturbance.validate(&dims)?;
        match &self.controller {
            ControllerConfig::Dads(p) => {
                p.validate_against(&cl.plant, &cl.clf, std::slice::from_ref(&self.initial.y))?;
                if !(self.initial.rho > p.kappa) {
                    return Err(Error::config(format!(
                        "initial.rho must satisfy ρ₀ > κ (ρ₀ = {}, κ = {})",
                        self.initial.rho, p.kappa
                    )));
                }
            }
            ControllerConfig::SigmaMod(p) => {
                p.validate()?;
                if dims.n != 2 || dims.p != 2 || dims.m != 1 {
                    return Err(Error::config(
                        "sigma-mod controller is defined for the double integrator only",
                    ));
                }
                if self.initial.theta_hat.len() != 2 {
                    return Err(Error::config("initial.theta_hat needs 2 components"));
                }
            }
            ControllerConfig::OpenLoop => {}
        }
        Ok(())
    }
}

/// Uniformly sampled closed-loop record, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub dims: Dims,
    pub controller: ControllerKind<T>,
    pub dt: T,
    pub times: Vec<T>,
    /// `[y, controller state]` per sample.
    pub states: Vec<T>,
    pub inputs: Vec<T>,
    pub v: Vec<T>,
    pub rho_dot: Vec<T>,
    pub d: Vec<T>,
    pub theta: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    fn with_capacity(dims: Dims, controller: ControllerKind<T>, dt: T, len: usize) -> Self {
        let width = dims.n + ctrl_width(&controller);
        Self {
            dims,
            controller,
            dt,
            times: Vec::with_capacity(len),
            states: Vec::with_capacity(len * width),
            inputs: Vec::with_capacity(len * dims.m),
            v: Vec::with_capacity(len),
            rho_dot: Vec::with_capacity(len),
            d: Vec::with_capacity(len * dims.q),
            theta: Vec::with_capacity(len * dims.p),
            b: Vec::with_capacity(len * dims.m),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_width(&self) -> usize {
        self.dims.n + ctrl_width(&self.controller)
    }

    pub fn state(&self, k: usize) -> &[T] {
        let w = self.state_width();
        &self.states[k * w..(k + 1) * w]
    }

    pub fn y(&self, k: usize) -> &[T] {
        &self.state(k)[..self.dims.n]
    }

    pub fn controller_state(&self, k: usize) -> &[T] {
        &self.state(k)[self.dims.n..]
    }

    pub fn u(&self, k: usize) -> &[T] {
        let m = self.dims.m;
        &self.inputs[k * m..(k + 1) * m]
    }

    pub fn d(&self, k: usize) -> &[T] {
        let q = self.dims.q;
        &self.d[k * q..(k + 1) * q]
    }

    pub fn theta(&self, k: usize) -> &[T] {
        let p = self.dims.p;
        &self.theta[k * p..(k + 1) * p]
    }

    pub fn b(&self, k: usize) -> &[T] {
        let m = self.dims.m;
        &self.b[k * m..(k + 1) * m]
    }

    /// Adapted gain ρ (DADS) or input-coefficient estimate (baseline).
    pub fn rho(&self, k: usize) -> Option<T> {
        let c = self.controller_state(k);
        match self.controller {
            ControllerKind::Dads { .. } => Some(c[0]),
            ControllerKind::SigmaMod => Some(c[2]),
            ControllerKind::OpenLoop => None,
        }
    }

    /// `z = ln(ρ − κ)`, DADS only.
    pub fn z(&self, k: usize) -> Option<T> {
        match self.controller {
            ControllerKind::Dads { kappa } => Some((self.controller_state(k)[0] - kappa).ln()),
            _ => None,
        }
    }

    pub fn final_time(&self) -> T {
        *self
            .times
            .last()
            .expect("trajectory has at least one sample")
    }
}

fn ctrl_width<T>(kind: &ControllerKind<T>) -> usize {
    match kind {
        ControllerKind::Dads { .. } => 1,
        ControllerKind::SigmaMod => 3,
        ControllerKind::OpenLoop => 0,
    }
}

/// Runs a closed loop from `x0` and records every sample.
pub fn simulate<T: Scalar>(
    cl: &ClosedLoop<T>,
    x0: &[T],
    settings: &StepSettings<T>,
) -> Result<Trajectory<T>> {
    if x0.len() != cl.state_dim() {
        return Err(Error::Dimension {
            what: "initial closed-loop state",
            expected: cl.state_dim(),
            got: x0.len(),
        });
    }
    settings.validate()?;
    let n = cl.plant.dims.n;
    let mut traj = Trajectory::with_capacity(
        cl.plant.dims,
        cl.controller.kind(),
        settings.dt,
        settings.steps() + 1,
    );
    integrate_with(
        |t, x| cl.rhs(t, x),
        x0,
        settings,
        |_, t, x| {
            let s = cl.profile.sample(t);
            let u = cl.control(x)?;
            traj.times.push(t);
            traj.states.extend_from_slice(x);
            traj.inputs.extend_from_slice(&u);
            traj.v.push((cl.clf.v)(&x[..n]));
            traj.rho_dot.push(cl.rho_rate(x));
            traj.d.extend_from_slice(&s.d);
            traj.theta.extend_from_slice(&s.theta);
            traj.b.extend_from_slice(&s.b);
            Ok(())
        },
    )?;
    Ok(traj)
}

/// Validates and runs a scenario.
pub fn integrate<T: Scalar>(scenario: &Scenario<T>) -> Result<Trajectory<T>> {
    scenario.validate()?;
    let cl = scenario.closed_loop()?;
    simulate(&cl, &scenario.initial_vector(), &scenario.settings)
}

/// Discrepancy norm used by the refinement check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    #[default]
    Max,
    Euclidean,
}

impl Norm {
    pub fn eval<T: Scalar>(self, v: &[T]) -> T {
        match self {
            Norm::Max => v.iter().fold(T::zero(), |a, x| a.max(x.abs())),
            Norm::Euclidean => crate::scalar::norm(v),
        }
    }
}

/// Step-halving self-convergence summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport<T> {
    pub dt: T,
    /// Max over coarse sample times of ‖x_dt − x_{dt/2}‖.
    pub discrepancy: T,
    /// Same between dt/2 and dt/4; present when the order was estimated.
    pub fine_discrepancy: Option<T>,
    /// `log₂(discrepancy / fine_discrepancy)`.
    pub observed_order: Option<T>,
}

/// Coarse-grid states of a run at step `settings.dt / 2^level`.
fn coarse_states<T, F>(
    rhs: &mut F,
    x0: &[T],
    settings: &StepSettings<T>,
    level: u32,
) -> Result<Vec<Vec<T>>>
where
    T: Scalar,
    F: FnMut(T, &[T]) -> Result<Vec<T>>,
{
    let factor = 1usize << level;
    let fine = StepSettings {
        dt: settings.dt / T::lit(factor as f64),
        ..*settings
    };
    let coarse_steps = settings.steps();
    let mut out = Vec::with_capacity(coarse_steps + 1);
    let mut step = 0usize;
    integrate_with(
        |t, x| rhs(t, x),
        x0,
        &StepSettings {
            horizon: T::lit((coarse_steps * factor) as f64) * fine.dt,
            ..fine
        },
        |k, _, x| {
            if k % factor == 0 {
                out.push(x.to_vec());
            }
            step = k;
            Ok(())
        },
    )?;
    debug_assert_eq!(step, coarse_steps * factor);
    Ok(out)
}

fn max_discrepancy<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>], norm: Norm) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff: Vec<T> = x.iter().zip(y).map(|(p, q)| *p - *q).collect();
            norm.eval(&diff)
        })
        .fold(T::zero(), T::max)
}

/// Step-halving check for an arbitrary ODE. With `estimate_order` a third
/// run at `dt/4` yields the observed order.
pub fn refine_ode<T, F>(
    mut rhs: F,
    x0: &[T],
    settings: &StepSettings<T>,
    norm: Norm,
    estimate_order: bool,
) -> Result<RefineReport<T>>
where
    T: Scalar,
    F: FnMut(T, &[T]) -> Result<Vec<T>>,
{
    let s0 = coarse_states(&mut rhs, x0, settings, 0)?;
    let s1 = coarse_states(&mut rhs, x0, settings, 1)?;
    let discrepancy = max_discrepancy(&s0, &s1, norm);
    let (fine_discrepancy, observed_order) = if estimate_order {
        let s2 = coarse_states(&mut rhs, x0, settings, 2)?;
        let fine = max_discrepancy(&s1, &s2, norm);
        let order = if fine > T::zero() && discrepancy > T::zero() {
            Some((discrepancy / fine).log2())
        } else {
            None
        };
        (Some(fine), order)
    } else {
        (None, None)
    };
    Ok(RefineReport {
        dt: settings.dt,
        discrepancy,
        fine_discrepancy,
        observed_order,
    })
}

/// Step-halving check of a scenario's closed loop.
pub fn refine_check<T: Scalar>(
    scenario: &Scenario<T>,
    norm: Norm,
    estimate_order: bool,
) -> Result<RefineReport<T>> {
    scenario.validate()?;
    let cl = scenario.closed_loop()?;
    refine_ode(
        |t, x| cl.rhs(t, x),
        &scenario.initial_vector(),
        &scenario.settings,
        norm,
        estimate_order,
    )
}
