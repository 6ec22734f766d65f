//! Trajectory CSV and plain-text run summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{
    c1_certificate, dads_certificate, deadzone_check, deadzone_window, drift_metric,
    regulation_dichotomy, tail_stats, CertificateReport, DeadzoneReport, DriftMetric,
    RegulationVerdict, TailStats, REGULATION_TOL,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{ControllerConfig, ControllerKind, Scenario, Trajectory};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const TAIL_FRACTION: f64 = 0.25;
pub const DRIFT_SPLIT: f64 = 0.5;

/// Column names of `trajectory.csv`.
pub fn csv_header<T>(traj: &Trajectory<T>) -> Vec<String> {
    let dims = traj.dims;
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=dims.n).map(|i| format!("y{i}")));
    match traj.controller {
        ControllerKind::Dads { .. } => cols.extend(["rho".into(), "z".into()]),
        ControllerKind::SigmaMod => {
            cols.extend(["thetahat1".into(), "thetahat2".into(), "rho".into()])
        }
        ControllerKind::OpenLoop => {}
    }
    cols.extend((1..=dims.m).map(|i| format!("u{i}")));
    cols.extend(["V".into(), "rho_dot".into()]);
    cols.extend((1..=dims.q).map(|i| format!("d{i}")));
    cols.extend((1..=dims.p).map(|i| format!("theta{i}")));
    cols.extend((1..=dims.m).map(|i| format!("b{i}")));
    cols
}

/// Shortest decimal that parses back to the same value.
fn num<T: Scalar>(x: T) -> String {
    format!("{x:?}")
}

/// Renders every `stride`-th sample, starting with the first.
pub fn trajectory_csv<T: Scalar>(traj: &Trajectory<T>, stride: usize) -> Result<String> {
    if stride == 0 {
        return Err(Error::config("output stride must be at least 1"));
    }
    let csv_err = |e: csv::Error| Error::Parse(format!("csv: {e}"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(csv_header(traj)).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::new();
    for k in (0..traj.len()).step_by(stride) {
        row.clear();
        row.push(num(traj.times[k]));
        row.extend(traj.y(k).iter().map(|&v| num(v)));
        match traj.controller {
            ControllerKind::Dads { .. } => {
                row.push(num(traj.rho(k).expect("DADS records ρ")));
                row.push(num(traj.z(k).expect("DADS records z")));
            }
            ControllerKind::SigmaMod => {
                row.extend(traj.controller_state(k).iter().map(|&v| num(v)))
            }
            ControllerKind::OpenLoop => {}
        }
        row.extend(traj.u(k).iter().map(|&v| num(v)));
        row.push(num(traj.v[k]));
        row.push(num(traj.rho_dot[k]));
        row.extend(traj.d(k).iter().map(|&v| num(v)));
        row.extend(traj.theta(k).iter().map(|&v| num(v)));
        row.extend(traj.b(k).iter().map(|&v| num(v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("numeric CSV is ASCII"))
}

/// Every post-hoc analysis that applies to a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<T> {
    pub label: String,
    pub metadata: Vec<(String, String)>,
    pub samples: usize,
    pub tail: TailStats<T>,
    pub drift: Option<DriftMetric<T>>,
    pub deadzone: Option<DeadzoneReport<T>>,
    /// Activity in the first and last quarter of the horizon.
    pub deadzone_windows: Option<(f64, f64)>,
    pub certificates: Vec<CertificateReport<T>>,
    pub regulation: Option<RegulationVerdict<T>>,
}

impl<T: Scalar> RunSummary<T> {
    pub fn worst_certificate(&self) -> Option<&CertificateReport<T>> {
        self.certificates.iter().max_by(|a, b| {
            a.max_violation
                .partial_cmp(&b.max_violation)
                .expect("finite")
        })
    }

    pub fn render(&self) -> String {
        let f = |x: T| num(x);
        let mut s = String::new();
        let _ = writeln!(s, "run: {}", self.label);
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "{k}: {v}");
        }
        let _ = writeln!(s, "samples: {}", self.samples);
        let _ = writeln!(
            s,
            "tail_stats (last {}%): max_V={} max_norm_y={} mean_V={}",
            TAIL_FRACTION * 100.0,
            f(self.tail.max_v),
            f(self.tail.max_norm_y),
            f(self.tail.mean_v)
        );
        if let Some(d) = &self.drift {
            let _ = writeln!(
                s,
                "drift_metric (split {DRIFT_SPLIT}): rho_end={} late_increment={} relative={}",
                f(d.rho_end),
                f(d.late_increment),
                f(d.relative_increment())
            );
        }
        if let Some(d) = &self.deadzone {
            let _ = writeln!(
                s,
                "deadzone_check: activity_fraction={:?} max_rate_in_deadzone={}",
                d.activity_fraction,
                f(d.max_rate_in_deadzone)
            );
        }
        if let Some((first, last)) = self.deadzone_windows {
            let _ = writeln!(
                s,
                "deadzone_activity: first_quarter={first:?} last_quarter={last:?}"
            );
        }
        for c in &self.certificates {
            let _ = writeln!(s, "certificate: {c}");
        }
        if let Some(r) = &self.regulation {
            let _ = writeln!(
                s,
                "regulation: final_norm_y={} regulated={} level_M={} gain_below_level={} holds={}",
                f(r.final_norm),
                r.regulated,
                f(r.level),
                r.gain_below_level,
                r.holds()
            );
        }
        s
    }
}

/// Runs every applicable analysis on a trajectory of `scenario`.
pub fn summarize<T: Scalar>(
    label: &str,
    scenario: &Scenario<T>,
    traj: &Trajectory<T>,
) -> Result<RunSummary<T>> {
    let cl = scenario.closed_loop()?;
    let mut metadata = vec![
        ("plant".to_string(), cl.plant.name.clone()),
        ("clf".to_string(), cl.clf.name.clone()),
        ("horizon".to_string(), num(scenario.settings.horizon)),
        ("dt".to_string(), num(scenario.settings.dt)),
    ];
    let mut certificates = Vec::new();
    let mut drift = None;
    let mut deadzone = None;
    let mut deadzone_windows = None;
    let mut regulation = None;
    match &scenario.controller {
        ControllerConfig::Dads(p) => {
            metadata.push((
                "controller".into(),
                format!("dads ({} gain)", p.variant.as_str()),
            ));
            metadata.push(("epsilon".into(), num(p.epsilon)));
            metadata.push(("gamma".into(), num(p.gamma)));
            metadata.push(("damping".into(), num(p.damping)));
            metadata.push(("kappa".into(), num(p.kappa)));
            metadata.push(("z0".into(), num((scenario.initial.rho - p.kappa).ln())));
            certificates.push(dads_certificate(
                traj,
                &cl.plant,
                &cl.clf,
                p,
                scenario.disturbance.b_lower_bound(),
            )?);
            drift = Some(drift_metric(traj, DRIFT_SPLIT)?);
            deadzone = Some(deadzone_check(traj, p.epsilon));
            deadzone_windows = Some((
                deadzone_window(traj, p.epsilon, 0.0, TAIL_FRACTION)?.activity_fraction,
                deadzone_window(traj, p.epsilon, 1.0 - TAIL_FRACTION, 1.0)?.activity_fraction,
            ));
            let applies = cl.clf.sigma == T::zero()
                && cl.clf.lambda == T::zero()
                && scenario.disturbance.d.iter().all(|s| s.vanishes());
            if applies {
                regulation = Some(regulation_dichotomy(
                    traj,
                    &cl.clf,
                    &scenario.disturbance,
                    T::lit(REGULATION_TOL),
                )?);
            }
        }
        ControllerConfig::SigmaMod(p) => {
            metadata.push(("controller".into(), "sigma-mod".into()));
            metadata.push(("sigma_bar".into(), num(p.sigma_bar)));
            metadata.push(("gamma".into(), num(p.gamma)));
            if scenario.disturbance.parameters_constant() {
                certificates.push(c1_certificate(traj, &scenario.disturbance, p)?);
            }
            drift = Some(drift_metric(traj, DRIFT_SPLIT)?);
        }
        ControllerConfig::OpenLoop => metadata.push(("controller".into(), "open-loop".into())),
    }
    Ok(RunSummary {
        label: label.to_string(),
        metadata,
        samples: traj.len(),
        tail: tail_stats(traj, TAIL_FRACTION)?,
        drift,
        deadzone,
        deadzone_windows,
        certificates,
        regulation,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes `trajectory.csv` and `summary.txt` into `out_dir` (created if
/// missing) and returns their paths.
pub fn emit_csv<T: Scalar>(
    traj: &Trajectory<T>,
    summary: &RunSummary<T>,
    out_dir: &Path,
    stride: usize,
) -> Result<(PathBuf, PathBuf)> {
    let csv = trajectory_csv(traj, stride)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let csv_path = out_dir.join(TRAJECTORY_FILE);
    let summary_path = out_dir.join(SUMMARY_FILE);
    write_file(&csv_path, &csv)?;
    write_file(&summary_path, &summary.render())?;
    Ok((csv_path, summary_path))
}
