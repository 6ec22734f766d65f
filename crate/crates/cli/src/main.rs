use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use dads_core::analysis::CERTIFICATE_TOL;
use dads_core::clf::{
    check_assumption_a, check_assumption_b, check_bundle_signs, check_rate_compatibility, Sampling,
    VIOLATION_TOL,
};
use dads_core::report::{emit_csv, summarize};
use dads_core::scenario::{read_scenario_file, run_preset, DEFAULT_STRIDE, PRESET_NAMES};
use dads_core::sim::{integrate, refine_check, Norm};
use dads_core::{Error, Scenario64};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BLOWUP: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(
    name = "dads",
    version,
    about = "Deadzone-adapted disturbance suppression runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenarios and write trajectory.csv + summary.txt per run.
    Run {
        /// Scenario files or preset names.
        #[arg(required = true)]
        targets: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
        /// Keep every N-th sample in the CSV.
        #[arg(long)]
        stride: Option<usize>,
        /// Output directory (one subdirectory per target when several are given).
        #[arg(long, env = "DADS_OUT_DIR")]
        out: Option<PathBuf>,
        /// Run up to this many targets concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List the built-in presets.
    Presets,
    /// Sample the CLF inequalities on a box around the origin.
    CheckAssumptions {
        target: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long, default_value_t = 10_000)]
        random: usize,
    },
    /// Simulate and report the Lyapunov certificate only.
    Certify {
        target: String,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = CERTIFICATE_TOL)]
        tol: f64,
    },
    /// Compare runs at dt and dt/2 (and dt/4 with --order).
    Refine {
        target: String,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        order: bool,
        #[arg(long)]
        euclidean: bool,
    },
}

#[derive(Args, Clone, Copy, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse(_) | Error::Domain(_) | Error::Dimension { .. } => {
                EXIT_CONFIG
            }
            Error::Blowup { .. } => EXIT_BLOWUP,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: format!("{e:#}"),
        }
    }
}

struct Loaded {
    label: String,
    scenario: Scenario64,
    out_dir: Option<PathBuf>,
    stride: usize,
}

/// A path to a scenario file, or else a preset name.
fn load(target: &str, overrides: Overrides) -> Result<Loaded, Failure> {
    let path = Path::new(target);
    let mut loaded = if path.is_file() {
        let file = read_scenario_file::<f64>(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| target.to_string());
        Loaded {
            label,
            scenario: file.to_scenario()?,
            out_dir: file.output.directory.clone(),
            stride: file.output.stride,
        }
    } else {
        Loaded {
            label: target.to_string(),
            scenario: run_preset(target)?,
            out_dir: None,
            stride: DEFAULT_STRIDE,
        }
    };
    let s = &mut loaded.scenario;
    if let Some(seed) = overrides.seed {
        s.seed = seed;
    }
    if let Some(dt) = overrides.dt {
        s.settings.dt = dt;
    }
    if let Some(horizon) = overrides.horizon {
        s.settings.horizon = horizon;
    }
    s.validate()?;
    Ok(loaded)
}

fn run_one(
    target: &str,
    overrides: Overrides,
    stride: Option<usize>,
    out: Option<&Path>,
    several: bool,
) -> Result<String, Failure> {
    let loaded = load(target, overrides)?;
    let traj = integrate(&loaded.scenario)?;
    let summary = summarize(&loaded.label, &loaded.scenario, &traj)?;
    let dir = match (out, several) {
        (Some(dir), true) => dir.join(&loaded.label),
        (Some(dir), false) => dir.to_path_buf(),
        (None, _) => loaded
            .out_dir
            .clone()
            .unwrap_or_else(|| Path::new("out").join(&loaded.label)),
    };
    let (csv, _) = emit_csv(&traj, &summary, &dir, stride.unwrap_or(loaded.stride))?;
    let mut text = summary.render();
    text.push_str(&format!("wrote {}\n", csv.display()));
    if let Some(worst) = summary.worst_certificate() {
        if !worst.passes(CERTIFICATE_TOL) {
            return Err(Failure {
                code: EXIT_CHECK,
                message: format!("{text}certificate above tolerance {CERTIFICATE_TOL:?}"),
            });
        }
    }
    Ok(text)
}

fn run(
    targets: &[String],
    overrides: Overrides,
    stride: Option<usize>,
    out: Option<&Path>,
    jobs: usize,
) -> Result<(), Failure> {
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()).into());
    }
    let several = targets.len() > 1;
    let mut results = Vec::with_capacity(targets.len());
    for chunk in targets.chunks(jobs) {
        let chunk_results: Vec<_> = thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|t| scope.spawn(move || run_one(t, overrides, stride, out, several)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Err(Failure::from(anyhow!("simulation thread panicked")))
                    })
                })
                .collect()
        });
        results.extend(chunk_results);
    }
    let mut first_failure = None;
    for (target, result) in targets.iter().zip(results) {
        match result {
            Ok(text) => print!("{text}"),
            Err(f) => {
                eprintln!("{target}: {}", f.message);
                first_failure.get_or_insert(f.code);
            }
        }
    }
    match first_failure {
        None => Ok(()),
        Some(code) => Err(Failure {
            code,
            message: String::new(),
        }),
    }
}

fn check_assumptions(
    target: &str,
    seed: Option<u64>,
    radius: f64,
    grid: usize,
    random: usize,
) -> Result<(), Failure> {
    let loaded = load(target, Overrides::default())?;
    let cl = loaded.scenario.closed_loop()?;
    let sampling = Sampling {
        box_radius: radius,
        grid_pts: grid,
        random_pts: random,
        seed: seed.unwrap_or(loaded.scenario.seed),
    };
    let reports = [
        (
            "assumption A",
            check_assumption_a(&cl.plant, &cl.clf, &sampling)?,
        ),
        (
            "assumption B",
            check_assumption_b(&cl.plant, &cl.clf, &sampling)?,
        ),
        (
            "rate compatibility",
            check_rate_compatibility(cl.plant.dims.n, &cl.clf, &sampling)?,
        ),
        (
            "bundle signs",
            check_bundle_signs(cl.plant.dims.n, &cl.clf, &sampling)?,
        ),
    ];
    let mut ok = true;
    for (name, rep) in &reports {
        let pass = rep.passes(VIOLATION_TOL);
        ok &= pass;
        println!("{name}: {} {rep}", if pass { "PASS" } else { "FAIL" });
    }
    if ok {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_CHECK,
            message: format!("violation above {VIOLATION_TOL:?}"),
        })
    }
}

fn certify(target: &str, overrides: Overrides, tol: f64) -> Result<(), Failure> {
    let loaded = load(target, overrides)?;
    let traj = integrate(&loaded.scenario)?;
    let summary = summarize(&loaded.label, &loaded.scenario, &traj)?;
    if summary.certificates.is_empty() {
        return Err(Error::Config(format!(
            "{}: no certificate applies to this scenario",
            loaded.label
        ))
        .into());
    }
    let mut ok = true;
    for c in &summary.certificates {
        let pass = c.passes(tol);
        ok &= pass;
        println!(
            "{}: {} {c}",
            loaded.label,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_CHECK,
            message: format!("certificate above tolerance {tol:?}"),
        })
    }
}

fn refine(
    target: &str,
    overrides: Overrides,
    tol: f64,
    order: bool,
    euclidean: bool,
) -> Result<(), Failure> {
    let loaded = load(target, overrides)?;
    let norm = if euclidean {
        Norm::Euclidean
    } else {
        Norm::Max
    };
    let rep = refine_check(&loaded.scenario, norm, order)?;
    println!(
        "{}: dt={:?} discrepancy(dt, dt/2)={:?}",
        loaded.label, rep.dt, rep.discrepancy
    );
    if let Some(fine) = rep.fine_discrepancy {
        println!("discrepancy(dt/2, dt/4)={fine:?}");
    }
    if let Some(p) = rep.observed_order {
        println!("observed order={p:?}");
    }
    if rep.discrepancy <= tol {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_CHECK,
            message: format!("discrepancy above tolerance {tol:?}"),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            targets,
            overrides,
            stride,
            out,
            jobs,
        } => run(&targets, overrides, stride, out.as_deref(), jobs),
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::CheckAssumptions {
            target,
            seed,
            radius,
            grid,
            random,
        } => check_assumptions(&target, seed, radius, grid, random),
        Command::Certify {
            target,
            overrides,
            tol,
        } => certify(&target, overrides, tol),
        Command::Refine {
            target,
            overrides,
            tol,
            order,
            euclidean,
        } => refine(&target, overrides, tol, order, euclidean),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
