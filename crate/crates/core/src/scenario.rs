//! Scenario files (TOML) and the benchmark presets.
//!
//! ```toml
//! [plant]
//! preset = "double-integrator"
//!
//! [clf]
//! preset = "double-integrator"
//! c = 0.5
//!
//! [controller]
//! kind = "dads"            # or "sigma-mod" / "open-loop"
//! variant = "simplified"
//! epsilon = 0.005
//! gamma = 20.0
//! damping = 1.0
//! kappa = 0.1
//!
//! [initial]
//! y = [1.0, 0.0]
//! rho = 0.11
//! theta_hat = [0.0, 0.0]
//!
//! [disturbance]
//! d = [{ kind = "sinusoid", amplitude = 2.0, omega = 1.0 }]
//! theta = [{ kind = "constant", value = 1.0 }, { kind = "constant", value = 1.0 }]
//! b = [{ kind = "constant", value = 0.01 }]
//!
//! [sim]
//! horizon = 100.0
//! dt = 0.0001
//! blowup_threshold = 100000000.0
//! seed = 0
//!
//! [output]
//! directory = "out/dads-sin"
//! stride = 100
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::SigmaModParams;
use crate::clf::ClfPreset;
use crate::dads::{DadsParams, GainVariant};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{
    ControllerConfig, InitialState, Scenario, StepSettings, DEFAULT_BLOWUP, DEFAULT_DT,
    DEFAULT_HORIZON,
};
use crate::systems::{DisturbanceProfile, PlantPreset, Signal};

pub const PRESET_NAMES: [&str; 6] = [
    "c1-noleak-0",
    "c1-leak-0",
    "dads-0",
    "c1-noleak-sin",
    "c1-leak-sin",
    "dads-sin",
];

/// Floor of the adapted gain used by the DADS presets.
pub const PRESET_KAPPA: f64 = 0.1;
pub const DEFAULT_STRIDE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub preset: PlantPreset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    deny_unknown_fields,
    bound(deserialize = "T: Deserialize<'de>")
)]
pub enum ControllerSection<T> {
    Dads {
        variant: GainVariant,
        epsilon: T,
        gamma: T,
        damping: T,
        kappa: T,
    },
    /// The CLF slope `c` comes from the `[clf]` section.
    SigmaMod {
        sigma_bar: T,
        gamma: T,
    },
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(deserialize = "T: Deserialize<'de> + Default")
)]
pub struct InitialSection<T> {
    pub y: Vec<T>,
    #[serde(default)]
    pub rho: T,
    #[serde(default)]
    pub theta_hat: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(deserialize = "T: Deserialize<'de> + Scalar")
)]
pub struct SimSection<T> {
    #[serde(default = "default_horizon")]
    pub horizon: T,
    #[serde(default = "default_dt")]
    pub dt: T,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: T,
    #[serde(default)]
    pub seed: u64,
}

fn default_horizon<T: Scalar>() -> T {
    T::lit(DEFAULT_HORIZON)
}
fn default_dt<T: Scalar>() -> T {
    T::lit(DEFAULT_DT)
}
fn default_blowup<T: Scalar>() -> T {
    T::lit(DEFAULT_BLOWUP)
}
fn default_stride() -> usize {
    DEFAULT_STRIDE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            stride: DEFAULT_STRIDE,
        }
    }
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(deserialize = "T: Deserialize<'de> + Scalar")
)]
pub struct ScenarioFile<T> {
    pub plant: PlantSection,
    pub clf: ClfPreset<T>,
    pub controller: ControllerSection<T>,
    pub initial: InitialSection<T>,
    pub disturbance: DisturbanceProfile<T>,
    pub sim: SimSection<T>,
    #[serde(default)]
    pub output: OutputSection,
}

impl<T: Scalar + for<'de> Deserialize<'de>> ScenarioFile<T> {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl<T: Scalar> ScenarioFile<T> {
    pub fn to_toml(&self) -> Result<String>
    where
        T: Serialize,
    {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Builds and validates the scenario.
    pub fn to_scenario(&self) -> Result<Scenario<T>> {
        let controller = match &self.controller {
            ControllerSection::Dads {
                variant,
                epsilon,
                gamma,
                damping,
                kappa,
            } => ControllerConfig::Dads(DadsParams {
                epsilon: *epsilon,
                gamma: *gamma,
                damping: *damping,
                kappa: *kappa,
                variant: *variant,
            }),
            ControllerSection::SigmaMod { sigma_bar, gamma } => {
                ControllerConfig::SigmaMod(SigmaModParams {
                    sigma_bar: *sigma_bar,
                    gamma: *gamma,
                    c: self.clf.slope(),
                })
            }
            ControllerSection::OpenLoop => ControllerConfig::OpenLoop,
        };
        let theta_hat = match (&self.controller, self.initial.theta_hat.is_empty()) {
            (ControllerSection::SigmaMod { .. }, true) => vec![T::zero(); 2],
            _ => self.initial.theta_hat.clone(),
        };
        let scenario = Scenario {
            plant: self.plant.preset,
            clf: self.clf.clone(),
            controller,
            initial: InitialState {
                y: self.initial.y.clone(),
                rho: self.initial.rho,
                theta_hat,
            },
            disturbance: self.disturbance.clone(),
            settings: StepSettings {
                horizon: self.sim.horizon,
                dt: self.sim.dt,
                blowup_threshold: self.sim.blowup_threshold,
            },
            seed: self.sim.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_scenario(scenario: &Scenario<T>, output: OutputSection) -> Self {
        let controller = match &scenario.controller {
            ControllerConfig::Dads(p) => ControllerSection::Dads {
                variant: p.variant,
                epsilon: p.epsilon,
                gamma: p.gamma,
                damping: p.damping,
                kappa: p.kappa,
            },
            ControllerConfig::SigmaMod(p) => ControllerSection::SigmaMod {
                sigma_bar: p.sigma_bar,
                gamma: p.gamma,
            },
            ControllerConfig::OpenLoop => ControllerSection::OpenLoop,
        };
        Self {
            plant: PlantSection {
                preset: scenario.plant,
            },
            clf: scenario.clf.clone(),
            controller,
            initial: InitialSection {
                y: scenario.initial.y.clone(),
                rho: scenario.initial.rho,
                theta_hat: scenario.initial.theta_hat.clone(),
            },
            disturbance: scenario.disturbance.clone(),
            sim: SimSection {
                horizon: scenario.settings.horizon,
                dt: scenario.settings.dt,
                blowup_threshold: scenario.settings.blowup_threshold,
                seed: scenario.seed,
            },
            output,
        }
    }
}

pub fn read_scenario_file<T: Scalar + for<'de> Deserialize<'de>>(
    path: &Path,
) -> Result<ScenarioFile<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ScenarioFile::from_toml(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads and validates a scenario file.
pub fn parse_scenario<T: Scalar + for<'de> Deserialize<'de>>(path: &Path) -> Result<Scenario<T>> {
    read_scenario_file(path)?.to_scenario()
}

/// Serializes a scenario as a scenario file.
pub fn emit_scenario<T: Scalar + Serialize>(
    scenario: &Scenario<T>,
    output: OutputSection,
) -> Result<String> {
    ScenarioFile::from_scenario(scenario, output).to_toml()
}

/// One of the six benchmark configurations on the double integrator.
pub fn run_preset<T: Scalar>(name: &str) -> Result<Scenario<T>> {
    let (controller, sinusoidal) = match name {
        "c1-noleak-0" => ("c1", false),
        "c1-leak-0" => ("c1-leak", false),
        "dads-0" => ("dads", false),
        "c1-noleak-sin" => ("c1", true),
        "c1-leak-sin" => ("c1-leak", true),
        "dads-sin" => ("dads", true),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset `{name}`; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let c = T::lit(0.5);
    let gamma = T::lit(20.0);
    let controller = match controller {
        "dads" => ControllerConfig::Dads(DadsParams {
            epsilon: T::lit(0.005),
            gamma,
            damping: T::one(),
            kappa: T::lit(PRESET_KAPPA),
            variant: GainVariant::Simplified,
        }),
        "c1" => ControllerConfig::SigmaMod(SigmaModParams {
            sigma_bar: T::zero(),
            gamma,
            c,
        }),
        _ => ControllerConfig::SigmaMod(SigmaModParams {
            sigma_bar: T::lit(0.2),
            gamma,
            c,
        }),
    };
    let theta_hat = match controller {
        ControllerConfig::SigmaMod(_) => vec![T::zero(); 2],
        _ => Vec::new(),
    };
    let d = if sinusoidal {
        Signal::sinusoid(T::lit(2.0), T::one())
    } else {
        Signal::Zero
    };
    Ok(Scenario {
        plant: PlantPreset::DoubleIntegrator,
        clf: ClfPreset::DoubleIntegrator { c },
        controller,
        initial: InitialState {
            y: vec![T::one(), T::zero()],
            rho: T::lit(0.11),
            theta_hat,
        },
        disturbance: DisturbanceProfile {
            d: vec![d],
            theta: vec![Signal::constant(T::one()), Signal::constant(T::one())],
            b: vec![Signal::constant(T::lit(0.01))],
        },
        settings: StepSettings {
            horizon: T::lit(DEFAULT_HORIZON),
            dt: T::lit(DEFAULT_DT),
            blowup_threshold: T::lit(DEFAULT_BLOWUP),
        },
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DADS_SIN: &str = r#"
[plant]
preset = "double-integrator"

[clf]
preset = "double-integrator"
c = 0.5

[controller]
kind = "dads"
variant = "simplified"
epsilon = 0.005
gamma = 20.0
damping = 1.0
kappa = 0.1

[initial]
y = [1.0, 0.0]
rho = 0.11

[disturbance]
d = [{ kind = "sinusoid", amplitude = 2.0, omega = 1.0 }]
theta = [{ kind = "constant", value = 1.0 }, { kind = "constant", value = 1.0 }]
b = [{ kind = "constant", value = 0.01 }]

[sim]
horizon = 100.0
dt = 0.0001
"#;

    fn parse(text: &str) -> Result<Scenario<f64>> {
        ScenarioFile::<f64>::from_toml(text)?.to_scenario()
    }

    #[test]
    fn hand_written_file_matches_preset() {
        assert_eq!(parse(DADS_SIN).unwrap(), run_preset("dads-sin").unwrap());
    }

    #[test]
    fn preset_constants() {
        let s = run_preset::<f64>("dads-sin").unwrap();
        match s.controller {
            ControllerConfig::Dads(p) => {
                assert_eq!((p.epsilon, p.gamma, p.damping), (0.005, 20.0, 1.0));
            }
            _ => panic!("dads preset must use the DADS controller"),
        }
        assert_eq!(s.disturbance.d[0].sup_abs(), 2.0);

        let s = run_preset::<f64>("c1-leak-0").unwrap();
        assert!(matches!(s.controller, ControllerConfig::SigmaMod(p) if p.sigma_bar == 0.2));
        assert_eq!(s.disturbance.d, vec![Signal::Zero]);
    }

    #[test]
    fn unknown_preset_lists_valid_names() {
        let msg = run_preset::<f64>("nosuch").unwrap_err().to_string();
        for name in PRESET_NAMES {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn every_preset_round_trips() {
        for name in PRESET_NAMES {
            let s = run_preset::<f64>(name).unwrap();
            let text = emit_scenario(&s, OutputSection::default()).unwrap();
            assert_eq!(parse(&text).unwrap(), s, "{name}:\n{text}");
        }
    }

    #[test]
    fn rho_at_floor_is_rejected() {
        let text = DADS_SIN.replace("rho = 0.11", "rho = 0.1");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("ρ₀ > κ"), "{msg}");
    }

    #[test]
    fn full_variant_needs_large_floor() {
        let text = DADS_SIN.replace("\"simplified\"", "\"full\"");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("2Cκ ≥ 1"), "{msg}");
        assert!(!msg.contains("ρ₀ > κ"));
    }

    #[test]
    fn missing_and_unknown_keys() {
        let msg = parse(&DADS_SIN.replace("kappa = 0.1\n", ""))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("kappa"), "{msg}");

        let msg = parse(&DADS_SIN.replace("kappa = 0.1", "kappa = 0.1\nkapa = 2.0"))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("kapa"), "{msg}");

        let msg = parse(&DADS_SIN.replace("kind = \"dads\"", "kind = \"pid\""))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("pid"), "{msg}");
    }

    #[test]
    fn sim_defaults_apply() {
        let text = DADS_SIN.replace("horizon = 100.0\ndt = 0.0001\n", "");
        let s = parse(&text).unwrap();
        assert_eq!(s.settings.horizon, 100.0);
        assert_eq!(s.settings.dt, 1e-4);
        assert_eq!(s.settings.blowup_threshold, 1e8);
    }

    #[test]
    fn f32_presets_build() {
        let s = run_preset::<f32>("c1-leak-sin").unwrap();
        s.validate().unwrap();
    }
}
