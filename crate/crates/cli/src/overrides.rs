use std::str::FromStr;

use nsb_avoid::scenario::ControllerChoice;
use nsb_avoid::{Error, ScenarioFile, Supervisor};
use serde_json::{json, Map, Value};

use crate::{ControllerArg, SupervisorArg};

/// Slope used when `--supervisor arctan` replaces a different law.
pub const DEFAULT_ARCTAN_SLOPE: f64 = 10.0;
/// Half-width used when `--supervisor piecewise` replaces a different law.
pub const DEFAULT_PIECEWISE_EPS: f64 = 0.08;

#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub supervisor: Option<SupervisorArg>,
    pub controller: Option<ControllerArg>,
    pub ts: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
}

fn flag_error(flag: &str, message: String) -> Error {
    Error::Schema {
        path: format!("--{flag}"),
        message,
    }
}

fn supervisor_for(arg: SupervisorArg, current: &Supervisor) -> Supervisor {
    match (arg, current) {
        (SupervisorArg::Arctan, Supervisor::Arctan { .. })
        | (SupervisorArg::Piecewise, Supervisor::PiecewiseLinear { .. })
        | (SupervisorArg::Crisp, Supervisor::Crisp) => *current,
        (SupervisorArg::Arctan, _) => Supervisor::Arctan {
            k: DEFAULT_ARCTAN_SLOPE,
        },
        (SupervisorArg::Piecewise, _) => Supervisor::PiecewiseLinear {
            eps: DEFAULT_PIECEWISE_EPS,
        },
        (SupervisorArg::Crisp, _) => Supervisor::Crisp,
    }
}

impl RunOverrides {
    /// The scenario document with the flags applied.
    pub fn apply(&self, file: &ScenarioFile) -> Result<ScenarioFile, Error> {
        let mut f = file.clone();
        if let Some(ts) = self.ts {
            if !(ts > 0.0 && ts.is_finite()) {
                return Err(flag_error("ts", format!("step {ts} must be positive")));
            }
            f.gains.t_s = ts;
        }
        if let Some(d) = self.duration {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(flag_error(
                    "duration",
                    format!("duration {d} must be non-negative"),
                ));
            }
            f.duration = d;
        }
        if let Some(s) = self.supervisor {
            f.gains.supervisor = supervisor_for(s, &f.gains.supervisor);
        }
        if let Some(c) = self.controller {
            f.controller = match c {
                ControllerArg::Nsb => ControllerChoice::Nsb,
                ControllerArg::Apf => ControllerChoice::Apf,
            };
        }
        Ok(f)
    }

    /// The flags as given, plus the resolved settings they produced.
    pub fn effective_config(&self, scenario_path: &str, resolved: &ScenarioFile) -> Value {
        let mut given = Map::new();
        if let Some(s) = self.supervisor {
            given.insert("supervisor".into(), json!(supervisor_arg_name(s)));
        }
        if let Some(c) = self.controller {
            given.insert("controller".into(), json!(controller_arg_name(c)));
        }
        if let Some(ts) = self.ts {
            given.insert("ts".into(), json!(ts));
        }
        if let Some(d) = self.duration {
            given.insert("duration".into(), json!(d));
        }
        if let Some(seed) = self.seed {
            given.insert("seed".into(), json!(seed));
        }
        json!({
            "scenario": scenario_path,
            "overrides": given,
            "controller": resolved.controller,
            "supervisor": resolved.gains.supervisor,
            "t_s": resolved.gains.t_s,
            "duration": resolved.duration,
            "seed": self.seed,
        })
    }
}

fn supervisor_arg_name(s: SupervisorArg) -> &'static str {
    match s {
        SupervisorArg::Arctan => "arctan",
        SupervisorArg::Piecewise => "piecewise",
        SupervisorArg::Crisp => "crisp",
    }
}

fn controller_arg_name(c: ControllerArg) -> &'static str {
    match c {
        ControllerArg::Nsb => "nsb",
        ControllerArg::Apf => "apf",
    }
}

/// One entry of `compare --controllers`: `nsb`, `nsb-<supervisor>` or `apf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControllerSpec {
    pub controller: ControllerArg,
    pub supervisor: Option<SupervisorArg>,
}

impl ControllerSpec {
    pub fn label(&self) -> String {
        match (self.controller, self.supervisor) {
            (ControllerArg::Apf, _) => "apf".into(),
            (ControllerArg::Nsb, None) => "nsb".into(),
            (ControllerArg::Nsb, Some(s)) => format!("nsb-{}", supervisor_arg_name(s)),
        }
    }
}

impl FromStr for ControllerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let nsb = |supervisor| ControllerSpec {
            controller: ControllerArg::Nsb,
            supervisor,
        };
        match s.trim() {
            "apf" => Ok(ControllerSpec {
                controller: ControllerArg::Apf,
                supervisor: None,
            }),
            "nsb" => Ok(nsb(None)),
            "nsb-arctan" => Ok(nsb(Some(SupervisorArg::Arctan))),
            "nsb-piecewise" => Ok(nsb(Some(SupervisorArg::Piecewise))),
            "nsb-crisp" => Ok(nsb(Some(SupervisorArg::Crisp))),
            other => Err(format!(
                "unknown controller `{other}` (expected nsb, nsb-arctan, nsb-piecewise, nsb-crisp or apf)"
            )),
        }
    }
}
