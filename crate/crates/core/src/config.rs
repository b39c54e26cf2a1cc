//! Run configuration: a JSON document with engineering units.
//!
//! Quantities are either bare numbers (already SI) or strings such as
//! `"215 µH"`; the unit must have the dimension the key expects. Unknown keys
//! are rejected and every error names the offending key path.

use crate::dq::ReferenceFrame;
use crate::error::{Error, Result};
use crate::params::{ControlParams, FilterParams, GridParams, GridStatus, Nominals, VsiParams};
use crate::scenario::{canonical_events, CanonicalLoads, ScenarioEvent, ScenarioSettings, CANONICAL_TIMES, CANONICAL_T_END};
use crate::solver::{IntegratorSettings, Method, NewtonSettings};
use crate::system::SystemModel;
use crate::units::parse_expecting;
use serde::{Deserialize, Deserializer, Serialize};
use std::path::Path;

/// The bundled configuration.
pub const FAIRVIEW_JSON: &str = include_str!("../../../fairview.json");

#[derive(Deserialize)]
#[serde(untagged)]
enum Raw {
    Num(f64),
    Text(String),
}

fn quantity<'de, D: Deserializer<'de>>(d: D, unit: &str) -> std::result::Result<f64, D::Error> {
    let v = match Raw::deserialize(d)? {
        Raw::Num(v) => v,
        Raw::Text(s) => parse_expecting(&s, unit).map_err(serde::de::Error::custom)?,
    };
    if !v.is_finite() {
        return Err(serde::de::Error::custom("value is not finite"));
    }
    Ok(v)
}

macro_rules! unit_fn {
    ($($name:ident => $unit:literal),* $(,)?) => {
        $(fn $name<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
            quantity(d, $unit)
        })*
    };
}

unit_fn! {
    de_w => "W",
    de_var => "VAr",
    de_v => "V",
    de_hz => "Hz",
    de_s => "s",
    de_h => "H",
    de_ohm => "Ω",
    de_f => "F",
    de_n => "rad/s/W",
    de_m => "V/VAr",
    de_mint => "V/s/VAr",
}

fn de_s_list<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    struct S(#[serde(deserialize_with = "de_s")] f64);
    Ok(Vec::<S>::deserialize(d)?.into_iter().map(|s| s.0).collect())
}

fn de_s_opt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    de_s(d).map(Some)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NominalsCfg {
    #[serde(deserialize_with = "de_v")]
    v_ll_rms: f64,
    #[serde(deserialize_with = "de_hz")]
    f_nom: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlCfg {
    #[serde(deserialize_with = "de_n")]
    n: f64,
    #[serde(deserialize_with = "de_m")]
    m: f64,
    #[serde(deserialize_with = "de_mint")]
    m_int: f64,
    #[serde(deserialize_with = "de_s")]
    tau_s: f64,
    #[serde(deserialize_with = "de_w")]
    p_ref: f64,
    #[serde(deserialize_with = "de_var")]
    q_ref: f64,
    #[serde(deserialize_with = "de_w")]
    p_rated: f64,
    #[serde(deserialize_with = "de_var")]
    q_rated: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineCfg {
    #[serde(deserialize_with = "de_h")]
    l_g: f64,
    #[serde(default, deserialize_with = "de_ohm")]
    r_g: f64,
    #[serde(deserialize_with = "de_h")]
    l_line: f64,
    #[serde(default, deserialize_with = "de_ohm")]
    r_line: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterCfg {
    #[serde(deserialize_with = "de_h")]
    l_f: f64,
    #[serde(default, deserialize_with = "de_ohm")]
    r_f: f64,
    #[serde(deserialize_with = "de_f")]
    c_f: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VsiCfg {
    control: ControlCfg,
    line: LineCfg,
    filter: FilterCfg,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridCfg {
    #[serde(deserialize_with = "de_h")]
    l_lg: f64,
    #[serde(default, deserialize_with = "de_ohm")]
    r_lg: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadCfg {
    #[serde(deserialize_with = "de_w")]
    p: f64,
    #[serde(deserialize_with = "de_var")]
    q: f64,
    #[serde(deserialize_with = "de_w")]
    critical_p: f64,
    #[serde(deserialize_with = "de_var")]
    critical_q: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerCfg {
    #[serde(deserialize_with = "de_w")]
    p: f64,
    #[serde(deserialize_with = "de_var")]
    q: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameCfg {
    off_grid: ReferenceFrame,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct NewtonCfg {
    tol: Option<f64>,
    max_iter: Option<usize>,
    fd_step: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct IntegratorCfg {
    method: Option<Method>,
    #[serde(default, deserialize_with = "de_s_opt")]
    h: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverCfg {
    #[serde(default)]
    newton: NewtonCfg,
    #[serde(default)]
    integrator: IntegratorCfg,
    decimation: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ScenarioCfg {
    #[serde(default, deserialize_with = "de_s_list")]
    times: Vec<f64>,
    #[serde(default, deserialize_with = "de_s_opt")]
    t_end: Option<f64>,
    load_after_drop: Option<PowerCfg>,
    load_island: Option<PowerCfg>,
    load_after_jump: Option<PowerCfg>,
    band: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TransitionCfg {
    #[serde(default, deserialize_with = "de_s_list")]
    tau_s: Vec<f64>,
    #[serde(default, deserialize_with = "de_s_opt")]
    t_switch: Option<f64>,
    #[serde(default, deserialize_with = "de_s_opt")]
    t_end: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OutputCfg {
    dir: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    nominals: NominalsCfg,
    vsi: [VsiCfg; 2],
    grid: GridCfg,
    load: LoadCfg,
    frame: Option<FrameCfg>,
    #[serde(default)]
    solver: SolverCfg,
    #[serde(default)]
    scenario: ScenarioCfg,
    #[serde(default)]
    transition: TransitionCfg,
    #[serde(default)]
    output: OutputCfg,
}

/// Scenario timeline and load levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub times: [f64; 4],
    pub t_end: f64,
    pub loads: CanonicalLoads,
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionConfig {
    pub tau_s: Vec<f64>,
    pub t_switch: f64,
    pub t_end: f64,
}

/// Fully resolved configuration, SI throughout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub nominals: Nominals,
    pub vsis: [VsiParams; 2],
    pub grid: GridParams,
    /// On-grid load.
    pub load: (f64, f64),
    /// Critical load served while islanded.
    pub critical_load: (f64, f64),
    pub off_grid_frame: ReferenceFrame,
    pub newton: NewtonSettings,
    pub method: Method,
    pub h: f64,
    pub decimation: usize,
    pub scenario: ScenarioConfig,
    pub transition: TransitionConfig,
    pub output_dir: String,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        let cfg = resolve(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(path.display().to_string(), format!("cannot read: {e}"))
        })?;
        Self::from_json(&text)
    }

    /// The bundled `fairview.json`.
    pub fn fairview() -> Self {
        Self::from_json(FAIRVIEW_JSON).expect("bundled config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vsis.iter().enumerate() {
            v.validate(&format!("vsi[{i}]."))?;
        }
        self.grid.validate()?;
        for (path, (p, q)) in [("load", self.load), ("load.critical", self.critical_load)] {
            if !(p > 0.0 && q >= 0.0) {
                return Err(Error::config(path, "needs p > 0 and q ≥ 0"));
            }
        }
        self.newton.validate().map_err(|e| Error::config("solver.newton", e.to_string()))?;
        self.integrator(1.0)
            .validate()
            .map_err(|e| Error::config("solver.integrator", e.to_string()))?;
        if self.decimation == 0 {
            return Err(Error::config("solver.decimation", "must be at least 1"));
        }
        let s = &self.scenario;
        if s.times.windows(2).any(|w| !(w[1] > w[0])) || s.times[0] < 0.0 || s.times[3] >= s.t_end {
            return Err(Error::config("scenario.times", "must be increasing and end before t_end"));
        }
        if !(s.band > 0.0 && s.band < 1.0) {
            return Err(Error::config("scenario.band", "must lie in (0, 1)"));
        }
        let t = &self.transition;
        if t.tau_s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::config("transition.tau_s", "values must be positive"));
        }
        if !(t.t_switch >= 0.0 && t.t_end > t.t_switch) {
            return Err(Error::config("transition", "need 0 ≤ t_switch < t_end"));
        }
        Ok(())
    }

    pub fn integrator(&self, t_end: f64) -> IntegratorSettings {
        IntegratorSettings {
            method: self.method,
            h: self.h,
            t_end,
        }
    }

    /// Model for `status`: the on-grid load on-grid, the critical load off-grid.
    pub fn model(&self, status: GridStatus) -> Result<SystemModel> {
        let ((p, q), frame) = match status {
            GridStatus::OnGrid => (self.load, ReferenceFrame::FixedNominal),
            GridStatus::OffGrid => (self.critical_load, self.off_grid_frame),
        };
        let load = crate::components::load_from_power(p, q, self.nominals.v_ll_rms(), self.nominals.omega_nom)?;
        SystemModel::new(self.vsis, self.grid, load, self.nominals, frame, status)
    }

    /// On-grid model carrying only the critical load (the islanding study).
    pub fn transition_model(&self) -> Result<SystemModel> {
        self.model(GridStatus::OnGrid)?
            .with_load_power(self.critical_load.0, self.critical_load.1)
    }

    pub fn scenario_events(&self) -> Vec<ScenarioEvent> {
        let mut ev = canonical_events(&self.scenario.loads);
        let map = |t: f64| {
            let k = CANONICAL_TIMES.iter().position(|&c| c == t).expect("canonical time");
            self.scenario.times[k]
        };
        for e in ev.iter_mut() {
            e.t = map(e.t);
        }
        ev
    }

    pub fn scenario_settings(&self, t_end: f64) -> ScenarioSettings {
        ScenarioSettings {
            integrator: self.integrator(t_end),
            newton: self.newton,
            decimation: self.decimation,
            off_grid_frame: self.off_grid_frame,
            band: self.scenario.band,
        }
    }
}

fn resolve(raw: ConfigFile) -> Result<RunConfig> {
    let nominals = Nominals::from_line_rms(raw.nominals.v_ll_rms, raw.nominals.f_nom)
        .map_err(|e| Error::config("nominals", e.to_string()))?;
    let vsis = raw.vsi.map(|v| VsiParams {
        control: ControlParams {
            n: v.control.n,
            m: v.control.m,
            m_int: v.control.m_int,
            tau_s: v.control.tau_s,
            p_ref: v.control.p_ref,
            q_ref: v.control.q_ref,
            p_rated: v.control.p_rated,
            q_rated: v.control.q_rated,
        },
        l_l: v.line.l_g + v.line.l_line,
        r_l: v.line.r_g + v.line.r_line,
        filter: FilterParams {
            l_f: v.filter.l_f,
            r_f: v.filter.r_f,
            c_f: v.filter.c_f,
        },
    });
    let defaults = NewtonSettings::default();
    let newton = NewtonSettings {
        tol: raw.solver.newton.tol.unwrap_or(defaults.tol),
        max_iter: raw.solver.newton.max_iter.unwrap_or(defaults.max_iter),
        fd_step: raw.solver.newton.fd_step.unwrap_or(defaults.fd_step),
    };
    let integ = IntegratorSettings::default();
    let loads = CanonicalLoads::default();
    let pq = |c: Option<PowerCfg>, d: (f64, f64)| c.map_or(d, |c| (c.p, c.q));
    let times = match raw.scenario.times.len() {
        0 => CANONICAL_TIMES,
        4 => [0, 1, 2, 3].map(|k| raw.scenario.times[k]),
        n => return Err(Error::config("scenario.times", format!("expected 4 event times, found {n}"))),
    };
    Ok(RunConfig {
        nominals,
        vsis,
        grid: GridParams {
            l_lg: raw.grid.l_lg,
            r_lg: raw.grid.r_lg,
        },
        load: (raw.load.p, raw.load.q),
        critical_load: (raw.load.critical_p, raw.load.critical_q),
        off_grid_frame: raw.frame.map_or(ReferenceFrame::Vsi1Anchored, |f| f.off_grid),
        newton,
        method: raw.solver.integrator.method.unwrap_or(integ.method),
        h: raw.solver.integrator.h.unwrap_or(integ.h),
        decimation: raw.solver.decimation.unwrap_or(10),
        scenario: ScenarioConfig {
            times,
            t_end: raw.scenario.t_end.unwrap_or(CANONICAL_T_END),
            loads: CanonicalLoads {
                initial: (raw.load.p, raw.load.q),
                after_drop: pq(raw.scenario.load_after_drop, loads.after_drop),
                island: pq(raw.scenario.load_island, loads.island),
                after_jump: pq(raw.scenario.load_after_jump, loads.after_jump),
            },
            band: raw.scenario.band.unwrap_or(0.02),
        },
        transition: TransitionConfig {
            tau_s: if raw.transition.tau_s.is_empty() {
                vec![0.0247, 0.033, 0.0412]
            } else {
                raw.transition.tau_s
            },
            t_switch: raw.transition.t_switch.unwrap_or(0.05),
            t_end: raw.transition.t_end.unwrap_or(1.0),
        },
        output_dir: raw.output.dir.unwrap_or_else(|| "out".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(FAIRVIEW_JSON).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn bundled_config_parses_to_si() {
        let c = RunConfig::fairview();
        assert!((c.vsis[0].control.n - 2.08e-5).abs() < 1e-15 * 2.08e-5);
        assert!((c.vsis[1].control.tau_s - 0.033).abs() < 1e-15);
        assert!((c.vsis[0].l_l - 215e-6).abs() < 1e-15);
        let f = VsiParams::fairview_with_q_ref(63.21e3);
        let c0 = &c.vsis[0];
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        assert!(close(c0.control.m, f.control.m) && close(c0.control.m_int, f.control.m_int));
        assert!(close(c0.r_l, f.r_l) && close(c0.filter.c_f, f.filter.c_f));
        assert!(close(c0.control.q_ref, f.control.q_ref));
        assert_eq!(c.off_grid_frame, ReferenceFrame::Vsi1Anchored);
    }

    #[test]
    fn zero_m_is_rejected_with_path() {
        let text = edit(|v| v["vsi"][1]["control"]["m"] = "0 V/kVAr".into());
        let e = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("vsi[1].control.m"), "{e}");
        assert!(e.contains("divides by m"), "{e}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = edit(|v| v["grid"]["foo"] = 1.into());
        let e = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("grid") && e.contains("foo"), "{e}");
        let text = edit(|v| v["foo"] = 1.into());
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn wrong_dimension_names_key() {
        let text = edit(|v| v["vsi"][0]["control"]["tau_s"] = "33 kW".into());
        let e = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("vsi[0].control.tau_s"), "{e}");
    }

    #[test]
    fn missing_field_is_reported() {
        let text = edit(|v| {
            v["load"].as_object_mut().unwrap().remove("critical_p");
        });
        let e = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("critical_p"), "{e}");
    }

    #[test]
    fn esr_defaults_to_zero() {
        let text = edit(|v| {
            for i in 0..2 {
                let line = v["vsi"][i]["line"].as_object_mut().unwrap();
                line.remove("r_g");
                line.remove("r_line");
            }
        });
        let c = RunConfig::from_json(&text).unwrap();
        assert_eq!(c.vsis[0].r_l, 0.0);
    }
}
