//! Timed event simulation: load steps, islanding and grid return.

use crate::dq::ReferenceFrame;
use crate::error::{Error, Result};
use crate::params::GridStatus;
use crate::smallsignal::{apply_param, SweepParam};
use crate::solver::{
    integrate, solve_state, EventHook, IntegratorSettings, NewtonSettings, Trajectory,
    TrajectoryStatus,
};
use crate::state::{Mode, SystemState};
use crate::system::{Outputs, SystemModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// New constant-impedance load drawing `p + jq` at nominal voltage.
    SetLoad { p: f64, q: f64 },
    Island,
    GridReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl ScenarioEvent {
    pub fn new(t: f64, kind: EventKind) -> Self {
        ScenarioEvent { t, kind }
    }
}

/// Checks ordering and mode consistency for a run that starts on-grid.
///
/// Times must be non-decreasing. Events sharing a time form one instant and
/// are applied in list order; an instant holds at most one mode change and at
/// most one load change.
pub fn validate_events(events: &[ScenarioEvent], t_end: f64) -> Result<()> {
    let mut mode = Mode::OnGrid;
    for (k, ev) in events.iter().enumerate() {
        if !(ev.t >= 0.0 && ev.t.is_finite()) {
            return Err(Error::Events(format!("event {k}: time must be finite and non-negative")));
        }
        if ev.t >= t_end {
            return Err(Error::Events(format!("event {k}: time {} is not before t_end {t_end}", ev.t)));
        }
        if k > 0 {
            let prev = &events[k - 1];
            if ev.t < prev.t {
                return Err(Error::Events(format!("event {k}: times are not sorted")));
            }
            if ev.t == prev.t {
                let same_time = events[..k].iter().filter(|e| e.t == ev.t);
                let is_load = |e: &ScenarioEvent| matches!(e.kind, EventKind::SetLoad { .. });
                for other in same_time {
                    if is_load(other) == is_load(ev) {
                        return Err(Error::Events(format!(
                            "event {k}: duplicate {} at t = {}",
                            if is_load(ev) { "load change" } else { "mode change" },
                            ev.t
                        )));
                    }
                }
            }
        }
        match ev.kind {
            EventKind::SetLoad { p, q } => {
                if !(p > 0.0 && q >= 0.0 && p.is_finite() && q.is_finite()) {
                    return Err(Error::Events(format!("event {k}: load needs p > 0 and q ≥ 0")));
                }
            }
            EventKind::Island => {
                if mode != Mode::OnGrid {
                    return Err(Error::Events(format!("event {k}: island while already off-grid")));
                }
                mode = Mode::OffGrid;
            }
            EventKind::GridReturn => {
                if mode != Mode::OffGrid {
                    return Err(Error::Events(format!("event {k}: grid return while on-grid")));
                }
                mode = Mode::OnGrid;
            }
        }
    }
    Ok(())
}

/// Load levels of the default event sequence, SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalLoads {
    pub initial: (f64, f64),
    pub after_drop: (f64, f64),
    pub island: (f64, f64),
    pub after_jump: (f64, f64),
}

impl Default for CanonicalLoads {
    fn default() -> Self {
        CanonicalLoads {
            initial: (500e3, 220e3),
            after_drop: (400e3, 180e3),
            island: (200e3, 80e3),
            after_jump: (250e3, 100e3),
        }
    }
}

/// Default event times: load drop, islanding, off-grid load jump, grid return.
pub const CANONICAL_TIMES: [f64; 4] = [0.4, 1.1, 1.9, 2.7];
pub const CANONICAL_T_END: f64 = 4.0;

/// The desk-scale test sequence. Non-critical load is shed at islanding and
/// reconnected (back to the pre-islanding level) at grid return.
pub fn canonical_events(loads: &CanonicalLoads) -> Vec<ScenarioEvent> {
    let [t_drop, t_island, t_jump, t_return] = CANONICAL_TIMES;
    let set = |(p, q): (f64, f64)| EventKind::SetLoad { p, q };
    vec![
        ScenarioEvent::new(t_drop, set(loads.after_drop)),
        ScenarioEvent::new(t_island, EventKind::Island),
        ScenarioEvent::new(t_island, set(loads.island)),
        ScenarioEvent::new(t_jump, set(loads.after_jump)),
        ScenarioEvent::new(t_return, EventKind::GridReturn),
        ScenarioEvent::new(t_return, set(loads.after_drop)),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioSettings {
    pub integrator: IntegratorSettings,
    pub newton: NewtonSettings,
    /// Record every `decimation`-th step.
    pub decimation: usize,
    /// Frame used while islanded.
    pub off_grid_frame: ReferenceFrame,
    /// Settling band as a fraction.
    pub band: f64,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        ScenarioSettings {
            integrator: IntegratorSettings {
                t_end: CANONICAL_T_END,
                ..IntegratorSettings::default()
            },
            newton: NewtonSettings::default(),
            decimation: 10,
            off_grid_frame: ReferenceFrame::Vsi1Anchored,
            band: 0.02,
        }
    }
}

/// Sampled signals. Powers in the `p_1 … q_load` columns are metered at the
/// PCC, so `p_load = i_gs·p_grid + p_1 + p_2` holds sample by sample. The
/// `*_src_*` columns are the source-side powers the droop law acts on.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub p_1: Vec<f64>,
    pub p_2: Vec<f64>,
    pub q_1: Vec<f64>,
    pub q_2: Vec<f64>,
    pub p_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub v_pcc_rms_ll: Vec<f64>,
    pub frequency: Vec<f64>,
    pub i_gs: Vec<u8>,
    pub p_src_1: Vec<f64>,
    pub p_src_2: Vec<f64>,
    pub q_src_1: Vec<f64>,
    pub q_src_2: Vec<f64>,
}

impl TimeSeries {
    pub const COLUMNS: [&'static str; 16] = [
        "t",
        "p_1",
        "p_2",
        "q_1",
        "q_2",
        "p_grid",
        "q_grid",
        "p_load",
        "q_load",
        "v_pcc_rms_ll",
        "frequency",
        "i_gs",
        "p_src_1",
        "p_src_2",
        "q_src_1",
        "q_src_2",
    ];

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn push(&mut self, t: f64, o: &Outputs, status: GridStatus) {
        self.t.push(t);
        self.p_1.push(o.p_pcc[0]);
        self.p_2.push(o.p_pcc[1]);
        self.q_1.push(o.q_pcc[0]);
        self.q_2.push(o.q_pcc[1]);
        self.p_grid.push(o.p_grid);
        self.q_grid.push(o.q_grid);
        self.p_load.push(o.p_load);
        self.q_load.push(o.q_load);
        self.v_pcc_rms_ll.push(o.v_pcc_rms_ll);
        self.frequency.push(o.frequency_hz);
        self.i_gs.push(status.indicator() as u8);
        self.p_src_1.push(o.p[0]);
        self.p_src_2.push(o.p[1]);
        self.q_src_1.push(o.q[0]);
        self.q_src_2.push(o.q[1]);
    }

    /// Column by name (`i_gs` converted to float).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = match name {
            "t" => &self.t,
            "p_1" => &self.p_1,
            "p_2" => &self.p_2,
            "q_1" => &self.q_1,
            "q_2" => &self.q_2,
            "p_grid" => &self.p_grid,
            "q_grid" => &self.q_grid,
            "p_load" => &self.p_load,
            "q_load" => &self.q_load,
            "v_pcc_rms_ll" => &self.v_pcc_rms_ll,
            "frequency" => &self.frequency,
            "p_src_1" => &self.p_src_1,
            "p_src_2" => &self.p_src_2,
            "q_src_1" => &self.q_src_1,
            "q_src_2" => &self.q_src_2,
            "i_gs" => return Some(self.i_gs.iter().map(|&v| v as f64).collect()),
            _ => return None,
        };
        Some(c.clone())
    }

    pub fn from_trajectory(tr: &Trajectory<SystemModel>) -> Result<TimeSeries> {
        let mut ts = TimeSeries::default();
        for ((t, x), &seg) in tr.t.iter().zip(&tr.x).zip(&tr.segment) {
            let model = &tr.fields[seg];
            let state = SystemState {
                mode: model.mode(),
                values: x.clone(),
            };
            ts.push(*t, &model.outputs(&state)?, model.status);
        }
        Ok(ts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettlingMetric {
    pub signal: String,
    pub event_t: f64,
    /// Seconds after the event; `None` if the signal never settles in the window.
    pub settling_time: Option<f64>,
    pub band: f64,
    pub steady_value: f64,
    pub window_end: f64,
}

/// Shortest analysis window accepted by [`settling_time`].
pub const MIN_SETTLING_WINDOW: f64 = 0.5;
/// Length of the tail averaged for the final value.
pub const FINAL_WINDOW: f64 = 0.1;

/// Time after `event_t` beyond which `y` stays within
/// `band·max(|y_final|, |y_final − y_pre|, floor)` of its final value, where
/// `y_final` averages the last [`FINAL_WINDOW`] seconds before `window_end`
/// and `y_pre` is the last sample before the event.
pub fn settling_time(
    signal: &str,
    t: &[f64],
    y: &[f64],
    event_t: f64,
    window_end: f64,
    band: f64,
    floor: f64,
) -> Result<SettlingMetric> {
    if t.len() != y.len() {
        return Err(Error::Settling("time and signal lengths differ".into()));
    }
    if !(window_end - event_t >= MIN_SETTLING_WINDOW - 1e-12) {
        return Err(Error::Settling(format!(
            "window after t = {event_t} is shorter than {MIN_SETTLING_WINDOW} s"
        )));
    }
    let last = t.last().copied().unwrap_or(f64::NEG_INFINITY);
    if last < window_end - 1e-9 && last - event_t < MIN_SETTLING_WINDOW - 1e-12 {
        return Err(Error::Settling(format!(
            "series ends at {last}, less than {MIN_SETTLING_WINDOW} s after t = {event_t}"
        )));
    }
    let idx: Vec<usize> = (0..t.len())
        .filter(|&k| t[k] >= event_t && t[k] < window_end)
        .collect();
    let t_last = t[*idx.last().expect("non-empty window")];
    let tail: Vec<f64> = idx
        .iter()
        .filter(|&&k| t[k] >= t_last - FINAL_WINDOW)
        .map(|&k| y[k])
        .collect();
    let y_final = tail.iter().sum::<f64>() / tail.len() as f64;
    let y_pre = (0..t.len())
        .rev()
        .find(|&k| t[k] < event_t)
        .map_or(y[idx[0]], |k| y[k]);
    let tol = band * y_final.abs().max((y_final - y_pre).abs()).max(floor);
    let outside = idx.iter().rposition(|&k| !((y[k] - y_final).abs() <= tol));
    let settling = match outside {
        None => Some(0.0),
        Some(pos) if pos + 1 < idx.len() => Some(t[idx[pos + 1]] - event_t),
        Some(_) => None,
    };
    Ok(SettlingMetric {
        signal: signal.to_string(),
        event_t,
        settling_time: settling,
        band,
        steady_value: y_final,
        window_end,
    })
}

/// Signals whose settling is reported after every event.
pub const SETTLING_SIGNALS: [&str; 6] = ["p_1", "p_2", "q_1", "q_2", "v_pcc_rms_ll", "frequency"];

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub series: TimeSeries,
    pub settling: Vec<SettlingMetric>,
    pub initial: SystemState,
    /// Last sampled state and the model active at the end.
    pub final_state: SystemState,
    pub final_model: SystemModel,
    pub status: TrajectoryStatus,
}

fn apply_event(
    model: &SystemModel,
    x: &[f64],
    kind: EventKind,
    off_frame: ReferenceFrame,
) -> Result<(SystemModel, Vec<f64>)> {
    let state = SystemState::new(model.mode(), x.to_vec())?;
    match kind {
        EventKind::SetLoad { p, q } => Ok((model.with_load_power(p, q)?, x.to_vec())),
        EventKind::Island => {
            let next = model.with_status(GridStatus::OffGrid).with_frame(off_frame);
            Ok((next, state.islanded()?.values))
        }
        EventKind::GridReturn => {
            let next = model
                .with_status(GridStatus::OnGrid)
                .with_frame(ReferenceFrame::FixedNominal);
            // ideal re-synchronization: rotate the island so its PCC voltage
            // is in phase with the grid source at θ_g = 0
            let phi = {
                let v = model.pcc_voltage(&state)?;
                v.q.atan2(v.d)
            };
            let mut s = state.clone();
            for i in 0..2 {
                s.set(crate::Field::Theta(i), s.theta(i) - phi);
                s.set_i_o(i, s.i_o(i).rotate(-phi));
            }
            let psi = next.psi_manifold([s.v_r(0), s.v_r(1)]);
            Ok((next, s.reconnected(psi)?.values))
        }
    }
}

/// Simulates `events` starting from the on-grid equilibrium of `model`.
pub fn run_scenario(
    model: &SystemModel,
    events: &[ScenarioEvent],
    settings: &ScenarioSettings,
) -> Result<ScenarioResult> {
    if model.status != GridStatus::OnGrid {
        return Err(Error::Events("scenarios start on-grid".into()));
    }
    let t_end = settings.integrator.t_end;
    validate_events(events, t_end)?;
    let start = model.with_frame(ReferenceFrame::FixedNominal);
    let (x0, _) = solve_state(&start, &start.flat_start(), &settings.newton)?;

    let mut times: Vec<f64> = events.iter().map(|e| e.t).collect();
    times.dedup();
    let off_frame = settings.off_grid_frame;
    let hooks: Vec<EventHook<SystemModel>> = times
        .iter()
        .map(|&t| {
            let group: Vec<EventKind> = events.iter().filter(|e| e.t == t).map(|e| e.kind).collect();
            EventHook::new(t, move |m: &SystemModel, x: &[f64]| {
                let mut cur = (m.clone(), x.to_vec());
                for &kind in &group {
                    cur = apply_event(&cur.0, &cur.1, kind, off_frame)?;
                }
                Ok(cur)
            })
        })
        .collect();

    let tr = integrate(start, x0.values.clone(), &settings.integrator, hooks, settings.decimation)?;
    let series = TimeSeries::from_trajectory(&tr)?;
    let settling = if tr.status == TrajectoryStatus::Completed {
        settling_report(&series, &times, t_end, settings.band)?
    } else {
        Vec::new()
    };
    let final_model = tr.fields[*tr.segment.last().expect("at least one sample")].clone();
    let final_state = SystemState {
        mode: final_model.mode(),
        values: tr.x.last().expect("at least one sample").clone(),
    };
    Ok(ScenarioResult {
        series,
        settling,
        initial: x0,
        final_state,
        final_model,
        status: tr.status,
    })
}

/// Settling of [`SETTLING_SIGNALS`] after each event instant, each window
/// ending at the next instant.
pub fn settling_report(
    series: &TimeSeries,
    times: &[f64],
    t_end: f64,
    band: f64,
) -> Result<Vec<SettlingMetric>> {
    let mut out = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let end = times.get(k + 1).copied().unwrap_or(t_end + 0.5 * f64::EPSILON);
        for name in SETTLING_SIGNALS {
            let y = series.column(name).expect("known column");
            out.push(settling_time(name, &series.t, &y, t, end, band, 0.0)?);
        }
    }
    Ok(out)
}

/// One τ_S run of the islanding study.
#[derive(Debug, Clone)]
pub struct TransitionRun {
    pub tau_s: f64,
    pub series: TimeSeries,
    /// Settling of the source-side `p_1` after the switch.
    pub settling_p1: SettlingMetric,
    /// Newton equilibrium of the islanded system and its outputs.
    pub off_equilibrium: SystemState,
    pub off_outputs: Outputs,
    pub final_state: SystemState,
    pub status: TrajectoryStatus,
}

/// For each τ_S: settle on-grid, island at `t_switch`, run to `t_end` and
/// compare with the off-grid Newton equilibrium. Runs are independent and
/// execute in parallel; a failed τ yields an `Err` in its slot only.
pub fn run_transition_study(
    model: &SystemModel,
    tau_values: &[f64],
    t_switch: f64,
    settings: &ScenarioSettings,
) -> Vec<Result<TransitionRun>> {
    tau_values
        .par_iter()
        .map(|&tau| transition_run(model, tau, t_switch, settings))
        .collect()
}

fn transition_run(
    model: &SystemModel,
    tau: f64,
    t_switch: f64,
    settings: &ScenarioSettings,
) -> Result<TransitionRun> {
    let m = apply_param(model, SweepParam::TauS, tau)?;
    let events = [ScenarioEvent::new(t_switch, EventKind::Island)];
    let res = run_scenario(&m, &events, settings)?;
    if res.status != TrajectoryStatus::Completed {
        return Err(match res.status {
            TrajectoryStatus::Diverged { t, index } => Error::Diverged { t, index },
            TrajectoryStatus::Completed => unreachable!(),
        });
    }
    let off_model = res.final_model.clone();
    let x_init = res.initial.islanded()?;
    let (x_off, _) = solve_state(&off_model, &x_init, &settings.newton)?;
    let off_outputs = off_model.outputs(&x_off)?;
    let settling_p1 = settling_time(
        "p_src_1",
        &res.series.t,
        &res.series.p_src_1,
        t_switch,
        settings.integrator.t_end + 0.5 * f64::EPSILON,
        settings.band,
        0.0,
    )?;
    Ok(TransitionRun {
        tau_s: tau,
        series: res.series,
        settling_p1,
        off_equilibrium: x_off,
        off_outputs,
        final_state: res.final_state,
        status: res.status,
    })
}
