//! Command-line front end. `run` does the work and returns what to print, so
//! the binary stays a thin wrapper and tests can drive it directly.

use crate::checks;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::output::{self, fmt_num, Manifest};
use crate::params::GridStatus;
use crate::scenario::{run_scenario, run_transition_study, ScenarioEvent};
use crate::smallsignal::{analyze, find_critical, linspace, parameter_sweep, ModelOrder, SweepParam};
use crate::solver::{solve_state, TrajectoryStatus};
use crate::units::{parse_expecting, to_internal_units};
use clap::{Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "droopgrid", version, about = "Two-inverter droop microgrid: equilibria, spectra, transitions")]
pub struct Cli {
    /// Configuration file; the bundled Fairview configuration when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides $DROOPGRID_OUT_DIR and the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatusArg {
    OnGrid,
    OffGrid,
}

impl From<StatusArg> for GridStatus {
    fn from(s: StatusArg) -> Self {
        match s {
            StatusArg::OnGrid => GridStatus::OnGrid,
            StatusArg::OffGrid => GridStatus::OffGrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Reduced,
    Full,
}

impl From<OrderArg> for ModelOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Reduced => ModelOrder::Reduced,
            OrderArg::Full => ModelOrder::Full,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Newton equilibrium from the flat start.
    Equilibrium {
        #[arg(long, value_enum, default_value = "on-grid")]
        status: StatusArg,
    },
    /// Eigenvalues at the equilibrium.
    Eigen {
        #[arg(long, value_enum, default_value = "on-grid")]
        status: StatusArg,
        #[arg(long, value_enum, default_value = "reduced")]
        order: OrderArg,
    },
    /// Spectrum over a parameter grid, applied to both inverters.
    Sweep {
        /// n, m, m_int, tau_s or x_over_r.
        #[arg(long)]
        param: String,
        /// Bare numbers are in rad/s/kW, V/kVAr, V/s/kVAr or ms; a unit suffix is also accepted.
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, value_enum, default_value = "on-grid")]
        status: StatusArg,
        #[arg(long, value_enum, default_value = "reduced")]
        order: OrderArg,
        /// Also bisect for the value where the abscissa crosses zero.
        #[arg(long)]
        critical: bool,
    },
    /// Islanding study over the configured τ_S values.
    Transition,
    /// Event-driven simulation.
    Scenario {
        /// `canonical`, or a JSON file holding a list of events.
        #[arg(long, default_value = "canonical")]
        events: String,
    },
    /// Analytic checks; nonzero exit if any fails.
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Equilibrium { .. } => "equilibrium",
            Command::Eigen { .. } => "eigen",
            Command::Sweep { .. } => "sweep",
            Command::Transition => "transition",
            Command::Scenario { .. } => "scenario",
            Command::Verify => "verify",
        }
    }
}

/// Result of one invocation.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    /// A check failed or a run diverged.
    pub failed: bool,
}

/// Sweep bound: bare numbers in the display unit, suffixed values checked
/// against the parameter's dimension.
pub fn parse_sweep_value(param: SweepParam, text: &str) -> Result<f64> {
    let (si, display) = param.units();
    let text = text.trim();
    if si.is_empty() {
        return text.parse::<f64>().map_err(|e| Error::Unit {
            text: text.into(),
            msg: e.to_string(),
        });
    }
    if text.parse::<f64>().is_ok() {
        to_internal_units(&format!("{text} {display}"))
    } else {
        parse_expecting(text, si)
    }
}

fn status_tag(s: GridStatus) -> &'static str {
    match s {
        GridStatus::OnGrid => "on_grid",
        GridStatus::OffGrid => "off_grid",
    }
}

fn order_tag(o: ModelOrder) -> &'static str {
    match o {
        ModelOrder::Reduced => "reduced",
        ModelOrder::Full => "full",
    }
}

pub fn run(cli: &Cli, args: Vec<String>) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::fairview(),
    };
    let dir = output::resolve_out_dir(cli.out.as_deref(), &cfg);
    let mut out = Outcome::default();
    let mut files: Vec<(String, String)> = Vec::new();
    let s = &mut out.summary;

    match &cli.command {
        Command::Equilibrium { status } => {
            let status = GridStatus::from(*status);
            let m = cfg.model(status)?;
            let (x, rep) = solve_state(&m, &m.flat_start(), &cfg.newton)?;
            let o = m.outputs(&x)?;
            let _ = writeln!(s, "{} equilibrium: {} iterations, residual {:.2e}", status_tag(status), rep.iterations, rep.residual);
            let _ = writeln!(s, "  P = [{:.3}, {:.3}] W, Q = [{:.3}, {:.3}] var", o.p[0], o.p[1], o.q[0], o.q[1]);
            let _ = writeln!(s, "  P_grid = {:.3} W, P_load = {:.3} W", o.p_grid, o.p_load);
            let _ = writeln!(s, "  V_PCC = {:.3} V (line RMS), f = {:.5} Hz", o.v_pcc_rms_ll, o.frequency_hz);
            files.push((format!("equilibrium_{}.csv", status_tag(status)), output::state_csv(&x)));
        }
        Command::Eigen { status, order } => {
            let (status, order) = (GridStatus::from(*status), ModelOrder::from(*order));
            let a = analyze(&cfg.model(status)?, order, &cfg.newton)?;
            let _ = writeln!(s, "{} {}: {}", status_tag(status), order_tag(order), output::spectrum_summary(&a.spectrum));
            for e in &a.spectrum.eigenvalues {
                let _ = writeln!(s, "  {:>12.4} {:+12.4}i  {:?}", e.value.re, e.value.im, e.kind);
            }
            files.push((
                format!("spectrum_{}_{}.csv", status_tag(status), order_tag(order)),
                output::spectrum_csv(&a.spectrum),
            ));
        }
        Command::Sweep {
            param,
            from,
            to,
            points,
            status,
            order,
            critical,
        } => {
            let param = SweepParam::parse(param)?;
            let (lo, hi) = (parse_sweep_value(param, from)?, parse_sweep_value(param, to)?);
            let (status, order) = (GridStatus::from(*status), ModelOrder::from(*order));
            let template = cfg.model(status)?;
            let sweep = parameter_sweep(&template, param, &linspace(lo, hi, *points), order, &cfg.newton)?;
            let failed = sweep.points.iter().filter(|p| p.spectrum.is_none()).count();
            let unstable = sweep.abscissae().iter().flatten().filter(|a| **a >= 0.0).count();
            let _ = writeln!(
                s,
                "{} sweep of {} from {} to {} ({} points): {} unstable, {} failed",
                order_tag(order),
                param.name(),
                fmt_num(lo),
                fmt_num(hi),
                points,
                unstable,
                failed
            );
            files.push((format!("sweep_{}.csv", param.name()), output::sweep_csv(&sweep)));
            if *critical {
                match find_critical(&template, param, lo, hi, order, &cfg.newton) {
                    Ok(c) => {
                        let _ = writeln!(s, "critical {} = {} ({} evaluations)", param.name(), fmt_num(c.crossing.value), c.crossing.evaluations);
                        files.push((
                            format!("critical_{}.csv", param.name()),
                            format!("parameter,value,lo,hi\n{},{},{},{}\n", param.name(), fmt_num(c.crossing.value), fmt_num(c.crossing.lo), fmt_num(c.crossing.hi)),
                        ));
                    }
                    Err(e) => {
                        let _ = writeln!(s, "critical {}: {e}", param.name());
                        out.failed = true;
                    }
                }
            }
        }
        Command::Transition => {
            let model = cfg.transition_model()?;
            let t = &cfg.transition;
            let settings = cfg.scenario_settings(t.t_end);
            let runs = run_transition_study(&model, &t.tau_s, t.t_switch, &settings);
            let mut table = String::from("tau_s,settling_p1,p_1_end,p_1_eq,q_1_end,q_1_eq,status\n");
            for (tau, r) in t.tau_s.iter().zip(runs) {
                match r {
                    Ok(r) => {
                        let n = r.series.len() - 1;
                        let ok = r.status == TrajectoryStatus::Completed;
                        out.failed |= !ok;
                        let _ = writeln!(
                            s,
                            "tau_s = {:.1} ms: p_1 settles in {}",
                            tau * 1e3,
                            r.settling_p1.settling_time.map_or("(not settled)".into(), |v| format!("{:.2} ms", v * 1e3))
                        );
                        let _ = writeln!(
                            table,
                            "{},{},{},{},{},{},{}",
                            fmt_num(*tau),
                            r.settling_p1.settling_time.map(fmt_num).unwrap_or_default(),
                            fmt_num(r.series.p_src_1[n]),
                            fmt_num(r.off_outputs.p[0]),
                            fmt_num(r.series.q_src_1[n]),
                            fmt_num(r.off_outputs.q[0]),
                            if ok { "completed" } else { "diverged" }
                        );
                        files.push((format!("transition_tau_{:.1}ms.csv", tau * 1e3), output::timeseries_csv(&r.series)));
                    }
                    Err(e) => {
                        out.failed = true;
                        let _ = writeln!(s, "tau_s = {:.1} ms: {e}", tau * 1e3);
                        let _ = writeln!(table, "{},,,,,,failed", fmt_num(*tau));
                    }
                }
            }
            files.push(("transition_summary.csv".into(), table));
        }
        Command::Scenario { events } => {
            let (events, t_end) = if events == "canonical" {
                (cfg.scenario_events(), cfg.scenario.t_end)
            } else {
                let text = std::fs::read_to_string(events)
                    .map_err(|e| Error::config(events.as_str(), format!("cannot read: {e}")))?;
                let ev: Vec<ScenarioEvent> = serde_json::from_str(&text)
                    .map_err(|e| Error::config(events.as_str(), e.to_string()))?;
                (ev, cfg.scenario.t_end)
            };
            let model = cfg.model(GridStatus::OnGrid)?;
            let r = run_scenario(&model, &events, &cfg.scenario_settings(t_end))?;
            if let TrajectoryStatus::Diverged { t, .. } = r.status {
                out.failed = true;
                let _ = writeln!(s, "diverged at t = {t:.6} s; writing the prefix");
            }
            let _ = writeln!(s, "{} samples, {} events", r.series.len(), events.len());
            for m in &r.settling {
                let _ = writeln!(
                    s,
                    "  t = {:.2} s {:<13} {}",
                    m.event_t,
                    m.signal,
                    m.settling_time.map_or("not settled".into(), |v| format!("{:.1} ms", v * 1e3))
                );
            }
            files.push(("scenario.csv".into(), output::timeseries_csv(&r.series)));
            files.push(("settling.csv".into(), output::settling_csv(&r.settling)));
        }
        Command::Verify => {
            let results = checks::run_all(&cfg)?;
            let mut table = String::from("check,pass,detail\n");
            for c in &results {
                let _ = writeln!(s, "{c}");
                let _ = writeln!(table, "\"{}\",{},\"{}\"", c.name, c.pass, c.detail.replace('"', "'"));
                out.failed |= !c.pass;
            }
            files.push(("verify.csv".into(), table));
        }
    }

    let manifest = Manifest::new(cli.command.name(), args, &cfg);
    out.files = output::write_outputs(&dir, &files, manifest)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_bounds_use_display_units() {
        let v = parse_sweep_value(SweepParam::N, "1.04e-2").unwrap();
        assert!((v - 1.04e-5).abs() < 1e-18);
        let v = parse_sweep_value(SweepParam::TauS, "33").unwrap();
        assert!((v - 0.033).abs() < 1e-15);
        let v = parse_sweep_value(SweepParam::TauS, "0.033 s").unwrap();
        assert!((v - 0.033).abs() < 1e-15);
        assert!(parse_sweep_value(SweepParam::TauS, "33 kW").is_err());
        assert_eq!(parse_sweep_value(SweepParam::XOverR, "3").unwrap(), 3.0);
    }

    #[test]
    fn parses_spec_style_sweep_flags() {
        let cli = Cli::try_parse_from([
            "droopgrid", "sweep", "--param", "n", "--from", "1.04e-2", "--to", "3.64e-2", "--points", "50",
        ])
        .unwrap();
        assert_eq!(cli.command.name(), "sweep");
    }
}
