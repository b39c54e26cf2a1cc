//! CSV and manifest writers. Numbers are written with 12 significant digits
//! in exponent form, so identical inputs give identical bytes.

use crate::config::RunConfig;
use crate::error::Result;
use crate::scenario::{SettlingMetric, TimeSeries};
use crate::smallsignal::{EigenSweep, ModeKind, Spectrum};
use crate::state::SystemState;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Environment variable overriding the configured output directory.
pub const OUT_DIR_ENV: &str = "DROOPGRID_OUT_DIR";

/// `--out`, then `$DROOPGRID_OUT_DIR`, then the config.
pub fn resolve_out_dir(cli: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(&config.output_dir),
    }
}

/// Fixed 12-significant-digit formatting. `-0` prints as `0`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return format!("{:.11e}", 0.0);
    }
    format!("{v:.11e}")
}

fn row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let cells: Vec<String> = cells.into_iter().collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

pub fn timeseries_csv(ts: &TimeSeries) -> String {
    let mut s = String::new();
    row(&mut s, TimeSeries::COLUMNS.iter().map(|c| c.to_string()));
    let cols: Vec<Vec<f64>> = TimeSeries::COLUMNS
        .iter()
        .map(|c| ts.column(c).expect("known column"))
        .collect();
    for k in 0..ts.len() {
        row(
            &mut s,
            cols.iter().zip(TimeSeries::COLUMNS).map(|(c, name)| {
                if name == "i_gs" {
                    format!("{}", c[k] as u8)
                } else {
                    fmt_num(c[k])
                }
            }),
        );
    }
    s
}

/// `value, re_lambda_1, im_lambda_1, …, abscissa, status`. Values are in the
/// parameter's SI unit; a failed point leaves its eigenvalue cells empty.
pub fn sweep_csv(sweep: &EigenSweep) -> String {
    let n = sweep.model_order();
    let mut s = String::new();
    let mut head = vec!["value".to_string()];
    for k in 1..=n {
        head.push(format!("re_lambda_{k}"));
        head.push(format!("im_lambda_{k}"));
    }
    head.push("abscissa".into());
    head.push("status".into());
    row(&mut s, head);
    for p in &sweep.points {
        let mut cells = vec![fmt_num(p.value)];
        match &p.spectrum {
            Some(sp) => {
                for e in &sp.eigenvalues {
                    cells.push(fmt_num(e.value.re));
                    cells.push(fmt_num(e.value.im));
                }
                cells.resize(1 + 2 * n, String::new());
                cells.push(fmt_num(sp.abscissa));
                cells.push(if sp.is_stable() { "stable" } else { "unstable" }.into());
            }
            None => {
                cells.resize(2 + 2 * n, String::new());
                cells.push("failed".into());
            }
        }
        row(&mut s, cells);
    }
    s
}

fn kind_name(k: ModeKind) -> &'static str {
    match k {
        ModeKind::Regular => "regular",
        ModeKind::Structural => "structural",
        ModeKind::Reference => "reference",
    }
}

pub fn spectrum_csv(sp: &Spectrum) -> String {
    let mut s = String::from("k,re,im,kind\n");
    for (k, e) in sp.eigenvalues.iter().enumerate() {
        row(
            &mut s,
            [
                (k + 1).to_string(),
                fmt_num(e.value.re),
                fmt_num(e.value.im),
                kind_name(e.kind).into(),
            ],
        );
    }
    s
}

pub fn state_csv(x: &SystemState) -> String {
    let mut s = String::from("field,value\n");
    for (label, v) in x.mode.labels().iter().zip(&x.values) {
        row(&mut s, [label.to_string(), fmt_num(*v)]);
    }
    s
}

pub fn settling_csv(m: &[SettlingMetric]) -> String {
    let mut s = String::from("signal,event_t,settling_time,band,steady_value,window_end\n");
    for r in m {
        row(
            &mut s,
            [
                r.signal.clone(),
                fmt_num(r.event_t),
                r.settling_time.map(fmt_num).unwrap_or_default(),
                fmt_num(r.band),
                fmt_num(r.steady_value),
                fmt_num(r.window_end),
            ],
        );
    }
    s
}

/// Echo of a run: resolved configuration, tool version and frame policy.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub args: Vec<String>,
    pub frame_policy: FramePolicy,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
    pub notes: Vec<&'static str>,
}

#[derive(Debug, Serialize)]
pub struct FramePolicy {
    pub on_grid: &'static str,
    pub off_grid: &'static str,
}

impl<'a> Manifest<'a> {
    pub fn new(subcommand: &'a str, args: Vec<String>, config: &'a RunConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            args,
            frame_policy: FramePolicy {
                on_grid: "fixed_nominal",
                off_grid: config.off_grid_frame.name(),
            },
            config,
            outputs: Vec::new(),
            notes: vec![
                "grid return re-synchronizes ideally: the PCC angle is rotated to zero and grid currents start at zero",
                "timeseries powers p_1..q_load are metered at the PCC; p_src_*/q_src_* are source-side",
            ],
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Writes named files into `dir` (created if needed) plus `manifest.json`.
pub fn write_outputs(dir: &Path, files: &[(String, String)], mut manifest: Manifest) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        manifest.outputs.push(name.clone());
        written.push(p);
    }
    let p = dir.join("manifest.json");
    std::fs::write(&p, manifest.to_json())?;
    written.push(p);
    Ok(written)
}

/// One-line human summary of a spectrum.
pub fn spectrum_summary(sp: &Spectrum) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} eigenvalues, abscissa {:.4e} 1/s, {}",
        sp.eigenvalues.len(),
        sp.abscissa,
        if sp.is_stable() { "stable" } else { "unstable" }
    );
    s
}
