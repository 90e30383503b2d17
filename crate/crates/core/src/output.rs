//! Deterministic report and trace emission.
//!
//! JSON floats are always written with 17 significant digits and non-finite
//! values as `null`; struct field order is fixed, so identical inputs give
//! byte-identical output.

use std::fmt::Write as _;
use std::io;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::network::{Equilibrium, SynchronizationModel};
use crate::simulator::SimulationTrace;
use crate::stability::{Analysis, ModeReport, SweepRow, Verdict};
use crate::{Error, Result};

struct FixedDigits<'a>(PrettyFormatter<'a>);

fn write_float<W: ?Sized + io::Write>(w: &mut W, v: f64) -> io::Result<()> {
    if v.is_finite() {
        write!(w, "{v:.16e}")
    } else {
        w.write_all(b"null")
    }
}

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write_float(w, v)
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write_float(w, v as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with fixed 17-significant-digit floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Argument(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn rows_real(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn rows_complex(m: &nalgebra::DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
pub struct NodeOperatingPoint {
    pub id: String,
    pub amplitude: f64,
    pub angle: f64,
    pub epsilon: f64,
    pub received_power: Complex64,
    pub hybrid_power: f64,
}

fn operating_points(eq: &Equilibrium) -> Vec<NodeOperatingPoint> {
    (0..eq.len())
        .map(|m| NodeOperatingPoint {
            id: eq.node_ids[m].clone(),
            amplitude: eq.angles[m].amplitude(),
            angle: eq.angles[m].angle,
            epsilon: eq.epsilon[m],
            received_power: eq.received[m].0,
            hybrid_power: eq.hybrid[m],
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub config_hash: String,
    pub omega0: f64,
    pub verdict: Verdict,
    pub margin: f64,
    pub margin_zeta_max: f64,
    pub sigma_max: f64,
    pub damping: f64,
    pub modes: Vec<ModeReport>,
    pub nodes: Vec<NodeOperatingPoint>,
    pub k: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub forbidden_region_samples: Vec<Complex64>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn new(analysis: &Analysis, config_hash: &str) -> Self {
        let r = &analysis.report;
        Self {
            config_hash: config_hash.to_string(),
            omega0: analysis.equilibrium.omega0,
            verdict: r.verdict,
            margin: r.margin,
            margin_zeta_max: r.margin_zeta_max,
            sigma_max: r.sigma_max,
            damping: r.damping,
            modes: r.modes.clone(),
            nodes: operating_points(&analysis.equilibrium),
            k: rows_real(&analysis.model.k),
            gamma: rows_real(&analysis.model.gamma),
            forbidden_region_samples: r.forbidden_region_samples.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ModesReport {
    pub config_hash: String,
    pub node_ids: Vec<String>,
    pub xi: Vec<Complex64>,
    pub synchronous_mode: Option<usize>,
    pub phi_condition: f64,
    pub eigen_residual: f64,
    pub gamma_residual: f64,
    /// `participation[n][m] = |Φ_nm|`.
    pub participation: Vec<Vec<f64>>,
    pub gamma_h_phi: Vec<Vec<Complex64>>,
    pub sigma_max: f64,
}

impl ModesReport {
    pub fn new(eq: &Equilibrium, model: &SynchronizationModel, config_hash: &str) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            node_ids: eq.node_ids.clone(),
            xi: model.xi.clone(),
            synchronous_mode: model.synchronous_mode,
            phi_condition: model.phi_condition,
            eigen_residual: model.eigen_residual,
            gamma_residual: model.gamma_residual,
            participation: rows_real(&model.participation()),
            gamma_h_phi: rows_complex(&model.gamma_h_phi),
            sigma_max: model.sigma_max(),
        }
    }
}

/// Trace as CSV: `#` metadata lines, a column header and one row per sample.
/// A divergence is noted both in the header and as a final comment line.
pub fn trace_csv(trace: &SimulationTrace) -> String {
    let mut out = String::new();
    let md = &trace.metadata;
    let _ = writeln!(out, "# syncscope simulation trace");
    if let Some(h) = &md.config_hash {
        let _ = writeln!(out, "# config_hash: {h}");
    }
    let _ = writeln!(
        out,
        "# omega0: {}\n# dt: {}\n# dt_out: {}\n# duration: {}\n# gain_mode: {:?}",
        md.omega0, md.dt, md.dt_out, md.duration, md.gain_mode
    );
    for p in &md.perturbations {
        let _ = writeln!(
            out,
            "# perturbation: node={} delta_theta={} delta_omega={}",
            trace.node_ids[p.node], p.delta_theta, p.delta_omega
        );
    }
    let _ = writeln!(
        out,
        "# columns: t [s]; per node theta (carrier-relative) [rad], omega [rad/s], W, S_re, S_im [pu]; \
         per directed link g_re, g_im (receiver_transmitter)"
    );
    match &trace.diverged {
        Some(d) => {
            let _ = writeln!(out, "# diverged: t={} reason={}", d.time, d.reason);
        }
        None => {
            let _ = writeln!(out, "# diverged: no");
        }
    }

    let mut header = vec!["t".to_string()];
    for id in &trace.node_ids {
        for q in ["theta", "omega", "W", "S_re", "S_im"] {
            header.push(format!("{q}_{id}"));
        }
    }
    for (rx, tx) in &trace.links {
        header.push(format!("g_re_{rx}_{tx}"));
        header.push(format!("g_im_{rx}_{tx}"));
    }
    out.push_str(&header.join(","));
    out.push('\n');

    for k in 0..trace.len() {
        let mut row = vec![trace.times[k].to_string()];
        for m in 0..trace.node_ids.len() {
            row.push(trace.theta[k][m].to_string());
            row.push(trace.omega[k][m].to_string());
            row.push(trace.w[k][m].to_string());
            row.push(trace.s_hat[k][m].re.to_string());
            row.push(trace.s_hat[k][m].im.to_string());
        }
        for g in &trace.gains[k] {
            row.push(g.re.to_string());
            row.push(g.im.to_string());
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    if let Some(d) = &trace.diverged {
        let _ = writeln!(out, "# DIVERGED at t={}", d.time);
    }
    out
}

/// Boundary sweep as CSV: `|φ_m(jω)|` per mode, the loop-gain norm and the
/// forbidden-region boundary `−jω/T(jω)`.
pub fn sweep_csv(rows: &[SweepRow], config_hash: &str, damping: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# syncscope boundary sweep");
    let _ = writeln!(out, "# config_hash: {config_hash}");
    let _ = writeln!(out, "# damping: {damping}");
    let _ = writeln!(
        out,
        "# columns: omega [rad/s]; |phi_m(j omega)| per mode; loop gain 2-norm; forbidden region boundary re, im"
    );
    let modes = rows.first().map_or(0, |r| r.phi_modulus.len());
    let mut header = vec!["omega".to_string()];
    header.extend((0..modes).map(|m| format!("phi_{m}")));
    header.extend(["loop_gain".to_string(), "forbidden_re".into(), "forbidden_im".into()]);
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let mut row = vec![r.omega.to_string()];
        row.extend(r.phi_modulus.iter().map(|v| v.to_string()));
        row.push(r.loop_gain_norm.to_string());
        row.push(r.forbidden.re.to_string());
        row.push(r.forbidden.im.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
