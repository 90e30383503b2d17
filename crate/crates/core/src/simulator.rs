//! Nonlinear time-domain simulation of the closed loop: channel gains driven
//! by the transmitters' frequencies, demodulation into received power, hybrid
//! power and the damped accumulators, all inside one RK4 right-hand side.
//!
//! The state holds carrier-relative angles `δ_m = θ_m − ω₀t` and frequency
//! deviations `Δω_m = ω_m − ω₀`; the carrier cancels in every complex power,
//! so this is the same system seen in a frame rotating at `ω₀`. In
//! [`GainMode::Dynamic`] two reals per factor per directed link follow.

use std::cell::RefCell;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::check_step;
use crate::envelope::ComplexPower;
use crate::network::{ChannelModel, Equilibrium, NetworkGraph};
use crate::phase_locking::hybrid_power;
use crate::rk4::{self, Rk4Scratch};
use crate::{Error, Result};

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Default Jacobian step, a power of two near 1e-6 so that perturbed states
/// are exactly representable.
pub const DEFAULT_JACOBIAN_STEP: f64 = 9.5367431640625e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GainMode {
    /// Channel gains follow their first-order ODEs.
    #[default]
    Dynamic,
    /// Gains pinned to `G(jω_n)` of the transmitter's instantaneous frequency.
    QuasiStatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub node: usize,
    pub delta_theta: f64,
    pub delta_omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub x: Vec<f64>,
}

/// Quantities derived from a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub s_hat: Vec<Complex64>,
    pub w: Vec<f64>,
    /// Total gain per directed link.
    pub gains: Vec<Complex64>,
}

/// The closed-loop ODE of one graph around one equilibrium.
#[derive(Debug)]
pub struct Simulator<'a> {
    graph: &'a NetworkGraph,
    eq: &'a Equilibrium,
    mode: GainMode,
    ln_amp: Vec<f64>,
    offsets: Vec<usize>,
    len: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(graph: &'a NetworkGraph, eq: &'a Equilibrium, mode: GainMode) -> Result<Self> {
        if eq.len() != graph.len() || eq.links.len() != graph.links().len() {
            return Err(Error::Argument("equilibrium does not belong to this graph".into()));
        }
        let n = graph.len();
        let mut offsets = Vec::with_capacity(graph.links().len());
        let mut len = 2 * n;
        for link in graph.links() {
            offsets.push(len);
            if mode == GainMode::Dynamic {
                match graph.link_channel(link) {
                    ChannelModel::Rational(ch) => len += 2 * ch.factors().len(),
                    ChannelModel::Network(_) => {
                        return Err(Error::Argument(
                            "branch-network channels have no factorized gain ODE; use the quasi-static gain mode"
                                .into(),
                        ))
                    }
                }
            }
        }
        Ok(Self {
            graph,
            eq,
            mode,
            ln_amp: eq.angles.iter().map(|a| a.ln_amplitude).collect(),
            offsets,
            len,
        })
    }

    pub fn mode(&self) -> GainMode {
        self.mode
    }

    pub fn state_len(&self) -> usize {
        self.len
    }

    pub fn node_count(&self) -> usize {
        self.graph.len()
    }

    /// Equilibrium state: configured angles, `Δω = 0`, gains at `G(jω₀)`.
    pub fn init_state(&self) -> Result<SystemState> {
        let n = self.node_count();
        let mut x = vec![0.0; self.len];
        for (xm, a) in x[..n].iter_mut().zip(&self.eq.angles) {
            *xm = a.angle;
        }
        if self.mode == GainMode::Dynamic {
            let s0 = J * self.eq.omega0;
            for (link, &off) in self.graph.links().iter().zip(&self.offsets) {
                let ch = self.graph.link_channel(link).as_rational().expect("checked in new");
                for (k, f) in ch.factors().iter().enumerate() {
                    let g = f.residue() / (s0 - f.pole());
                    x[off + 2 * k] = g.re;
                    x[off + 2 * k + 1] = g.im;
                }
            }
        }
        Ok(SystemState { t: 0.0, x })
    }

    /// Applies per-node angle and frequency offsets in place.
    pub fn perturb(&self, state: &mut SystemState, perturbations: &[Perturbation]) -> Result<()> {
        let n = self.node_count();
        for p in perturbations {
            if p.node >= n {
                return Err(Error::Argument(format!("perturbation of missing node {}", p.node)));
            }
            if !p.delta_theta.is_finite() || !p.delta_omega.is_finite() {
                return Err(Error::Argument("perturbations must be finite".into()));
            }
            state.x[p.node] += p.delta_theta;
            state.x[n + p.node] += p.delta_omega;
        }
        Ok(())
    }

    /// Every factor's gain ODE must sit inside the RK4 stability region at the
    /// carrier.
    pub fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Integration(format!("dt must be finite and > 0, got {dt}")));
        }
        if self.mode == GainMode::Dynamic {
            for link in self.graph.links() {
                if let Some(ch) = self.graph.link_channel(link).as_rational() {
                    check_step(ch, J * self.eq.omega0, dt)?;
                }
            }
        }
        Ok(())
    }

    fn link_gains(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        let n = self.node_count();
        let omega0 = self.eq.omega0;
        match self.mode {
            GainMode::Dynamic => Ok(self
                .graph
                .links()
                .iter()
                .zip(&self.offsets)
                .map(|(link, &off)| {
                    let k = self.graph.link_channel(link).as_rational().map_or(0, |c| c.factors().len());
                    (0..k).map(|i| Complex64::new(x[off + 2 * i], x[off + 2 * i + 1])).sum()
                })
                .collect()),
            GainMode::QuasiStatic => {
                if let Some(net) = self.graph.branch_network() {
                    let mut cache: Vec<Option<DMatrix<Complex64>>> = vec![None; n];
                    let mut out = Vec::with_capacity(self.graph.links().len());
                    for link in self.graph.links() {
                        let t = link.transmitter;
                        if cache[t].is_none() {
                            cache[t] = Some(net.eval(J * (omega0 + x[n + t]))?);
                        }
                        out.push(cache[t].as_ref().unwrap()[(link.receiver, t)]);
                    }
                    Ok(out)
                } else {
                    self.graph
                        .links()
                        .iter()
                        .map(|link| {
                            self.graph
                                .link_channel(link)
                                .eval(J * (omega0 + x[n + link.transmitter]))
                        })
                        .collect()
                }
            }
        }
    }

    fn received(&self, x: &[f64], gains: &[Complex64]) -> Vec<Complex64> {
        let mut s_hat = vec![Complex64::new(0.0, 0.0); self.node_count()];
        for (link, g) in self.graph.links().iter().zip(gains) {
            let (m, t) = (link.receiver, link.transmitter);
            let s = Complex64::from_polar((self.ln_amp[t] + self.ln_amp[m]).exp(), x[t] - x[m]);
            s_hat[m] += g * s;
        }
        s_hat
    }

    pub fn observe(&self, x: &[f64]) -> Result<Observation> {
        let gains = self.link_gains(x)?;
        let s_hat = self.received(x, &gains);
        let w = s_hat
            .iter()
            .zip(&self.eq.epsilon)
            .map(|(s, &e)| hybrid_power(ComplexPower(*s), e))
            .collect();
        Ok(Observation { s_hat, w, gains })
    }

    /// Right-hand side of the closed loop.
    pub fn derivative(&self, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let n = self.node_count();
        let obs = self.observe(x)?;
        for (m, node) in self.graph.nodes().iter().enumerate() {
            dx[m] = x[n + m];
            dx[n + m] = (obs.w[m] - self.eq.hybrid[m]) / node.inertia - node.damping * x[n + m];
        }
        if self.mode == GainMode::Dynamic {
            for (link, &off) in self.graph.links().iter().zip(&self.offsets) {
                let ch = self.graph.link_channel(link).as_rational().expect("checked in new");
                let freq = J * (self.eq.omega0 + x[n + link.transmitter]);
                for (k, f) in ch.factors().iter().enumerate() {
                    let g = Complex64::new(x[off + 2 * k], x[off + 2 * k + 1]);
                    let d = (f.pole() - freq) * g + f.residue();
                    dx[off + 2 * k] = d.re;
                    dx[off + 2 * k + 1] = d.im;
                }
            }
        }
        Ok(())
    }

    /// One RK4 step, all couplings evaluated inside every stage.
    pub fn step(&self, state: &mut SystemState, dt: f64, scratch: &mut Rk4Scratch) -> Result<()> {
        let failure = RefCell::new(None);
        rk4::step(&mut state.x, dt, scratch, |x, dx| {
            if let Err(e) = self.derivative(x, dx) {
                dx.iter_mut().for_each(|v| *v = f64::NAN);
                failure.borrow_mut().get_or_insert(e);
            }
        });
        state.t += dt;
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Reason the state counts as diverged, if it does.
    pub fn divergence(&self, x: &[f64]) -> Option<String> {
        let n = self.node_count();
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Some(format!("non-finite state component {i}"));
        }
        let limit = 10.0 * self.eq.omega0;
        (0..n)
            .find(|&m| x[n + m].abs() > limit)
            .map(|m| format!("|ω − ω₀| of node `{}` exceeds {limit}", self.eq.node_ids[m]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub omega0: f64,
    pub dt: f64,
    pub dt_out: f64,
    pub duration: f64,
    pub gain_mode: GainMode,
    pub perturbations: Vec<Perturbation>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub time: f64,
    pub reason: String,
}

/// Uniformly sampled trajectory. Per-sample rows are indexed by node (or by
/// directed link for `gains`, labelled `(receiver, transmitter)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub node_ids: Vec<String>,
    pub links: Vec<(String, String)>,
    pub times: Vec<f64>,
    /// Carrier-relative angle `θ − ω₀t`.
    pub theta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub s_hat: Vec<Vec<Complex64>>,
    pub w: Vec<Vec<f64>>,
    pub gains: Vec<Vec<Complex64>>,
    pub diverged: Option<Divergence>,
    pub metadata: TraceMetadata,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub duration: f64,
    pub dt: f64,
    pub dt_out: f64,
    pub gain_mode: GainMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            duration: 10.0,
            dt: 1e-4,
            dt_out: 1e-3,
            gain_mode: GainMode::Dynamic,
        }
    }
}

/// Simulates from the perturbed equilibrium. Divergence stops the run and is
/// reported in the trace, which then holds the samples before it.
pub fn run(
    graph: &NetworkGraph,
    eq: &Equilibrium,
    perturbations: &[Perturbation],
    opts: &RunOptions,
) -> Result<SimulationTrace> {
    if !(opts.duration > 0.0) || !opts.duration.is_finite() {
        return Err(Error::Argument(format!("duration must be > 0, got {}", opts.duration)));
    }
    if !(opts.dt_out > 0.0) || !opts.dt_out.is_finite() {
        return Err(Error::Argument(format!("dt_out must be > 0, got {}", opts.dt_out)));
    }
    let sim = Simulator::new(graph, eq, opts.gain_mode)?;
    sim.check_dt(opts.dt)?;
    let ratio = opts.dt_out / opts.dt;
    let per_sample = ratio.round();
    if per_sample < 1.0 || (ratio - per_sample).abs() > 1e-9 * ratio {
        return Err(Error::Argument(format!(
            "dt_out = {} must be an integer multiple of dt = {}",
            opts.dt_out, opts.dt
        )));
    }
    let per_sample = per_sample as usize;
    let samples = (opts.duration / opts.dt_out * (1.0 + 1e-12)).floor() as usize;

    let mut state = sim.init_state()?;
    sim.perturb(&mut state, perturbations)?;

    let n = graph.len();
    let mut trace = SimulationTrace {
        node_ids: eq.node_ids.clone(),
        links: graph
            .links()
            .iter()
            .map(|l| (eq.node_ids[l.receiver].clone(), eq.node_ids[l.transmitter].clone()))
            .collect(),
        times: Vec::with_capacity(samples + 1),
        theta: Vec::with_capacity(samples + 1),
        omega: Vec::with_capacity(samples + 1),
        s_hat: Vec::with_capacity(samples + 1),
        w: Vec::with_capacity(samples + 1),
        gains: Vec::with_capacity(samples + 1),
        diverged: None,
        metadata: TraceMetadata {
            omega0: eq.omega0,
            dt: opts.dt,
            dt_out: opts.dt_out,
            duration: opts.duration,
            gain_mode: opts.gain_mode,
            perturbations: perturbations.to_vec(),
            config_hash: None,
        },
    };

    let record = |trace: &mut SimulationTrace, k: usize, x: &[f64]| -> Result<()> {
        let obs = sim.observe(x)?;
        trace.times.push((k * per_sample) as f64 * opts.dt);
        trace.theta.push(x[..n].to_vec());
        trace.omega.push(x[n..2 * n].iter().map(|d| eq.omega0 + d).collect());
        trace.s_hat.push(obs.s_hat);
        trace.w.push(obs.w);
        trace.gains.push(obs.gains);
        Ok(())
    };

    if let Some(reason) = sim.divergence(&state.x) {
        trace.diverged = Some(Divergence { time: 0.0, reason });
        return Ok(trace);
    }
    record(&mut trace, 0, &state.x)?;

    let mut scratch = Rk4Scratch::default();
    let mut steps = 0usize;
    'outer: for k in 1..=samples {
        for _ in 0..per_sample {
            steps += 1;
            let stepped = sim.step(&mut state, opts.dt, &mut scratch);
            let reason = match stepped {
                Err(e) => Some(e.to_string()),
                Ok(()) => sim.divergence(&state.x),
            };
            if let Some(reason) = reason {
                trace.diverged = Some(Divergence {
                    time: steps as f64 * opts.dt,
                    reason,
                });
                break 'outer;
            }
        }
        record(&mut trace, k, &state.x)?;
    }
    Ok(trace)
}

/// Central-difference Jacobian of the full right-hand side at the equilibrium
/// state, step `h·max(1, |x_j|)` per component.
pub fn linearize_numeric(graph: &NetworkGraph, eq: &Equilibrium, h: f64, mode: GainMode) -> Result<DMatrix<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Argument(format!("h must be finite and > 0, got {h}")));
    }
    let sim = Simulator::new(graph, eq, mode)?;
    let x0 = sim.init_state()?.x;
    let len = x0.len();
    let mut jac = DMatrix::zeros(len, len);
    let mut fp = vec![0.0; len];
    let mut fm = vec![0.0; len];
    let mut x = x0.clone();
    for j in 0..len {
        let step = h * x0[j].abs().max(1.0);
        x[j] = x0[j] + step;
        sim.derivative(&x, &mut fp)?;
        x[j] = x0[j] - step;
        sim.derivative(&x, &mut fm)?;
        x[j] = x0[j];
        let width = (x0[j] + step) - (x0[j] - step);
        for i in 0..len {
            jac[(i, j)] = (fp[i] - fm[i]) / width;
        }
    }
    Ok(jac)
}

/// Eigenvalues of a real matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    a.complex_eigenvalues().iter().copied().collect()
}
