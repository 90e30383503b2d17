//! Small-gain synchronization criterion.
//!
//! With modal eigenvalues `ξ_m` of `K_H` and inertia dynamics `T(s)`, the
//! system is certified stable when
//! `ζ_m = inf_{Re s > 0} |(ξ_m + s/T(s))/s| > σ_max(Γ_HΦ)` for every mode.
//! The criterion is sufficient only; failing it certifies nothing.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::{build_model, Equilibrium, NetworkGraph, SynchronizationModel};
use crate::phase_locking::InertiaDynamics;
use crate::{Error, Result};

type CMat = DMatrix<Complex64>;

const J: Complex64 = Complex64::new(0.0, 1.0);
const GOLDEN_TOL: f64 = 1e-6;

/// Logarithmic boundary grid `ω ∈ ±[omega_lo, omega_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencyGrid {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            omega_lo: 1e-4,
            omega_hi: 1e6,
            points: 2000,
        }
    }
}

impl FrequencyGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_lo > 0.0 && self.omega_hi > self.omega_lo && self.omega_hi.is_finite()) {
            return Err(Error::Argument(format!(
                "frequency grid needs 0 < omega_lo < omega_hi, got [{}, {}]",
                self.omega_lo, self.omega_hi
            )));
        }
        if self.points < 2 {
            return Err(Error::Argument("frequency grid needs at least 2 points".into()));
        }
        Ok(())
    }

    /// Positive grid frequencies, ascending.
    pub fn omegas(&self) -> Vec<f64> {
        let (l0, l1) = (self.omega_lo.ln(), self.omega_hi.ln());
        (0..self.points)
            .map(|k| (l0 + (l1 - l0) * k as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

/// `φ(s) = (ξ + s/T(s))/s = ξ/s + 1/T(s)`.
pub fn phi(xi: Complex64, t: &InertiaDynamics, s: Complex64) -> Complex64 {
    xi / s + t.inverse(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaResult {
    pub zeta: f64,
    /// Boundary point attaining the minimum (`s = 0` for the low-frequency
    /// limit of the synchronous mode).
    pub argmin: Complex64,
    /// `ξ + s/T(s)` has a zero strictly inside the right half plane, so the
    /// infimum over the open half plane is zero.
    pub interior_zero: bool,
}

/// `ζ = inf_{Re s > 0} |φ(s)|`, evaluated on the boundary `s = jω`.
///
/// `φ` is analytic in the open right half plane, so without zeros there its
/// modulus infimum lies on the boundary (including the `s → 0` and `|s| → ∞`
/// limits). Zeros inside are counted with the argument principle; if any are
/// found `ζ = 0`.
pub fn zeta(xi: Complex64, t: &InertiaDynamics, grid: &FrequencyGrid) -> Result<ZetaResult> {
    grid.validate()?;
    if !(xi.re.is_finite() && xi.im.is_finite()) {
        return Err(Error::Domain(format!("mode eigenvalue must be finite, got {xi}")));
    }
    let omegas = grid.omegas();
    let modulus = |w: f64| phi(xi, t, J * w).norm();

    let mut best = ZetaResult {
        zeta: f64::INFINITY,
        argmin: Complex64::new(0.0, 0.0),
        interior_zero: false,
    };
    for sign in [1.0, -1.0] {
        let values: Vec<f64> = omegas.iter().map(|&w| modulus(sign * w)).collect();
        let i = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let lo = omegas[i.saturating_sub(1)];
        let hi = omegas[(i + 1).min(omegas.len() - 1)];
        let (w, v) = golden_section(|w| modulus(sign * w), lo, hi, GOLDEN_TOL);
        let (w, v) = if values[i] < v { (omegas[i], values[i]) } else { (w, v) };
        if v < best.zeta {
            best.zeta = v;
            best.argmin = J * (sign * w);
        }
    }

    // s → 0: |φ| → |1/T(0)| when ξ = 0, otherwise unbounded. |s| → ∞: unbounded.
    if xi == Complex64::new(0.0, 0.0) {
        let limit = t.inverse(Complex64::new(0.0, 0.0)).norm();
        if limit <= best.zeta {
            best.zeta = limit;
            best.argmin = Complex64::new(0.0, 0.0);
        }
    }

    if best.zeta > 1e-12 * (1.0 + xi.norm() + t.damping()) {
        let zeros = right_half_plane_zeros(|s| xi + s * t.inverse(s), 2.0 * (1.0 + xi.norm() + t.damping()));
        if zeros > 0 {
            best.zeta = 0.0;
            best.interior_zero = true;
        }
    }
    Ok(best)
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]` to relative
/// tolerance `tol`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo) > tol * 0.5 * (hi + lo).abs() {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Winding number of `f` around the right half disc of radius `radius`,
/// i.e. the number of zeros of an analytic `f` inside it. `f` must not vanish
/// on the contour.
pub fn right_half_plane_zeros<F: Fn(Complex64) -> Complex64>(f: F, radius: f64) -> i64 {
    // counter-clockwise: down the imaginary axis, then the arc from −jR to jR
    let axis = |u: f64| J * (radius * (1.0 - 2.0 * u));
    let arc = |u: f64| Complex64::from_polar(radius, -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * u);
    let total = winding(&f, &axis, 0.0, 1.0, 0) + winding(&f, &arc, 0.0, 1.0, 0);
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}

fn winding<F, P>(f: &F, path: &P, u0: f64, u1: f64, depth: u32) -> f64
where
    F: Fn(Complex64) -> Complex64,
    P: Fn(f64) -> Complex64,
{
    const PIECES: usize = 256;
    let mut total = 0.0;
    let mut prev = f(path(u0));
    for k in 1..=PIECES {
        let ua = u0 + (u1 - u0) * (k - 1) as f64 / PIECES as f64;
        let ub = u0 + (u1 - u0) * k as f64 / PIECES as f64;
        let next = f(path(ub));
        let step = (next / prev).arg();
        total += if step.abs() > std::f64::consts::FRAC_PI_4 && depth < 12 {
            winding(f, path, ua, ub, depth + 1)
        } else {
            step
        };
        prev = next;
    }
    total
}

/// Largest singular value.
pub fn sigma_max(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// `[Γ_HΦ] (1/T(s) I + diag(ξ)/s)⁻¹`.
pub fn loop_gain(model: &SynchronizationModel, t: &InertiaDynamics, s: Complex64) -> Result<CMat> {
    if s == Complex64::new(0.0, 0.0) {
        return Err(Error::Argument("loop gain is undefined at s = 0".into()));
    }
    let n = model.len();
    let mut out = model.gamma_h_phi.clone();
    for m in 0..n {
        let inv_t = t.inverse(s);
        let d = inv_t + model.xi[m] / s;
        if d.norm() <= 1e-14 * (inv_t.norm() + (model.xi[m] / s).norm()) {
            return Err(Error::Resonance {
                mode: m,
                s: s.to_string(),
            });
        }
        for r in 0..n {
            out[(r, m)] /= d;
        }
    }
    Ok(out)
}

/// `sup_ω ‖loop_gain(jω)‖₂` over both signs of the grid; resonant points are
/// reported as infinite.
pub fn loop_gain_sup(model: &SynchronizationModel, t: &InertiaDynamics, grid: &FrequencyGrid) -> f64 {
    let mut sup: f64 = 0.0;
    for w in grid.omegas() {
        for sign in [1.0, -1.0] {
            sup = sup.max(match loop_gain(model, t, J * (sign * w)) {
                Ok(l) => sigma_max(&l),
                Err(_) => f64::INFINITY,
            });
        }
    }
    sup
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    CertifiedStable,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub index: usize,
    pub xi: Complex64,
    pub zeta: f64,
    pub argmin: Complex64,
    pub pass: bool,
    pub synchronous: bool,
    pub interior_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub modes: Vec<ModeReport>,
    pub sigma_max: f64,
    /// `min_m ζ_m − σ_max`.
    pub margin: f64,
    /// `max_m ζ_m − σ_max`.
    pub margin_zeta_max: f64,
    pub verdict: Verdict,
    pub damping: f64,
    /// Boundary samples `−s/T(s)`, `s = jω`, of the forbidden region.
    pub forbidden_region_samples: Vec<Complex64>,
    pub warnings: Vec<String>,
}

/// Runs `ζ` for every mode (in parallel), `σ_max`, the margin and the verdict.
pub fn evaluate_criterion(
    model: &SynchronizationModel,
    t: &InertiaDynamics,
    grid: &FrequencyGrid,
) -> Result<StabilityReport> {
    // K_H has zero row sums, so the synchronous eigenvalue is exactly zero;
    // the computed one only carries rounding, which must not be taken for a
    // root in the right half plane.
    let xi_eval: Vec<Complex64> = (0..model.len())
        .map(|m| {
            if model.synchronous_mode == Some(m) {
                Complex64::new(0.0, 0.0)
            } else {
                model.xi[m]
            }
        })
        .collect();
    let zetas: Vec<ZetaResult> = xi_eval
        .par_iter()
        .map(|&xi| zeta(xi, t, grid))
        .collect::<Result<Vec<_>>>()?;
    let sigma = model.sigma_max();

    let mut warnings = Vec::new();
    let modes: Vec<ModeReport> = zetas
        .iter()
        .enumerate()
        .map(|(m, z)| {
            if z.interior_zero {
                warnings.push(format!(
                    "mode {m}: ξ + s/T(s) has a zero in the open right half plane; ζ set to 0"
                ));
            }
            ModeReport {
                index: m,
                xi: model.xi[m],
                zeta: z.zeta,
                argmin: z.argmin,
                pass: z.zeta > sigma,
                synchronous: model.synchronous_mode == Some(m),
                interior_zero: z.interior_zero,
            }
        })
        .collect();

    let zeta_min = modes.iter().map(|m| m.zeta).fold(f64::INFINITY, f64::min);
    let zeta_max = modes.iter().map(|m| m.zeta).fold(f64::NEG_INFINITY, f64::max);
    let verdict = if modes.iter().all(|m| m.pass) {
        Verdict::CertifiedStable
    } else {
        Verdict::NotCertified
    };

    Ok(StabilityReport {
        modes,
        sigma_max: sigma,
        margin: zeta_min - sigma,
        margin_zeta_max: zeta_max - sigma,
        verdict,
        damping: t.damping(),
        forbidden_region_samples: forbidden_region(model, t, grid),
        warnings,
    })
}

fn forbidden_region(model: &SynchronizationModel, t: &InertiaDynamics, grid: &FrequencyGrid) -> Vec<Complex64> {
    let xi_max = model.xi.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let hi = grid.omega_hi.min(10.0 * (1.0 + xi_max.sqrt() + t.damping()));
    let lo = grid.omega_lo.min(hi * 0.5);
    let samples = FrequencyGrid {
        omega_lo: lo,
        omega_hi: hi,
        points: 200,
    }
    .omegas();
    samples
        .iter()
        .rev()
        .map(|&w| -w)
        .chain(samples.iter().copied())
        .map(|w| {
            let s = J * w;
            -s * t.inverse(s)
        })
        .collect()
}

/// One row of the boundary sweep: `|φ_m(jω)|` per mode, the loop-gain norm
/// and the forbidden-region boundary point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub phi_modulus: Vec<f64>,
    pub loop_gain_norm: f64,
    pub forbidden: Complex64,
}

pub fn boundary_sweep(model: &SynchronizationModel, t: &InertiaDynamics, grid: &FrequencyGrid) -> Vec<SweepRow> {
    let omegas = grid.omegas();
    omegas
        .iter()
        .rev()
        .map(|&w| -w)
        .chain(omegas.iter().copied())
        .map(|w| {
            let s = J * w;
            SweepRow {
                omega: w,
                phi_modulus: model.xi.iter().map(|&xi| phi(xi, t, s).norm()).collect(),
                loop_gain_norm: loop_gain(model, t, s).map(|l| sigma_max(&l)).unwrap_or(f64::INFINITY),
                forbidden: -s * t.inverse(s),
            }
        })
        .collect()
}

/// Equilibrium, model and criterion for a graph.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub equilibrium: Equilibrium,
    pub model: SynchronizationModel,
    pub dynamics: InertiaDynamics,
    pub report: StabilityReport,
}

/// Builds the model and evaluates the criterion. The criterion shares one
/// `T(s) = 1/(s + D)` across nodes; with heterogeneous node damping the
/// smallest `D` is used and a warning is attached.
pub fn analyze(graph: &NetworkGraph, omega0: f64, grid: &FrequencyGrid) -> Result<Analysis> {
    let (equilibrium, model) = build_model(graph, omega0)?;
    let dampings: Vec<f64> = graph.nodes().iter().map(|n| n.damping).collect();
    let d_min = dampings.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = dampings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dynamics = InertiaDynamics::new(if d_min.is_finite() { d_min } else { 0.0 })?;
    let mut report = evaluate_criterion(&model, &dynamics, grid)?;

    if d_max > d_min {
        report.warnings.push(format!(
            "node damping differs ({d_min} to {d_max}); per-node inertia dynamics are unsupported \
             by the criterion, evaluated with the shared D = {d_min}"
        ));
    }
    for (m, node) in graph.nodes().iter().enumerate() {
        if node.self_channel.is_none() {
            report
                .warnings
                .push(format!("node `{}`: no self-channel, Γ[{m}][{m}] = 0", node.id));
        }
    }
    Ok(Analysis {
        equilibrium,
        model,
        dynamics,
        report,
    })
}
