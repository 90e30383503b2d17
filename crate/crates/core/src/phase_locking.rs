//! Unified phase locking through hybrid power `W = Re(e^{−jε} Ŝ)`.
//!
//! `ε = 0` gives real-power locking (synchronous-machine-like real inertia),
//! `ε = π/2` reactive-power locking (PLL-like reactive inertia). The
//! accumulator of `W − W*` is a damped hybrid inertia with dynamics
//! `T(s) = 1/(s + D)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::envelope::ComplexPower;
use crate::network::Equilibrium;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLockConfig {
    /// Displacement angle, normalized into [0, 2π).
    pub epsilon: f64,
    pub inertia: f64,
    pub damping: f64,
    pub setpoint: f64,
}

impl PhaseLockConfig {
    pub fn new(epsilon: f64, inertia: f64, damping: f64, setpoint: f64) -> Result<Self> {
        if !(inertia > 0.0) || !inertia.is_finite() {
            return Err(Error::Domain(format!("inertia must be > 0, got {inertia}")));
        }
        if !(damping >= 0.0) || !damping.is_finite() {
            return Err(Error::Domain(format!("damping must be >= 0, got {damping}")));
        }
        if !epsilon.is_finite() || !setpoint.is_finite() {
            return Err(Error::Domain("epsilon and setpoint must be finite".into()));
        }
        Ok(Self {
            epsilon: normalize_epsilon(epsilon),
            inertia,
            damping,
            setpoint,
        })
    }
}

pub fn normalize_epsilon(epsilon: f64) -> f64 {
    let e = epsilon.rem_euclid(2.0 * PI);
    if e >= 2.0 * PI {
        0.0
    } else {
        e
    }
}

/// Damped accumulator `T(s) = 1/(s + D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaDynamics {
    damping: f64,
}

impl InertiaDynamics {
    /// `D < 0` puts the pole of `T` in the right half plane and is rejected.
    pub fn new(damping: f64) -> Result<Self> {
        if !damping.is_finite() || damping < 0.0 {
            return Err(Error::UnsupportedDynamics(format!(
                "T(s) = 1/(s + D) with D = {damping} has a right-half-plane pole"
            )));
        }
        Ok(Self { damping })
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// `T(s)`.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        1.0 / (s + self.damping)
    }

    /// `1/T(s) = s + D`.
    pub fn inverse(&self, s: Complex64) -> Complex64 {
        s + self.damping
    }
}

/// `(cos ε, sin ε)`, exact at the quarter turns so that pure real or
/// reactive locking carries no rounding residue of the other component.
pub fn displacement(epsilon: f64) -> (f64, f64) {
    let e = normalize_epsilon(epsilon);
    if e == 0.0 {
        (1.0, 0.0)
    } else if e == PI / 2.0 {
        (0.0, 1.0)
    } else if e == PI {
        (-1.0, 0.0)
    } else if e == 1.5 * PI {
        (0.0, -1.0)
    } else {
        (e.cos(), e.sin())
    }
}

/// `W = Re(e^{−jε} Ŝ) = P cos ε + Q sin ε`.
pub fn hybrid_power(s_hat: ComplexPower, epsilon: f64) -> f64 {
    let (c, s) = displacement(epsilon);
    s_hat.0.re * c + s_hat.0.im * s
}

/// `∂W/∂δ` for a received power `Ŝ = A²g_mm + Ā A e^{jδ}`, where the
/// aggregated remote signal is `Ā e^{jθ̄}` and `δ = θ̄ − θ` is its angle
/// relative to the local oscillator:
/// `Ā A (−cos ε sin δ + sin ε cos δ)`.
pub fn sensitivity(remote_amplitude: f64, local_amplitude: f64, delta: f64, epsilon: f64) -> f64 {
    remote_amplitude * local_amplitude * (-epsilon.cos() * delta.sin() + epsilon.sin() * delta.cos())
}

/// Aggregated remote signal `Σ_{n≠m} g_mn e^{ϑ_n}` at node `m` in equilibrium.
pub fn remote_signal(eq: &Equilibrium, node: usize) -> Complex64 {
    eq.links
        .iter()
        .filter(|l| l.receiver == node && l.transmitter != node)
        .map(|l| l.g0 * eq.phasors[l.transmitter])
        .sum()
}

/// Angle `δ_m = θ̄_m − θ_m` of the aggregated remote signal relative to the
/// local oscillator.
pub fn lock_angle(eq: &Equilibrium, node: usize) -> Result<f64> {
    let remote = remote_signal(eq, node);
    if remote.norm() == 0.0 {
        return Err(Error::DegenerateLock(eq.node_ids[node].clone()));
    }
    Ok(crate::envelope::wrap_to_pi(remote.arg() - eq.angles[node].angle))
}

/// Sensitivity of node `m`'s hybrid power to its lock angle at equilibrium.
pub fn angle_sensitivity(eq: &Equilibrium, node: usize, epsilon: f64) -> Result<f64> {
    let remote = remote_signal(eq, node);
    if remote.norm() == 0.0 {
        return Err(Error::DegenerateLock(eq.node_ids[node].clone()));
    }
    let delta = remote.arg() - eq.angles[node].angle;
    Ok(sensitivity(remote.norm(), eq.angles[node].amplitude(), delta, epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorState {
    pub theta: f64,
    pub omega: f64,
}

/// `(θ̇, ω̇)` with `H ω̇ = (W − W*) − H D (ω − ω₀)`.
pub fn oscillator_derivative(omega: f64, w: f64, cfg: &PhaseLockConfig, omega0: f64) -> (f64, f64) {
    let accel = (w - cfg.setpoint) / cfg.inertia - cfg.damping * (omega - omega0);
    (omega, accel)
}

/// One RK4 step of the oscillator with `W` held fixed over the step.
pub fn step_oscillator(
    state: OscillatorState,
    w: f64,
    cfg: &PhaseLockConfig,
    omega0: f64,
    dt: f64,
) -> Result<OscillatorState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Argument(format!("dt must be finite and > 0, got {dt}")));
    }
    let f = |omega: f64| oscillator_derivative(omega, w, cfg, omega0);
    let (a1, b1) = f(state.omega);
    let (a2, b2) = f(state.omega + 0.5 * dt * b1);
    let (a3, b3) = f(state.omega + 0.5 * dt * b2);
    let (a4, b4) = f(state.omega + dt * b3);
    Ok(OscillatorState {
        theta: state.theta + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        omega: state.omega + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> ComplexPower {
        ComplexPower(Complex64::new(re, im))
    }

    #[test]
    fn hybrid_power_special_cases() {
        assert_eq!(hybrid_power(c(3.0, 4.0), 0.0), 3.0);
        assert_eq!(hybrid_power(c(3.0, 4.0), PI / 2.0), 4.0);
        assert_eq!(hybrid_power(c(3.0, 4.0), -PI / 2.0), -4.0);
        assert_eq!(hybrid_power(c(3.0, 4.0), PI), -3.0);
        assert!((hybrid_power(c(1.0, 1.0), PI / 4.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sensitivity_special_cases() {
        assert_eq!(sensitivity(1.3, 0.9, 0.0, 0.0), 0.0);
        assert!((sensitivity(1.3, 0.9, 0.0, PI / 2.0) - 1.17).abs() < 1e-15);
        for delta in [-1.0, 0.2, 2.5] {
            let best = sensitivity(1.3, 0.9, delta, delta + PI / 2.0);
            assert!((best - 1.17).abs() < 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        assert!(PhaseLockConfig::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(PhaseLockConfig::new(0.0, 1.0, -1.0, 0.0).is_err());
        let cfg = PhaseLockConfig::new(-PI / 2.0, 1.0, 0.0, 0.0).unwrap();
        assert!((cfg.epsilon - 1.5 * PI).abs() < 1e-15);
        assert!(matches!(InertiaDynamics::new(-0.1), Err(Error::UnsupportedDynamics(_))));
        let t = InertiaDynamics::new(2.0).unwrap();
        assert_eq!(t.eval(Complex64::new(0.0, 0.0)), Complex64::new(0.5, 0.0));
        assert!(t.eval(Complex64::new(0.0, 1e9)).norm() < 1e-8);
    }

    #[test]
    fn oscillator_equilibrium_and_accumulator() {
        let w0 = 314.0;
        let cfg = PhaseLockConfig::new(0.0, 2.0, 0.0, 0.5).unwrap();
        let st = OscillatorState { theta: 0.3, omega: w0 };
        let next = step_oscillator(st, 0.5, &cfg, w0, 1e-3).unwrap();
        assert_eq!(next.omega, w0);

        // ω(t) = ω₀ + (h/H) t with h = W − W*.
        let h = 0.2;
        let mut st = OscillatorState { theta: 0.0, omega: w0 };
        let dt = 1e-3;
        for _ in 0..1000 {
            st = step_oscillator(st, 0.5 + h, &cfg, w0, dt).unwrap();
        }
        assert!((st.omega - (w0 + h / 2.0 * 1.0)).abs() < 1e-10);
        // θ(t) = ω₀ t + h t²/(2H)
        assert!((st.theta - (w0 + h / 4.0)).abs() < 1e-9);
    }

    #[test]
    fn oscillator_first_order_response() {
        // H = 1, D = 1, W − W* = 0.1 ⇒ ω = ω₀ + 0.1 (1 − e^{−t}).
        let w0 = 100.0;
        let cfg = PhaseLockConfig::new(0.0, 1.0, 1.0, 0.0).unwrap();
        let mut st = OscillatorState { theta: 0.0, omega: w0 };
        let dt = 1e-3;
        for k in 1..=8000 {
            st = step_oscillator(st, 0.1, &cfg, w0, dt).unwrap();
            let t = k as f64 * dt;
            assert!((st.omega - (w0 + 0.1 * (1.0 - (-t).exp()))).abs() < 1e-6);
        }
        assert!((st.omega - (w0 + 0.1)).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn hybrid_power_linear_and_periodic(
            p in -10.0f64..10.0, q in -10.0f64..10.0,
            p2 in -10.0f64..10.0, q2 in -10.0f64..10.0,
            eps in -10.0f64..10.0, k in -3i32..3,
        ) {
            let a = hybrid_power(c(p, q), eps);
            let b = hybrid_power(c(p2, q2), eps);
            let sum = hybrid_power(c(p + p2, q + q2), eps);
            prop_assert!((sum - a - b).abs() < 1e-12);
            let shifted = hybrid_power(c(p, q), eps + 2.0 * PI * k as f64);
            prop_assert!((shifted - a).abs() < 1e-11);
            let rebuilt = Complex64::new(hybrid_power(c(p, q), 0.0), hybrid_power(c(p, q), PI / 2.0));
            prop_assert!((rebuilt - Complex64::new(p, q)).norm() < 1e-14);
        }

        #[test]
        fn complementary_epsilon_maximizes_sensitivity(delta in -PI..PI, amp in 0.1f64..3.0) {
            let best = sensitivity(amp, 1.0, delta, delta + PI / 2.0);
            for k in 0..720 {
                let eps = 2.0 * PI * k as f64 / 720.0;
                prop_assert!(sensitivity(amp, 1.0, delta, eps) <= best + 1e-12);
            }
        }
    }
}
