//! Complex-angle algebra for balanced three-phase signals.
//!
//! A balanced signal `A (sin θ + j cos θ)` is carried as the complex angle
//! `ϑ = ln A + jθ`, so the phasor is `e^ϑ`. Amplitudes live in the log domain
//! (nepers) and angles are kept unwrapped; wrapping only happens when a
//! phasor is evaluated.

use std::f64::consts::PI;
use std::ops::{Add, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `ϑ = ln A + jθ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexAngle {
    /// `ln A`, nepers.
    pub ln_amplitude: f64,
    /// `θ`, radians, unwrapped.
    pub angle: f64,
}

impl ComplexAngle {
    pub fn new(ln_amplitude: f64, angle: f64) -> Result<Self> {
        let out = Self {
            ln_amplitude,
            angle,
        };
        out.check()?;
        Ok(out)
    }

    /// Builds from a linear amplitude, which must be strictly positive.
    pub fn from_amplitude(amplitude: f64, angle: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(Error::Domain(format!(
                "amplitude must be finite and > 0, got {amplitude}"
            )));
        }
        Self::new(amplitude.ln(), angle)
    }

    pub fn amplitude(&self) -> f64 {
        self.ln_amplitude.exp()
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.ln_amplitude, self.angle)
    }

    fn check(&self) -> Result<()> {
        if self.ln_amplitude.is_finite() && self.angle.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "complex angle must be finite, got ({}, {})",
                self.ln_amplitude, self.angle
            )))
        }
    }
}

impl Add for ComplexAngle {
    type Output = ComplexAngle;
    fn add(self, rhs: Self) -> Self {
        Self {
            ln_amplitude: self.ln_amplitude + rhs.ln_amplitude,
            angle: self.angle + rhs.angle,
        }
    }
}

impl Sub for ComplexAngle {
    type Output = ComplexAngle;
    fn sub(self, rhs: Self) -> Self {
        Self {
            ln_amplitude: self.ln_amplitude - rhs.ln_amplitude,
            angle: self.angle - rhs.angle,
        }
    }
}

/// `ϖ = dϑ/dt = Ȧ/A + jω`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexFrequency {
    /// `Ȧ/A`, 1/s.
    pub amp_rate: f64,
    /// `ω = θ̇`, rad/s.
    pub angular_freq: f64,
}

impl ComplexFrequency {
    pub fn new(amp_rate: f64, angular_freq: f64) -> Self {
        Self {
            amp_rate,
            angular_freq,
        }
    }

    /// Constant-amplitude signal rotating at `omega`.
    pub fn rotating(omega: f64) -> Self {
        Self::new(0.0, omega)
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.amp_rate, self.angular_freq)
    }
}

/// Complex power `S = P + jQ`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexPower(pub Complex64);

impl ComplexPower {
    pub fn real_power(&self) -> f64 {
        self.0.re
    }

    pub fn reactive_power(&self) -> f64 {
        self.0.im
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }
}

/// `e^ϑ = A e^{jθ}`.
pub fn to_phasor(theta: ComplexAngle) -> Result<Complex64> {
    theta.check()?;
    Ok(Complex64::from_polar(theta.amplitude(), theta.angle))
}

/// Demodulation `S_mn = e^{ϑ_n} e^{ϑ_m*}` of the signal sent by `n` as seen
/// by `m`. Only the angle difference enters, so a shared carrier cancels.
pub fn complex_power(transmitted: ComplexAngle, receiver: ComplexAngle) -> Result<ComplexPower> {
    transmitted.check()?;
    receiver.check()?;
    let magnitude = (transmitted.ln_amplitude + receiver.ln_amplitude).exp();
    Ok(ComplexPower(Complex64::from_polar(
        magnitude,
        transmitted.angle - receiver.angle,
    )))
}

/// Numerical complex frequency of a sampled complex-angle trajectory.
///
/// Central differences in the interior and first-order one-sided
/// differences at the ends. Angle increments are unwrapped into (−π, π]
/// first, so trajectories sampled from wrapped phases are handled.
pub fn finite_diff_frequency(trajectory: &[ComplexAngle], dt: f64) -> Result<Vec<ComplexFrequency>> {
    if trajectory.len() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 samples, got {}",
            trajectory.len()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Argument(format!("dt must be finite and > 0, got {dt}")));
    }
    for sample in trajectory {
        sample.check()?;
    }

    let mut angles = Vec::with_capacity(trajectory.len());
    angles.push(trajectory[0].angle);
    for w in trajectory.windows(2) {
        let prev = *angles.last().unwrap();
        angles.push(prev + wrap_to_pi(w[1].angle - w[0].angle));
    }
    let ln_amp: Vec<f64> = trajectory.iter().map(|t| t.ln_amplitude).collect();

    let n = trajectory.len();
    let diff = |v: &[f64], i: usize| -> f64 {
        if i == 0 {
            (v[1] - v[0]) / dt
        } else if i == n - 1 {
            (v[n - 1] - v[n - 2]) / dt
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * dt)
        }
    };
    Ok((0..n)
        .map(|i| ComplexFrequency::new(diff(&ln_amp, i), diff(&angles, i)))
        .collect())
}

/// Maps an angle increment into (−π, π].
pub fn wrap_to_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}
