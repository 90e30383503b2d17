//! Network channels as rational transfer functions `G(s) = Σ_k b_k/(s − a_k)`.
//!
//! Every first-order factor of a channel carries a time-domain gain `g_k`
//! obeying `ġ_k = (a_k − ϖ) g_k + b_k`, where `ϖ` is the complex frequency of
//! the transmitted signal (channel-frequency shift). Within the channel
//! bandwidth the gain is close to its quasi-static value `G(ϖ)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::envelope::{ComplexFrequency, ComplexPower};
use crate::rk4;
use crate::{Error, Result};

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Pole-proximity tolerance for a pole `a`.
pub fn pole_tolerance(pole: Complex64) -> f64 {
    1e-9 * (1.0 + pole.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderFactor {
    pole: Complex64,
    residue: Complex64,
}

impl FirstOrderFactor {
    /// Requires a stable pole (`Re(a) < 0`) and a nonzero residue.
    pub fn new(pole: Complex64, residue: Complex64) -> Result<Self> {
        if !(pole.re.is_finite() && pole.im.is_finite() && residue.re.is_finite() && residue.im.is_finite()) {
            return Err(Error::Domain("channel factor must be finite".into()));
        }
        if !(pole.re < 0.0) {
            return Err(Error::Domain(format!(
                "channel pole must satisfy Re(a) < 0, got {pole}"
            )));
        }
        if residue == Complex64::new(0.0, 0.0) {
            return Err(Error::Domain("channel residue must be nonzero".into()));
        }
        Ok(Self { pole, residue })
    }

    pub fn pole(&self) -> Complex64 {
        self.pole
    }

    pub fn residue(&self) -> Complex64 {
        self.residue
    }
}

/// `G(s) = Σ_k b_k/(s − a_k)` with simple poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalChannel {
    factors: Vec<FirstOrderFactor>,
}

impl RationalChannel {
    pub fn new(factors: Vec<FirstOrderFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Domain("channel needs at least one factor".into()));
        }
        for (i, fi) in factors.iter().enumerate() {
            for (j, fj) in factors.iter().enumerate().skip(i + 1) {
                if (fi.pole - fj.pole).norm() < pole_tolerance(fi.pole) {
                    return Err(Error::Domain(format!(
                        "repeated pole {} in factors {i} and {j}; only simple poles are supported",
                        fi.pole
                    )));
                }
            }
        }
        Ok(Self { factors })
    }

    pub fn from_poles_residues(poles: &[Complex64], residues: &[Complex64]) -> Result<Self> {
        if poles.len() != residues.len() {
            return Err(Error::Domain(format!(
                "{} poles but {} residues",
                poles.len(),
                residues.len()
            )));
        }
        let factors = poles
            .iter()
            .zip(residues)
            .map(|(&a, &b)| FirstOrderFactor::new(a, b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }

    /// Single factor `b/(s − a)`.
    pub fn first_order(pole: Complex64, residue: Complex64) -> Result<Self> {
        Self::new(vec![FirstOrderFactor::new(pole, residue)?])
    }

    pub fn factors(&self) -> &[FirstOrderFactor] {
        &self.factors
    }

    fn check_poles(&self, s: Complex64) -> Result<()> {
        for (k, f) in self.factors.iter().enumerate() {
            let tol = pole_tolerance(f.pole);
            if (s - f.pole).norm() < tol {
                return Err(Error::PoleProximity {
                    factor: k,
                    pole: f.pole.to_string(),
                    s: s.to_string(),
                    tolerance: tol,
                });
            }
        }
        Ok(())
    }

    /// `G(s)`.
    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        self.check_poles(s)?;
        Ok(self.factors.iter().map(|f| f.residue / (s - f.pole)).sum())
    }

    /// `G′(s) = −Σ_k b_k/(s − a_k)²`.
    pub fn derivative(&self, s: Complex64) -> Result<Complex64> {
        self.check_poles(s)?;
        Ok(self
            .factors
            .iter()
            .map(|f| -f.residue / ((s - f.pole) * (s - f.pole)))
            .sum())
    }
}

/// Per-factor channel gains `g_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGainState {
    pub gains: Vec<Complex64>,
}

impl ChannelGainState {
    /// Fixed point of the gain ODE for a constant `ϖ`: `g_k = b_k/(ϖ − a_k)`.
    pub fn quasi_static(ch: &RationalChannel, freq: ComplexFrequency) -> Result<Self> {
        let s = freq.as_complex();
        ch.check_poles(s)?;
        Ok(Self {
            gains: ch.factors.iter().map(|f| f.residue / (s - f.pole)).collect(),
        })
    }

    pub fn zeros(ch: &RationalChannel) -> Self {
        Self {
            gains: vec![Complex64::new(0.0, 0.0); ch.factors.len()],
        }
    }

    /// Total gain `g = Σ_k g_k`.
    pub fn total(&self) -> Complex64 {
        self.gains.iter().sum()
    }
}

/// Quasi-static channel gain `g ≈ G(ϖ)`.
pub fn quasi_static_gain(ch: &RationalChannel, freq: ComplexFrequency) -> Result<Complex64> {
    ch.eval(freq.as_complex())
}

/// Gain ODE derivative `(a − ϖ) g + b` for one factor.
pub fn gain_derivative(factor: &FirstOrderFactor, freq: Complex64, gain: Complex64) -> Complex64 {
    (factor.pole - freq) * gain + factor.residue
}

/// Checks that `dt` keeps every factor's gain ODE inside the RK4 stability
/// region for transmitter frequency `freq`.
pub fn check_step(ch: &RationalChannel, freq: Complex64, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Integration(format!("dt must be finite and > 0, got {dt}")));
    }
    for (k, f) in ch.factors.iter().enumerate() {
        let z = (f.pole - freq) * dt;
        if !rk4::is_stable(z) {
            return Err(Error::Integration(format!(
                "dt = {dt:e} puts factor {k} (|a − ϖ| = {:.6e}) outside the RK4 stability region",
                (f.pole - freq).norm()
            )));
        }
    }
    Ok(())
}

/// Advances each factor gain by one RK4 step of `ġ_k = (a_k − ϖ) g_k + b_k`
/// with `ϖ` held constant over the step.
pub fn step_gain(
    state: &ChannelGainState,
    freq: ComplexFrequency,
    ch: &RationalChannel,
    dt: f64,
) -> Result<ChannelGainState> {
    if state.gains.len() != ch.factors.len() {
        return Err(Error::Argument(format!(
            "gain state has {} factors, channel has {}",
            state.gains.len(),
            ch.factors.len()
        )));
    }
    let w = freq.as_complex();
    check_step(ch, w, dt)?;
    let gains = ch
        .factors
        .iter()
        .zip(&state.gains)
        .map(|(f, &g)| {
            let k1 = gain_derivative(f, w, g);
            let k2 = gain_derivative(f, w, g + 0.5 * dt * k1);
            let k3 = gain_derivative(f, w, g + 0.5 * dt * k2);
            let k4 = gain_derivative(f, w, g + dt * k3);
            g + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        })
        .collect();
    Ok(ChannelGainState { gains })
}

/// Base-band low-pass filter `F(s) = (jω₀ − a)/(s + jω₀ − a)` seen by the
/// transmitting end of a channel factor.
pub fn baseband_filter(factor: &FirstOrderFactor, omega0: f64, s: Complex64) -> Result<Complex64> {
    let c = J * omega0 - factor.pole;
    let den = s + c;
    let tol = pole_tolerance(c);
    if den.norm() < tol {
        return Err(Error::PoleProximity {
            factor: 0,
            pole: (-c).to_string(),
            s: s.to_string(),
            tolerance: tol,
        });
    }
    Ok(c / den)
}

/// Linearized gain perturbation `Δg = −g₀/(jω₀ − a) · F(s) · Δϖ_n`.
pub fn perturb_gain(
    factor: &FirstOrderFactor,
    g0: Complex64,
    omega0: f64,
    d_freq: Complex64,
    s: Complex64,
) -> Result<Complex64> {
    let c = J * omega0 - factor.pole;
    if c.norm() < pole_tolerance(factor.pole) {
        return Err(Error::DegenerateChannel(format!(
            "carrier jω₀ = {} coincides with channel pole {}",
            J * omega0,
            factor.pole
        )));
    }
    let f = baseband_filter(factor, omega0, s)?;
    Ok(-g0 / c * f * d_freq)
}

/// Linearized received-power perturbation
/// `ΔŜ_mn = Ŝ_mn0 (Δϑ_m* + F · Δϑ_n)`: the receiver's angle acts at once,
/// the transmitter's passes through `F`.
pub fn perturb_power(
    s_hat0: ComplexPower,
    d_receiver: Complex64,
    d_transmitter: Complex64,
    filter: Complex64,
) -> Complex64 {
    s_hat0.0 * (d_receiver.conj() + filter * d_transmitter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{complex_power, ComplexAngle};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn factor_validation() {
        assert!(FirstOrderFactor::new(c(0.0, 1.0), c(1.0, 0.0)).is_err());
        assert!(FirstOrderFactor::new(c(1.0, 0.0), c(1.0, 0.0)).is_err());
        assert!(FirstOrderFactor::new(c(-1.0, 0.0), c(0.0, 0.0)).is_err());
        assert!(RationalChannel::new(vec![]).is_err());
        let f = FirstOrderFactor::new(c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        let g = FirstOrderFactor::new(c(-1.0 + 1e-12, 0.0), c(2.0, 0.0)).unwrap();
        assert!(RationalChannel::new(vec![f, g]).is_err());
        assert!(RationalChannel::from_poles_residues(&[c(-1.0, 0.0)], &[]).is_err());
    }

    #[test]
    fn quasi_static_examples() {
        let ch = RationalChannel::first_order(c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        let g = quasi_static_gain(&ch, ComplexFrequency::rotating(1.0)).unwrap();
        assert!(close(g, c(0.5, -0.5), 1e-15));
        let g = quasi_static_gain(&ch, ComplexFrequency::default()).unwrap();
        assert!(close(g, c(1.0, 0.0), 1e-15));

        let ch2 = RationalChannel::from_poles_residues(&[c(-1.0, 0.0), c(-2.0, 0.0)], &[c(1.0, 0.0), c(-1.0, 0.0)])
            .unwrap();
        let g = quasi_static_gain(&ch2, ComplexFrequency::default()).unwrap();
        assert!(close(g, c(0.5, 0.0), 1e-15));
    }

    #[test]
    fn pole_proximity_names_factor() {
        let ch = RationalChannel::from_poles_residues(&[c(-1.0, 0.0), c(-2.0, 3.0)], &[c(1.0, 0.0), c(1.0, 0.0)])
            .unwrap();
        match quasi_static_gain(&ch, ComplexFrequency::new(-2.0, 3.0)) {
            Err(Error::PoleProximity { factor, .. }) => assert_eq!(factor, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_gain_fixed_point_unchanged() {
        let ch = RationalChannel::from_poles_residues(&[c(-3.0, 1.0), c(-0.5, 0.0)], &[c(1.0, 2.0), c(-0.3, 0.0)])
            .unwrap();
        let w = ComplexFrequency::rotating(2.0);
        let st = ChannelGainState::quasi_static(&ch, w).unwrap();
        let next = step_gain(&st, w, &ch, 1e-2).unwrap();
        for (a, b) in st.gains.iter().zip(&next.gains) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn step_gain_matches_analytic_scalar_solution() {
        // ġ = −g + 1, g(0) = 0 ⇒ g(t) = 1 − e^{−t}.
        let ch = RationalChannel::first_order(c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        let mut st = ChannelGainState::zeros(&ch);
        let dt = 1e-3;
        for _ in 0..1000 {
            st = step_gain(&st, ComplexFrequency::default(), &ch, dt).unwrap();
        }
        let exact = 1.0 - (-1f64).exp();
        assert!((st.total().re - exact).abs() < 1e-4);
        assert!((st.total().re - 0.63212).abs() < 1e-4);
        assert!(st.total().im.abs() < 1e-15);
    }

    #[test]
    fn step_gain_tracks_frequency_step() {
        let ch = RationalChannel::first_order(c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        let start = ComplexFrequency::rotating(1.0);
        let after = ComplexFrequency::rotating(1.1);
        let mut st = ChannelGainState::quasi_static(&ch, start).unwrap();
        let target = quasi_static_gain(&ch, after).unwrap();
        let initial_gap = (st.total() - target).norm();
        let dt = 1e-3;
        // 5/|Re(a − ϖ)| = 5 s.
        for _ in 0..5000 {
            st = step_gain(&st, after, &ch, dt).unwrap();
        }
        let gap = (st.total() - target).norm();
        assert!(gap <= (-5f64).exp() * initial_gap * 1.01, "gap {gap} vs {initial_gap}");
    }

    #[test]
    fn step_gain_rejects_unstable_step() {
        let ch = RationalChannel::first_order(c(-100.0, 0.0), c(1.0, 0.0)).unwrap();
        let st = ChannelGainState::zeros(&ch);
        assert!(matches!(
            step_gain(&st, ComplexFrequency::default(), &ch, 0.05),
            Err(Error::Integration(_))
        ));
        assert!(step_gain(&st, ComplexFrequency::default(), &ch, -1.0).is_err());
    }

    #[test]
    fn baseband_filter_examples() {
        let f = FirstOrderFactor::new(c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        for (a, w0) in [(c(-1.0, 0.0), 1.0), (c(-7.0, 3.0), 314.0)] {
            let fac = FirstOrderFactor::new(a, c(1.0, 0.0)).unwrap();
            assert!(close(baseband_filter(&fac, w0, c(0.0, 0.0)).unwrap(), c(1.0, 0.0), 1e-15));
        }
        let far = baseband_filter(&f, 1.0, c(1e9, 0.0)).unwrap();
        assert!(far.norm() < 1e-8);
        let v = baseband_filter(&f, 1.0, c(1.0, 0.0)).unwrap();
        let expect = c(1.0, 1.0) / c(2.0, 1.0);
        assert!(close(v, expect, 1e-15));
        assert!((v.norm() - 0.6325).abs() < 1e-4);
        // pole of F at s = a − jω₀
        assert!(matches!(
            baseband_filter(&f, 1.0, c(-1.0, -1.0)),
            Err(Error::PoleProximity { .. })
        ));
    }

    #[test]
    fn filter_magnitude_bounded_on_positive_frequencies() {
        for a in [c(-0.1, 0.0), c(-5.0, 2.0), c(-80.0, -40.0)] {
            let f = FirstOrderFactor::new(a, c(1.0, 0.0)).unwrap();
            let w0 = crate::DEFAULT_OMEGA0;
            for k in 0..400 {
                let w = 10f64.powf(-3.0 + 9.0 * k as f64 / 399.0);
                let v = baseband_filter(&f, w0, c(0.0, w)).unwrap();
                assert!(v.norm() <= 1.0 + 1e-12, "|F(j{w})| = {}", v.norm());
            }
        }
    }

    #[test]
    fn filter_exceeds_unity_at_negative_shifted_frequency() {
        // |F(jω)| = |c|/Re(c) at ω = −Im(c), c = jω₀ − a.
        let f = FirstOrderFactor::new(c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        let v = baseband_filter(&f, 1.0, c(0.0, -1.0)).unwrap();
        assert!((v.norm() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn perturb_gain_examples() {
        let f = FirstOrderFactor::new(c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        let g0 = c(1.0, 0.0) / c(1.0, 1.0);
        assert_eq!(perturb_gain(&f, g0, 1.0, c(0.0, 0.0), c(0.0, 0.0)).unwrap(), c(0.0, 0.0));

        let dw = c(0.0, 0.01);
        let dg = perturb_gain(&f, g0, 1.0, dw, c(0.0, 0.0)).unwrap();
        assert!(close(dg, -g0 * dw / c(1.0, 1.0), 1e-16));

        // s = 0 reproduces dG/dϖ · Δϖ at ϖ = jω₀.
        let ch = RationalChannel::new(vec![f]).unwrap();
        let deriv = ch.derivative(c(0.0, 1.0)).unwrap() * dw;
        assert!(close(dg, deriv, 1e-16));

        // central finite difference of the quasi-static gain
        let plus = ch.eval(c(0.0, 1.0) + dw).unwrap();
        let minus = ch.eval(c(0.0, 1.0) - dw).unwrap();
        let fd = (plus - minus) / 2.0;
        assert!((dg - fd).norm() / fd.norm() < 1e-3);
    }

    #[test]
    fn perturb_gain_degenerate_channel() {
        let f = FirstOrderFactor::new(c(-1e-12, 2.0), c(1.0, 0.0)).unwrap();
        assert!(matches!(
            perturb_gain(&f, c(1.0, 0.0), 2.0, c(0.0, 0.01), c(0.0, 0.0)),
            Err(Error::DegenerateChannel(_))
        ));
    }

    #[test]
    fn perturb_power_examples() {
        let s0 = ComplexPower(c(0.7, -0.2));
        let z = c(0.0, 0.0);
        assert_eq!(perturb_power(s0, z, z, c(1.0, 0.0)), z);
        let d = c(0.0, 0.013);
        assert!(perturb_power(s0, d, d, c(1.0, 0.0)).norm() < 1e-17);
        let r = perturb_power(ComplexPower(c(1.0, 0.0)), z, c(0.0, 0.01), c(1.0, 0.0));
        assert!(close(r, c(0.0, 0.01), 1e-18));
    }

    #[test]
    fn linearization_error_is_second_order() {
        // Nonlinear ΔŜ_mn of a transmitter angle step vs the s = 0 linear model.
        let g0 = c(0.3, -1.7);
        let tn = ComplexAngle::new(0.1, 0.4).unwrap();
        let tm = ComplexAngle::new(-0.05, -0.2).unwrap();
        let s0 = ComplexPower(g0 * complex_power(tn, tm).unwrap().0);
        let err = |h: f64| {
            let moved = ComplexAngle::new(tn.ln_amplitude, tn.angle + h).unwrap();
            let nonlinear = g0 * complex_power(moved, tm).unwrap().0 - s0.0;
            let linear = perturb_power(s0, c(0.0, 0.0), c(0.0, h), c(1.0, 0.0));
            (nonlinear - linear).norm()
        };
        let r1 = err(1e-2) / err(5e-3);
        let r2 = err(5e-3) / err(2.5e-3);
        assert!((3.5..4.5).contains(&r1) && (3.5..4.5).contains(&r2), "{r1} {r2}");
    }

    proptest! {
        #[test]
        fn eval_is_factor_sum(
            re in proptest::collection::vec(-50.0f64..-0.1, 1..5),
            s_im in -100.0f64..100.0,
        ) {
            let poles: Vec<_> = re.iter().enumerate().map(|(i, &r)| c(r, i as f64 * 3.7)).collect();
            let residues: Vec<_> = re.iter().map(|&r| c(1.0, r * 0.1)).collect();
            let ch = RationalChannel::from_poles_residues(&poles, &residues).unwrap();
            let s = c(0.0, s_im);
            let direct: Complex64 = poles.iter().zip(&residues).map(|(a, b)| b / (s - a)).sum();
            prop_assert_eq!(ch.eval(s).unwrap(), direct);
            let st = ChannelGainState::quasi_static(&ch, ComplexFrequency::rotating(s_im)).unwrap();
            prop_assert!((st.total() - direct).norm() <= 1e-14 * direct.norm().max(1e-300));
        }
    }
}
