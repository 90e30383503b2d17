use nalgebra::DMatrix;

use super::Equilibrium;

/// Loaded-channel matrix:
/// `K_mn = −|S_mn0| |G_mn(jω₀)| sin κ_mn`, `κ_mn = ε_m − ∠S_mn0 − ∠G_mn(jω₀)`
/// off the diagonal, and `K_mm = −Σ_{l≠m} K_ml`, so every row sums to zero.
pub fn loaded_channel_matrix(eq: &Equilibrium) -> DMatrix<f64> {
    let n = eq.len();
    let mut k = DMatrix::zeros(n, n);
    for l in eq.links.iter().filter(|l| l.receiver != l.transmitter) {
        let (m, t) = (l.receiver, l.transmitter);
        let kappa = eq.epsilon[m] - l.s0.0.arg() - l.g0.arg();
        k[(m, t)] += -l.s0.0.norm() * l.g0.norm() * kappa.sin();
    }
    for m in 0..n {
        let off: f64 = (0..n).filter(|&c| c != m).map(|c| k[(m, c)]).sum();
        k[(m, m)] = -off;
    }
    k
}

/// Channel-frequency-shift matrix:
/// `Γ_mn = −|S_mn0| |G′_mn(jω₀)| sin γ_mn`, `γ_mn = ε_m − ∠S_mn0 − ∠G′_mn(jω₀)`.
/// The diagonal comes from self-channels only and is zero without one.
pub fn frequency_shift_matrix(eq: &Equilibrium) -> DMatrix<f64> {
    let n = eq.len();
    let mut gamma = DMatrix::zeros(n, n);
    for l in &eq.links {
        let (m, t) = (l.receiver, l.transmitter);
        let g = eq.epsilon[m] - l.s0.0.arg() - l.dg0.arg();
        gamma[(m, t)] += -l.s0.0.norm() * l.dg0.norm() * g.sin();
    }
    gamma
}
