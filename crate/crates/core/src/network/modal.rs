//! Modal coordinates of the inertia-channel matrix `K_H = H⁻¹K`.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

type CMat = DMatrix<Complex64>;

/// Eigenvector matrices with a larger 2-norm condition number are treated as
/// defective.
pub const MAX_EIGENVECTOR_CONDITION: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct SynchronizationModel {
    pub k: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub inertia: DVector<f64>,
    pub k_h: DMatrix<f64>,
    /// Eigenvalues of `K_H`, ascending `|ξ|`.
    pub xi: Vec<Complex64>,
    /// Unit-norm eigenvectors, column `m` belongs to `xi[m]`.
    pub phi: CMat,
    /// `Φ⁻¹ H⁻¹ Γ Φ`.
    pub gamma_h_phi: CMat,
    pub phi_condition: f64,
    /// `‖K_H Φ − Φ diag(ξ)‖_F / ‖K_H‖_F`.
    pub eigen_residual: f64,
    /// `‖Φ Γ_HΦ − H⁻¹ΓΦ‖_F / ‖H⁻¹ΓΦ‖_F`.
    pub gamma_residual: f64,
    /// Index of the rigid-rotation mode: `K` has zero row sums and the
    /// smallest eigenvalue vanishes to rounding.
    pub synchronous_mode: Option<usize>,
}

impl SynchronizationModel {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Quasi-static closed-loop state matrix over `(Δθ, Δω)`:
    /// `[[0, I], [−K_H, −diag(D) − H⁻¹Γ]]`.
    pub fn closed_loop_matrix(&self, damping: &[f64]) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, n + i)] = 1.0;
            for j in 0..n {
                a[(n + i, j)] = -self.k_h[(i, j)];
                a[(n + i, n + j)] = -self.gamma[(i, j)] / self.inertia[i];
            }
            a[(n + i, n + i)] -= damping[i];
        }
        a
    }

    /// Column magnitudes `|Φ_nm|` (participation of node `n` in mode `m`).
    pub fn participation(&self) -> DMatrix<f64> {
        self.phi.map(|z| z.norm())
    }

    pub fn sigma_max(&self) -> f64 {
        crate::stability::sigma_max(&self.gamma_h_phi)
    }
}

/// Eigen-decomposes `K_H = H⁻¹K` and expresses `H⁻¹Γ` in its modal
/// coordinates.
pub fn modal_decomposition(k: &DMatrix<f64>, inertia: &[f64], gamma: &DMatrix<f64>) -> Result<SynchronizationModel> {
    let n = k.nrows();
    if k.ncols() != n || gamma.shape() != (n, n) || inertia.len() != n {
        return Err(Error::Argument("K, Γ and H dimensions disagree".into()));
    }
    if inertia.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
        return Err(Error::Domain("inertias must be finite and > 0".into()));
    }
    let inertia = DVector::from_column_slice(inertia);
    let k_h = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / inertia[i]);
    let g_h = DMatrix::from_fn(n, n, |i, j| gamma[(i, j)] / inertia[i]);

    if n == 0 {
        return Ok(SynchronizationModel {
            k: k.clone(),
            gamma: gamma.clone(),
            inertia,
            k_h,
            xi: vec![],
            phi: CMat::zeros(0, 0),
            gamma_h_phi: CMat::zeros(0, 0),
            phi_condition: 1.0,
            eigen_residual: 0.0,
            gamma_residual: 0.0,
            synchronous_mode: None,
        });
    }

    let (xi, phi) = eigen(&k_h)?;

    let sv = phi.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let phi_condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(phi_condition <= MAX_EIGENVECTOR_CONDITION) {
        return Err(Error::NearDefective {
            condition: phi_condition,
            limit: MAX_EIGENVECTOR_CONDITION,
        });
    }

    let k_hc = k_h.map(|x| Complex64::new(x, 0.0));
    let g_hc = g_h.map(|x| Complex64::new(x, 0.0));
    let lambda = CMat::from_diagonal(&DVector::from_vec(xi.clone()));
    let eigen_residual = (&k_hc * &phi - &phi * &lambda).norm() / k_h.norm().max(f64::MIN_POSITIVE);

    let g_phi = &g_hc * &phi;
    let gamma_h_phi = phi
        .clone()
        .lu()
        .solve(&g_phi)
        .ok_or(Error::NearDefective {
            condition: f64::INFINITY,
            limit: MAX_EIGENVECTOR_CONDITION,
        })?;
    let gamma_residual = (&phi * &gamma_h_phi - &g_phi).norm() / g_phi.norm().max(f64::MIN_POSITIVE);

    let scale = k_h.norm().max(1.0);
    let rows_balanced = (0..n).all(|i| k.row(i).sum().abs() <= 1e-10 * k.amax().max(f64::MIN_POSITIVE));
    let synchronous_mode = (rows_balanced && xi[0].norm() <= 1e-9 * scale).then_some(0);

    Ok(SynchronizationModel {
        k: k.clone(),
        gamma: gamma.clone(),
        inertia,
        k_h,
        xi,
        phi,
        gamma_h_phi,
        phi_condition,
        eigen_residual,
        gamma_residual,
        synchronous_mode,
    })
}

/// Eigenpairs of a real matrix from the complex Schur form `A = Q T Q*`:
/// eigenvectors of the triangular `T` by back-substitution, mapped by `Q`.
fn eigen(a: &DMatrix<f64>) -> Result<(Vec<Complex64>, CMat)> {
    let n = a.nrows();
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let schur = ac
        .try_schur(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Domain("Schur decomposition did not converge".into()))?;
    let (q, t) = schur.unpack();

    let tnorm = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let smin = f64::EPSILON * tnorm;

    let mut pairs: Vec<(Complex64, DVector<Complex64>)> = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut y = DVector::<Complex64>::zeros(n);
        y[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let num: Complex64 = ((i + 1)..=k).map(|j| t[(i, j)] * y[j]).sum();
            let ymax = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let den = t[(i, i)] - lambda;
            y[i] = if den.norm() >= smin {
                -num / den
            } else if num.norm() <= 1e-12 * tnorm * ymax {
                // repeated eigenvalue with a decoupled Schur vector
                Complex64::new(0.0, 0.0)
            } else {
                -num / smin
            };
        }
        let mut x = &q * y;
        normalize(&mut x);
        pairs.push((lambda, x));
    }

    pairs.sort_by(|a, b| {
        let (za, zb) = (a.0, b.0);
        za.norm()
            .partial_cmp(&zb.norm())
            .unwrap_or(Ordering::Equal)
            .then(za.re.partial_cmp(&zb.re).unwrap_or(Ordering::Equal))
            .then(za.im.partial_cmp(&zb.im).unwrap_or(Ordering::Equal))
    });

    let xi = pairs.iter().map(|p| p.0).collect();
    let phi = CMat::from_fn(n, n, |i, j| pairs[j].1[i]);
    Ok((xi, phi))
}

/// Unit 2-norm; the first entry of maximal modulus is made real positive.
fn normalize(x: &mut DVector<Complex64>) {
    let norm = x.norm();
    if norm == 0.0 {
        return;
    }
    let max = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = x
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    let phase = x[pivot] / x[pivot].norm();
    let scale = phase.conj() / norm;
    for z in x.iter_mut() {
        *z *= scale;
    }
}
