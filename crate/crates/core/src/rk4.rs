//! Classical fixed-step fourth-order Runge-Kutta.

use num_complex::Complex64;

/// One RK4 step of `ẋ = f(x)` for an autonomous system, in place.
/// `f` writes the derivative of its first argument into the second.
pub fn step<F>(x: &mut [f64], dt: f64, scratch: &mut Rk4Scratch, mut f: F)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x.len();
    scratch.resize(n);
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;

    f(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(tmp, k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[derive(Debug, Default, Clone)]
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn resize(&mut self, n: usize) {
        for v in [
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.tmp,
        ] {
            v.resize(n, 0.0);
        }
    }
}

/// RK4 amplification factor `R(z) = 1 + z + z²/2 + z³/6 + z⁴/24` for the
/// test equation `ẏ = λy`, `z = λ·dt`.
pub fn amplification(z: Complex64) -> Complex64 {
    1.0 + z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)))
}

/// Whether `z = λ·dt` lies inside the RK4 absolute-stability region.
pub fn is_stable(z: Complex64) -> bool {
    amplification(z).norm() <= 1.0 + 1e-12
}
