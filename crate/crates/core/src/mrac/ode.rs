//! Fixed-step classical Runge–Kutta.

/// Right-hand side `ẏ = f(t, y)` written into `dy`.
pub trait VectorField {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for F {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self(t, y, dy)
    }
}

/// Scratch space for [`Rk4::step`].
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `y` from `t` to `t + dt` in place.
    pub fn step<F: VectorField + ?Sized>(&mut self, f: &F, t: f64, y: &mut [f64], dt: f64) {
        let h2 = 0.5 * dt;
        f.eval(t, y, &mut self.k1);
        for ((s, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *s = yi + h2 * k;
        }
        f.eval(t + h2, &self.tmp, &mut self.k2);
        for ((s, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *s = yi + h2 * k;
        }
        f.eval(t + h2, &self.tmp, &mut self.k3);
        for ((s, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *s = yi + dt * k;
        }
        f.eval(t + dt, &self.tmp, &mut self.k4);
        let h6 = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += h6 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates `steps` fixed steps from `(t0, y0)` and returns the final state.
pub fn integrate<F: VectorField + ?Sized>(f: &F, t0: f64, y0: &[f64], dt: f64, steps: usize) -> Vec<f64> {
    let mut y = y0.to_vec();
    let mut rk = Rk4::new(y.len());
    for i in 0..steps {
        rk.step(f, t0 + i as f64 * dt, &mut y, dt);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let err = |steps: usize| (integrate(&f, 0.0, &[1.0], 2.0 / steps as f64, steps)[0] - (-2f64).exp()).abs();
        let order = (err(20) / err(40)).log2();
        assert!(order > 3.8 && order < 4.2, "{order}");
    }

    #[test]
    fn time_dependent_field_uses_stage_times() {
        // ẏ = 3t², exact for RK4 (cubic in t)
        let f = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = 3.0 * t * t;
        let y = integrate(&f, 1.0, &[0.0], 0.25, 8);
        assert!((y[0] - (27.0 - 1.0)).abs() < 1e-12);
    }
}
