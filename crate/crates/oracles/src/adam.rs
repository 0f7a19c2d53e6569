//! The Adam update rule written out for one scalar.

pub struct ScalarAdam {
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl ScalarAdam {
    pub fn new() -> Self {
        ScalarAdam { m: 0.0, v: 0.0, t: 0 }
    }

    pub fn step(&mut self, theta: f64, g: f64, lr: f64) -> f64 {
        self.t += 1;
        self.m = 0.9 * self.m + 0.1 * g;
        self.v = 0.999 * self.v + 0.001 * g * g;
        let m_hat = self.m / (1.0 - 0.9f64.powi(self.t));
        let v_hat = self.v / (1.0 - 0.999f64.powi(self.t));
        theta - lr * m_hat / (v_hat.sqrt() + 1e-8)
    }
}

impl Default for ScalarAdam {
    fn default() -> Self {
        Self::new()
    }
}

/// Three steps on `f(θ) = a/2 · (θ − c)²` from `θ0`; returns every iterate.
pub fn quadratic_trajectory(theta0: f64, a: f64, c: f64, lr: f64, steps: usize) -> Vec<f64> {
    let mut opt = ScalarAdam::new();
    let mut theta = theta0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        theta = opt.step(theta, a * (theta - c), lr);
        out.push(theta);
    }
    out
}
