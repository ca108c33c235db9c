/// Right-hand side of an autonomous-or-not system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// Classical fourth-order Runge-Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    /// Advances `y` from `t` to `t + h` in place.
    pub fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, y: &mut [f64], h: f64) {
        let n = y.len();
        debug_assert_eq!(n, self.k1.len());
        sys.rhs(t, y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        sys.rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        sys.rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates with `steps` equal steps over `[t0, t1]`.
pub fn integrate<S: OdeSystem + ?Sized>(sys: &S, y0: &[f64], t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    let mut rk = Rk4::new(y0.len());
    let mut y = y0.to_vec();
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        rk.step(sys, t0 + k as f64 * h, &mut y, h);
    }
    y
}
