//! Exact solutions of `-kappa u'' + c u' = a sin(omega x) + b cos(omega x)` on
//! `[0, 1]` with `u(0) = u(1) = 0`.

/// Normalized homogeneous solution `h` with `h(0) = 0`, `h(1) = 1`, spanned by
/// `{1, exp(r x)}`, `r = c / kappa`. Returns `(h, h', h'')`.
///
/// Every exponential is evaluated with a non-positive argument, so `r` in the
/// thousands (thin outflow layers) does not overflow.
pub fn layer_profile(r: f64, x: f64) -> (f64, f64, f64) {
    if r == 0.0 {
        (x, 1.0, 0.0)
    } else if r > 0.0 {
        let e = (r * (x - 1.0)).exp();
        let denom = -(-r).exp_m1();
        let h = e * -(-r * x).exp_m1() / denom;
        let dh = r * e / denom;
        (h, dh, r * dh)
    } else {
        let denom = r.exp_m1();
        let h = (r * x).exp_m1() / denom;
        let dh = r * (r * x).exp() / denom;
        (h, dh, r * dh)
    }
}

/// Solution for a single trigonometric mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeSolution {
    omega: f64,
    sin_coef: f64,
    cos_coef: f64,
    left: f64,
    right: f64,
    r: f64,
}

impl ModeSolution {
    /// Forcing `sin_amp * sin(omega x) + cos_amp * cos(omega x)`.
    pub fn new(kappa: f64, c: f64, omega: f64, sin_amp: f64, cos_amp: f64) -> Self {
        // particular solution alpha sin + beta cos:
        //   kappa w^2 alpha - c w beta = sin_amp
        //   kappa w^2 beta + c w alpha = cos_amp
        let d = kappa * omega * omega;
        let a = c * omega;
        let det = d * d + a * a;
        let sin_coef = (d * sin_amp + a * cos_amp) / det;
        let cos_coef = (d * cos_amp - a * sin_amp) / det;
        let left = -cos_coef;
        let right = -(sin_coef * omega.sin() + cos_coef * omega.cos());
        Self {
            omega,
            sin_coef,
            cos_coef,
            left,
            right,
            r: c / kappa,
        }
    }

    /// Forcing `amp * sin(omega x + phase)`.
    pub fn shifted_sine(kappa: f64, c: f64, omega: f64, amp: f64, phase: f64) -> Self {
        Self::new(kappa, c, omega, amp * phase.cos(), amp * phase.sin())
    }

    pub fn value(&self, x: f64) -> f64 {
        let (s, co) = (self.omega * x).sin_cos();
        let (h, _, _) = layer_profile(self.r, x);
        self.sin_coef * s + self.cos_coef * co + self.left + (self.right - self.left) * h
    }

    /// `(u, u', u'')` at `x`.
    pub fn jet(&self, x: f64) -> (f64, f64, f64) {
        let (s, co) = (self.omega * x).sin_cos();
        let w = self.omega;
        let (h, dh, ddh) = layer_profile(self.r, x);
        let jump = self.right - self.left;
        let u = self.sin_coef * s + self.cos_coef * co + self.left + jump * h;
        let du = w * (self.sin_coef * co - self.cos_coef * s) + jump * dh;
        let ddu = -w * w * (self.sin_coef * s + self.cos_coef * co) + jump * ddh;
        (u, du, ddu)
    }
}
