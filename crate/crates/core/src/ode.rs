//! Dormand-Prince 5(4) embedded Runge-Kutta stepper with FSAL and
//! standard error-per-step control.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive integrator state for `y' = f(t, y)`.
pub struct Dopri5<F> {
    f: F,
    pub t: f64,
    pub y: Vec<f64>,
    k1: Vec<f64>,
    h: f64,
    rtol: f64,
    atol: Vec<f64>,
    h_max: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(mut f: F, t0: f64, y0: Vec<f64>, h0: f64, rtol: f64, atol: Vec<f64>, h_max: f64) -> Self {
        let mut k1 = vec![0.0; y0.len()];
        f(t0, &y0, &mut k1);
        Self {
            f,
            t: t0,
            y: y0,
            k1,
            h: h0.min(h_max),
            rtol,
            atol,
            h_max,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn derivative(&self) -> &[f64] {
        &self.k1
    }

    /// Take one accepted step without passing `t_end`. Returns `false` on
    /// step-size underflow.
    pub fn step(&mut self, t_end: f64) -> bool {
        let n = self.y.len();
        let mut k = vec![vec![0.0; n]; 6];
        let mut tmp = vec![0.0; n];
        let mut y_new = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        loop {
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.h_max);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h <= 1e-14 * self.t.abs().max(1e-30) || h <= 0.0 {
                return false;
            }
            let (t, y, k1) = (self.t, &self.y, &self.k1);
            let f = &mut self.f;
            let stage = |coefs: &[(f64, &[f64])], out: &mut [f64]| {
                for i in 0..n {
                    out[i] = y[i] + h * coefs.iter().map(|(c, kk)| c * kk[i]).sum::<f64>();
                }
            };
            stage(&[(A21, k1)], &mut tmp);
            f(t + C2 * h, &tmp, &mut k[0]);
            stage(&[(A31, k1), (A32, &k[0])], &mut tmp);
            f(t + C3 * h, &tmp, &mut k[1]);
            stage(&[(A41, k1), (A42, &k[0]), (A43, &k[1])], &mut tmp);
            f(t + C4 * h, &tmp, &mut k[2]);
            stage(&[(A51, k1), (A52, &k[0]), (A53, &k[1]), (A54, &k[2])], &mut tmp);
            f(t + C5 * h, &tmp, &mut k[3]);
            stage(&[(A61, k1), (A62, &k[0]), (A63, &k[1]), (A64, &k[2]), (A65, &k[3])], &mut tmp);
            f(t + h, &tmp, &mut k[4]);
            stage(&[(A71, k1), (A73, &k[1]), (A74, &k[2]), (A75, &k[3]), (A76, &k[4])], &mut y_new);
            f(t + h, &y_new, &mut k7);

            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k[1][i] + E4 * k[2][i] + E5 * k[3][i] + E6 * k[4][i] + E7 * k7[i]);
                let sc = self.atol[i] + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.t = if last { t_end } else { t + h };
                std::mem::swap(&mut self.y, &mut y_new);
                std::mem::swap(&mut self.k1, &mut k7);
                self.accepted += 1;
                if !last {
                    self.h = h * factor;
                }
                return true;
            }
            self.rejected += 1;
            self.h = h * factor.min(1.0);
        }
    }
}
