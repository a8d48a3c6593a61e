//! Adaptive explicit Runge-Kutta integration, Fehlberg 7(8) pair with PI
//! step-size control. The 8th-order solution is propagated; the embedded
//! 7th-order difference drives the controller.

use thiserror::Error;

const STAGES: usize = 13;

const C: [f64; STAGES] = [
    0.0,
    2.0 / 27.0,
    1.0 / 9.0,
    1.0 / 6.0,
    5.0 / 12.0,
    0.5,
    5.0 / 6.0,
    1.0 / 6.0,
    2.0 / 3.0,
    1.0 / 3.0,
    1.0,
    0.0,
    1.0,
];

const A: [[f64; 12]; STAGES] = [
    [0.0; 12],
    [2.0 / 27.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 36.0, 1.0 / 12.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 24.0, 0.0, 1.0 / 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        5.0 / 12.0,
        0.0,
        -25.0 / 16.0,
        25.0 / 16.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        1.0 / 20.0,
        0.0,
        0.0,
        1.0 / 4.0,
        1.0 / 5.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -25.0 / 108.0,
        0.0,
        0.0,
        125.0 / 108.0,
        -65.0 / 27.0,
        125.0 / 54.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        31.0 / 300.0,
        0.0,
        0.0,
        0.0,
        61.0 / 225.0,
        -2.0 / 9.0,
        13.0 / 900.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        2.0,
        0.0,
        0.0,
        -53.0 / 6.0,
        704.0 / 45.0,
        -107.0 / 9.0,
        67.0 / 90.0,
        3.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -91.0 / 108.0,
        0.0,
        0.0,
        23.0 / 108.0,
        -976.0 / 135.0,
        311.0 / 54.0,
        -19.0 / 60.0,
        17.0 / 6.0,
        -1.0 / 12.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        2383.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -301.0 / 82.0,
        2133.0 / 4100.0,
        45.0 / 82.0,
        45.0 / 164.0,
        18.0 / 41.0,
        0.0,
        0.0,
    ],
    [
        3.0 / 205.0,
        0.0,
        0.0,
        0.0,
        0.0,
        -6.0 / 41.0,
        -3.0 / 205.0,
        -3.0 / 41.0,
        3.0 / 41.0,
        6.0 / 41.0,
        0.0,
        0.0,
    ],
    [
        -1777.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -289.0 / 82.0,
        2193.0 / 4100.0,
        51.0 / 82.0,
        33.0 / 164.0,
        12.0 / 41.0,
        0.0,
        1.0,
    ],
];

/// 8th-order weights (stages 0 and 10 drop out, 11 and 12 enter).
const B8: [f64; STAGES] = [
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    34.0 / 105.0,
    9.0 / 35.0,
    9.0 / 35.0,
    9.0 / 280.0,
    9.0 / 280.0,
    0.0,
    41.0 / 840.0,
    41.0 / 840.0,
];

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget exhausted after {0} steps")]
    MaxSteps(usize),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveRk {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl AdaptiveRk {
    pub fn new(rtol: f64) -> Self {
        Self {
            rtol,
            atol: 1e-14,
            max_steps: 5_000_000,
        }
    }

    /// Integrates y' = f(t, y) from t0 to t1 (t1 > t0), updating `y` in
    /// place. `on_sample` is invoked at each of the strictly increasing
    /// `samples` times, which the stepper hits exactly.
    pub fn integrate_sampled<F, S>(
        &self,
        mut f: F,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        samples: &[f64],
        mut on_sample: S,
    ) -> Result<StepStats, OdeError>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        S: FnMut(usize, f64, &[f64]),
    {
        let dim = y.len();
        let mut k = vec![vec![0.0; dim]; STAGES];
        let mut y_stage = vec![0.0; dim];
        let mut y_new = vec![0.0; dim];
        let mut t = t0;
        let mut stats = StepStats::default();
        let mut next_sample = 0usize;

        while next_sample < samples.len() && samples[next_sample] <= t0 + 1e-300 {
            on_sample(next_sample, t0, y);
            next_sample += 1;
        }
        if t1 <= t0 {
            return Ok(stats);
        }

        // initial step size from the first derivative magnitude
        f(t, y, &mut k[0]);
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let fnorm = k[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut h = if fnorm > 1e-30 {
            (0.01 * (ynorm + self.atol) / fnorm).min((t1 - t0) / 10.0)
        } else {
            (t1 - t0) / 100.0
        }
        .max(1e-12);
        let mut err_prev: f64 = 1.0;

        loop {
            if stats.steps + stats.rejected > self.max_steps {
                return Err(OdeError::MaxSteps(self.max_steps));
            }
            let mut target = t1;
            if next_sample < samples.len() {
                target = target.min(samples[next_sample]);
            }
            if t >= t1 - 1e-14 * t1.abs().max(1.0) {
                break;
            }
            let mut h_step = h.min(target - t);
            if h_step <= 0.0 {
                // target is numerically at t; emit and continue
                if next_sample < samples.len() && (samples[next_sample] - t).abs() < 1e-12 {
                    on_sample(next_sample, t, y);
                    next_sample += 1;
                    continue;
                }
                break;
            }
            let hit_target = h_step >= target - t - 1e-14 * target.abs().max(1.0);
            if hit_target {
                h_step = target - t;
            }

            f(t, y, &mut k[0]);
            for s in 1..STAGES {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc += a * kj[i];
                        }
                    }
                    y_stage[i] = y[i] + h_step * acc;
                }
                let ts = t + C[s] * h_step;
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                f(ts, &y_stage, &mut tail[0]);
            }
            for i in 0..dim {
                let mut acc = 0.0;
                for (s, ks) in k.iter().enumerate() {
                    let b = B8[s];
                    if b != 0.0 {
                        acc += b * ks[i];
                    }
                }
                y_new[i] = y[i] + h_step * acc;
            }
            // embedded error: h * 41/840 * (k0 + k10 - k11 - k12)
            let mut err: f64 = 0.0;
            for i in 0..dim {
                let e = h_step * (41.0 / 840.0) * (k[0][i] + k[10][i] - k[11][i] - k[12][i]);
                let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / scale) * (e / scale);
            }
            err = (err / dim as f64).sqrt();
            if !err.is_finite() {
                return Err(OdeError::NonFinite { t });
            }

            if err <= 1.0 {
                t += h_step;
                y.copy_from_slice(&y_new);
                stats.steps += 1;
                if hit_target
                    && next_sample < samples.len()
                    && (samples[next_sample] - t).abs() < 1e-12 * t.abs().max(1.0) + 1e-300
                {
                    on_sample(next_sample, t, y);
                    next_sample += 1;
                }
                // PI controller (Gustafsson)
                let fac = 0.9 * err.max(1e-20).powf(-0.7 / 8.0) * err_prev.powf(0.4 / 8.0);
                h = (h_step * fac.clamp(0.2, 4.0)).min(t1 - t0);
                err_prev = err.max(1e-20);
            } else {
                stats.rejected += 1;
                let fac = 0.9 * err.powf(-1.0 / 8.0);
                h = h_step * fac.clamp(0.1, 0.9);
                if h < 1e-14 * (t1 - t0).abs() {
                    return Err(OdeError::StepSizeUnderflow { t, h });
                }
            }
        }
        // flush any samples that coincide with t1
        while next_sample < samples.len() && samples[next_sample] <= t1 + 1e-12 {
            on_sample(next_sample, t1, y);
            next_sample += 1;
        }
        Ok(stats)
    }

    /// Endpoint-only integration.
    pub fn integrate<F>(&self, f: F, t0: f64, t1: f64, y: &mut [f64]) -> Result<StepStats, OdeError>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        self.integrate_sampled(f, t0, t1, y, &[], |_, _, _| {})
    }
}
