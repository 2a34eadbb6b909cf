//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)) with
//! fourth-order dense output.
//!
//! The simulator drives this stepper segment by segment: each accepted step
//! yields a dense interpolant that event location bisects on, and after a
//! discrete event the stepper is reinitialised at the event state. The
//! first-same-as-last stage is reused across accepted steps.

#![allow(clippy::needless_range_loop)]

use thiserror::Error;

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_rejects: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig {
            rtol: 1e-6,
            atol: 1e-9,
            h_max: f64::INFINITY,
            max_rejects: 100,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("derivative evaluation produced a non-finite value near t = {t}")]
    NonFinite { t: f64 },
    #[error("too many consecutive step rejections at t = {t}")]
    TooManyRejects { t: f64 },
}

/// The dense interpolant of one accepted step over `[t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    cont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Interpolates the full state at `t`, which must lie in `[t0, t1]`.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let theta = if self.h == 0.0 {
            0.0
        } else {
            ((t - self.t0) / self.h).clamp(0.0, 1.0)
        };
        let om = 1.0 - theta;
        for i in 0..out.len() {
            out[i] = self.cont[0][i]
                + theta
                    * (self.cont[1][i]
                        + om * (self.cont[2][i] + theta * (self.cont[3][i] + om * self.cont[4][i])));
        }
    }
}

/// Dormand-Prince 5(4) stepper over a fixed-dimension system.
pub struct Dopri5 {
    cfg: OdeConfig,
    dim: usize,
    t: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 7],
    h: f64,
    stage: Vec<f64>,
    dense: DenseStep,
    fsal_valid: bool,
}

impl Dopri5 {
    pub fn new(cfg: OdeConfig, t0: f64, y0: &[f64]) -> Self {
        let dim = y0.len();
        let zeros = || vec![0.0; dim];
        Dopri5 {
            cfg,
            dim,
            t: t0,
            y: y0.to_vec(),
            k: [zeros(), zeros(), zeros(), zeros(), zeros(), zeros(), zeros()],
            h: 0.0,
            stage: zeros(),
            dense: DenseStep {
                t0,
                h: 0.0,
                cont: [zeros(), zeros(), zeros(), zeros(), zeros()],
            },
            fsal_valid: false,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Restarts the stepper at a new state, keeping the last accepted step
    /// size as the starting guess.
    pub fn reinit(&mut self, t: f64, y: &[f64]) {
        self.t = t;
        self.y.copy_from_slice(y);
        self.fsal_valid = false;
    }

    fn initial_step<F>(&self, rhs: &mut F, limit: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let mut f0 = vec![0.0; self.dim];
        rhs(self.t, &self.y, &mut f0);
        let mut d0: f64 = 0.0;
        let mut d1: f64 = 0.0;
        for i in 0..self.dim {
            let sc = self.cfg.atol + self.cfg.rtol * self.y[i].abs();
            d0 += (self.y[i] / sc).powi(2);
            d1 += (f0[i] / sc).powi(2);
        }
        d0 = (d0 / self.dim as f64).sqrt();
        d1 = (d1 / self.dim as f64).sqrt();
        let mut h = if d0 < 1e-10 || d1 < 1e-10 {
            1e-6 * limit.max(1e-6)
        } else {
            0.01 * d0 / d1
        };
        h = h.min(self.cfg.h_max).min(limit);
        h.max(f64::MIN_POSITIVE)
    }

    /// Takes one accepted step, no further than `t_limit`, and returns its
    /// dense interpolant. The internal state advances to the step end.
    pub fn step<F>(&mut self, rhs: &mut F, t_limit: f64) -> Result<&DenseStep, OdeError>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        debug_assert!(t_limit > self.t);
        if self.h == 0.0 || !self.fsal_valid {
            if self.h == 0.0 {
                self.h = self.initial_step(rhs, t_limit - self.t);
            }
            rhs(self.t, &self.y, &mut self.k[0]);
        }

        let mut rejects = 0;
        loop {
            let h = self.h.min(t_limit - self.t).min(self.cfg.h_max);
            if h < 1e-13 * self.t.abs().max(1.0) {
                return Err(OdeError::StepSizeUnderflow { t: self.t });
            }

            self.stages(rhs, h);

            // WRMS error norm over the embedded 4th-order difference.
            let mut err: f64 = 0.0;
            let mut finite = true;
            for i in 0..self.dim {
                let y1 = self.stage[i];
                if !y1.is_finite() {
                    finite = false;
                    break;
                }
                let e = h
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
                let sc = self.cfg.atol + self.cfg.rtol * self.y[i].abs().max(y1.abs());
                err += (e / sc).powi(2);
            }
            err = (err / self.dim as f64).sqrt();

            if !finite || !err.is_finite() {
                rejects += 1;
                if rejects > self.cfg.max_rejects {
                    return Err(OdeError::NonFinite { t: self.t });
                }
                self.h = h * 0.25;
                continue;
            }

            if err <= 1.0 {
                self.build_dense(h);
                self.t += h;
                std::mem::swap(&mut self.y, &mut self.stage);
                self.k.swap(0, 6); // first-same-as-last
                self.fsal_valid = true;

                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                self.h = (h * fac).min(self.cfg.h_max);
                return Ok(&self.dense);
            }

            rejects += 1;
            if rejects > self.cfg.max_rejects {
                return Err(OdeError::TooManyRejects { t: self.t });
            }
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            self.h = h * fac;
        }
    }

    fn stages<F>(&mut self, rhs: &mut F, h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = self.dim;
        let t = self.t;
        let y = &self.y;

        for i in 0..n {
            self.stage[i] = y[i] + h * A21 * self.k[0][i];
        }
        rhs(t + C2 * h, &self.stage, &mut self.k[1]);

        for i in 0..n {
            self.stage[i] = y[i] + h * (A31 * self.k[0][i] + A32 * self.k[1][i]);
        }
        rhs(t + C3 * h, &self.stage, &mut self.k[2]);

        for i in 0..n {
            self.stage[i] =
                y[i] + h * (A41 * self.k[0][i] + A42 * self.k[1][i] + A43 * self.k[2][i]);
        }
        rhs(t + C4 * h, &self.stage, &mut self.k[3]);

        for i in 0..n {
            self.stage[i] = y[i]
                + h * (A51 * self.k[0][i]
                    + A52 * self.k[1][i]
                    + A53 * self.k[2][i]
                    + A54 * self.k[3][i]);
        }
        rhs(t + C5 * h, &self.stage, &mut self.k[4]);

        for i in 0..n {
            self.stage[i] = y[i]
                + h * (A61 * self.k[0][i]
                    + A62 * self.k[1][i]
                    + A63 * self.k[2][i]
                    + A64 * self.k[3][i]
                    + A65 * self.k[4][i]);
        }
        rhs(t + h, &self.stage, &mut self.k[5]);

        // 5th-order solution; its derivative is the FSAL stage.
        for i in 0..n {
            self.stage[i] = y[i]
                + h * (B1 * self.k[0][i]
                    + B3 * self.k[2][i]
                    + B4 * self.k[3][i]
                    + B5 * self.k[4][i]
                    + B6 * self.k[5][i]);
        }
        rhs(t + h, &self.stage, &mut self.k[6]);
    }

    fn build_dense(&mut self, h: f64) {
        self.dense.t0 = self.t;
        self.dense.h = h;
        for i in 0..self.dim {
            let y0 = self.y[i];
            let y1 = self.stage[i];
            let dy = y1 - y0;
            let bspl = h * self.k[0][i] - dy;
            self.dense.cont[0][i] = y0;
            self.dense.cont[1][i] = dy;
            self.dense.cont[2][i] = bspl;
            self.dense.cont[3][i] = dy - h * self.k[6][i] - bspl;
            self.dense.cont[4][i] = h
                * (D1 * self.k[0][i]
                    + D3 * self.k[2][i]
                    + D4 * self.k[3][i]
                    + D5 * self.k[4][i]
                    + D6 * self.k[5][i]
                    + D7 * self.k[6][i]);
        }
    }
}
