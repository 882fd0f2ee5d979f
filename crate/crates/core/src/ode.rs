//! Dormand-Prince 5(4) with Hairer's fourth-order continuous extension,
//! step-size PI control and optional manifold projection between steps.

use serde::{Deserialize, Serialize};

use crate::error::{FocalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_max: f64,
    /// Project back onto the constraint manifold after this many accepted steps.
    pub projection_every: usize,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-13,
            max_step: 0.25,
            t_max: 50.0,
            projection_every: 1,
            max_steps: 20_000_000,
        }
    }
}

impl IntegratorOptions {
    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.rel_tol) || !positive(self.abs_tol) {
            return Err(FocalError::invalid("integrator tolerances must be positive"));
        }
        if !positive(self.t_max) {
            return Err(FocalError::invalid("t_max must be positive"));
        }
        if !positive(self.max_step) {
            return Err(FocalError::invalid("max_step must be positive"));
        }
        if self.projection_every == 0 {
            return Err(FocalError::invalid("projection_every must be at least 1"));
        }
        Ok(())
    }
}

/// A first-order system `y' = f(y)` (autonomous) living on a constraint manifold.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, state: &[f64], out: &mut [f64]);

    /// Pull a drifted state back onto the constraint manifold.
    fn project(&self, _state: &mut [f64]) {}

    /// `Some(reason)` stops the integration before the state is accepted.
    fn halt(&self, _state: &[f64]) -> Option<String> {
        None
    }
}

// Dormand-Prince 5(4) tableau.
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

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// One accepted step together with its dense-output polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn dim(&self) -> usize {
        self.rcont[0].len()
    }

    /// Start state of the step.
    pub fn start(&self) -> &[f64] {
        &self.rcont[0]
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let [r0, r1, r2, r3, r4] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r0[i] + theta * (r1[i] + theta1 * (r2[i] + theta * (r3[i] + theta1 * r4[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    Stopped,
    Halted(String),
}

#[derive(Debug, Clone)]
pub struct IntegrationSummary {
    pub t_end: f64,
    pub state: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub termination: Termination,
}

/// Failure with the time reached; callers attach partial results.
#[derive(Debug, Clone)]
pub struct StepFailure {
    pub t: f64,
    pub reason: String,
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], rtol: f64, atol: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..y0.len() {
        let sk = atol + rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sk;
        sum += r * r;
    }
    (sum / y0.len() as f64).sqrt()
}

fn initial_step<S: OdeSystem>(sys: &S, y0: &[f64], f0: &[f64], opts: &IntegratorOptions) -> f64 {
    let n = y0.len();
    let scaled = |v: &[f64]| -> f64 {
        let s: f64 = v
            .iter()
            .zip(y0)
            .map(|(v, y)| {
                let sk = opts.abs_tol + opts.rel_tol * y.abs();
                (v / sk).powi(2)
            })
            .sum();
        (s / n as f64).sqrt()
    };
    let d0 = scaled(y0);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(opts.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(&y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.max_step)
}

/// Integrates from `t = 0` to `opts.t_max`, calling `observer` after every accepted
/// (and, when due, projected) step with the dense step and the new state.
pub fn integrate<S, F>(
    sys: &S,
    y_init: &[f64],
    opts: &IntegratorOptions,
    mut observer: F,
) -> std::result::Result<IntegrationSummary, StepFailure>
where
    S: OdeSystem,
    F: FnMut(&DenseStep, &[f64]) -> Control,
{
    let n = sys.dim();
    assert_eq!(y_init.len(), n, "state dimension mismatch");
    let t_end = opts.t_max;
    let mut t = 0.0;
    let mut y = y_init.to_vec();
    let mut k1 = vec![0.0; n];
    sys.rhs(&y, &mut k1);

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    let mut h = initial_step(sys, &y, &k1, opts);
    let mut fac_old: f64 = 1e-4;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;

    while t < t_end {
        if accepted + rejected >= opts.max_steps {
            return Err(StepFailure {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let mut last = false;
        if t + h >= t_end || t_end - (t + h) < 1e-12 * t_end.max(1.0) {
            h = t_end - t;
            last = true;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(StepFailure {
                t,
                reason: format!("step size underflow (h = {h:.3e})"),
            });
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(&tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(&tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(&tmp, &mut k6);
        for i in 0..n {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(&y_new, &mut k7);
        for i in 0..n {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&y, &y_new, &err, opts.rel_tol, opts.abs_tol);
        if !e.is_finite() {
            return Err(StepFailure {
                t,
                reason: "non-finite error estimate".into(),
            });
        }

        let fac11 = e.powf(0.2 - BETA * 0.75);
        if e <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(opts.max_step);
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = e.max(1e-4);

            if let Some(reason) = sys.halt(&y_new) {
                return Ok(IntegrationSummary {
                    t_end: t,
                    state: y,
                    accepted,
                    rejected,
                    termination: Termination::Halted(reason),
                });
            }

            let mut rcont = [
                y.clone(),
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
            ];
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - h * k7[i] - bspl;
                rcont[4][i] = h
                    * (D1 * k1[i]
                        + D3 * k3[i]
                        + D4 * k4[i]
                        + D5 * k5[i]
                        + D6 * k6[i]
                        + D7 * k7[i]);
            }
            let step = DenseStep { t0: t, h, rcont };

            accepted += 1;
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            if accepted.is_multiple_of(opts.projection_every) {
                sys.project(&mut y);
                sys.rhs(&y, &mut k1);
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }
            last_rejected = false;
            h = h_new;

            if observer(&step, &y) == Control::Stop {
                return Ok(IntegrationSummary {
                    t_end: t,
                    state: y,
                    accepted,
                    rejected,
                    termination: Termination::Stopped,
                });
            }
        } else {
            rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }

    Ok(IntegrationSummary {
        t_end: t,
        state: y,
        accepted,
        rejected,
        termination: Termination::Completed,
    })
}

/// Brent's method for a bracketed root of `f` on `[a, b]`.
pub fn brent_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
) -> Result<f64> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(FocalError::NumericalFailure(format!(
            "root not bracketed on [{a}, {b}]"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(FocalError::NumericalFailure("Brent iteration did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Harmonic oscillator y'' = -y as a first-order system.
    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, s: &[f64], out: &mut [f64]) {
            out[0] = s[1];
            out[1] = -s[0];
        }
    }

    #[test]
    fn oscillator_full_period() {
        let opts = IntegratorOptions::default().with_t_max(2.0 * std::f64::consts::PI);
        let summary = integrate(&Oscillator, &[1.0, 0.0], &opts, |_, _| Control::Continue).unwrap();
        assert_eq!(summary.termination, Termination::Completed);
        assert!((summary.t_end - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert!((summary.state[0] - 1.0).abs() < 1e-10);
        assert!(summary.state[1].abs() < 1e-10);
    }

    #[test]
    fn dense_output_interpolates_within_tolerance() {
        let opts = IntegratorOptions::default().with_t_max(3.0);
        let mut worst: f64 = 0.0;
        integrate(&Oscillator, &[1.0, 0.0], &opts, |step, _| {
            for k in 0..=8 {
                let t = step.t0 + step.h * k as f64 / 8.0;
                let y = step.eval(t);
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
            }
            Control::Continue
        })
        .unwrap();
        assert!(worst < 1e-10, "dense output error {worst:.3e}");
    }

    #[test]
    fn observer_can_stop() {
        let opts = IntegratorOptions::default().with_t_max(10.0);
        let mut count = 0;
        let summary = integrate(&Oscillator, &[1.0, 0.0], &opts, |_, _| {
            count += 1;
            if count == 3 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert_eq!(summary.termination, Termination::Stopped);
        assert_eq!(summary.accepted, 3);
    }

    #[test]
    fn brent_finds_cosine_root() {
        let r = brent_root(f64::cos, 1.0, 2.0, 1f64.cos(), 2f64.cos(), 1e-14).unwrap();
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
        assert!(brent_root(|x| x, 1.0, 2.0, 1.0, 2.0, 1e-12).is_err());
    }

    #[test]
    fn options_validation() {
        assert!(IntegratorOptions::default().validate().is_ok());
        let bad = IntegratorOptions {
            projection_every: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(IntegratorOptions::default().with_t_max(-1.0).validate().is_err());
    }
}
