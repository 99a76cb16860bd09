//! Explicit time stepping with per-step invariant monitors.
//!
//! Two methods: classical fixed-step RK4, and the Dormand–Prince 5(4) pair
//! with a PI step-size controller (safety factor 0.9).

use std::io::{self, Write};

use thiserror::Error;

use crate::error::Error as ModelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { dt: f64 },
    Adaptive { rtol: f64, atol: f64, dt_min: f64, dt_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub method: Method,
    pub t0: f64,
    pub horizon: f64,
}

impl StepperConfig {
    pub fn rk4(dt: f64, horizon: f64) -> Self {
        Self { method: Method::Rk4 { dt }, t0: 0.0, horizon }
    }

    /// Adaptive stepping with `atol = rtol` and no effective step cap.
    pub fn adaptive(rtol: f64, horizon: f64) -> Self {
        Self { method: Method::Adaptive { rtol, atol: rtol, dt_min: 1e-12, dt_max: f64::INFINITY }, t0: 0.0, horizon }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidArgument(m.to_string()));
        if !(self.horizon.is_finite() && self.t0.is_finite() && self.horizon > self.t0) {
            return bad("horizon must be finite and after t0");
        }
        match self.method {
            Method::Rk4 { dt } if !(dt > 0.0 && dt.is_finite()) => bad("dt must be positive"),
            Method::Adaptive { rtol, atol, .. } if !(rtol > 0.0 && atol > 0.0) => bad("rtol and atol must be positive"),
            Method::Adaptive { dt_min, dt_max, .. } if !(dt_min > 0.0 && dt_min <= dt_max) => {
                bad("need 0 < dt_min <= dt_max")
            }
            _ => Ok(()),
        }
    }
}

/// A named scalar observed at every accepted step. Monitors receive the
/// state by shared reference and cannot alter it.
pub struct Monitor<'a> {
    pub name: String,
    eval: Box<MonitorFn<'a>>,
}

type MonitorFn<'a> = dyn Fn(f64, &[f64]) -> f64 + 'a;

impl<'a> Monitor<'a> {
    pub fn new(name: impl Into<String>, eval: impl Fn(f64, &[f64]) -> f64 + 'a) -> Self {
        Self { name: name.into(), eval: Box::new(eval) }
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> f64 {
        (self.eval)(t, y)
    }
}

pub type Projection<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

/// What to keep of each accepted state.
pub enum Recording<'a> {
    Full,
    Projected(Box<Projection<'a>>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub monitors: Vec<(String, Vec<f64>)>,
    /// Last accepted state in full, whatever the recording mode.
    pub final_state: Vec<f64>,
    pub rejected_steps: usize,
}

impl TrajectoryRecord {
    pub fn monitor(&self, name: &str) -> Option<&[f64]> {
        self.monitors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&f64::NAN)
    }

    /// Largest `|m(t) − m(0)| / max(|m(0)|, floor)` of a monitor.
    pub fn max_relative_drift(&self, name: &str, floor: f64) -> Option<f64> {
        let series = self.monitor(name)?;
        let first = *series.first()?;
        let scale = first.abs().max(floor);
        Some(series.iter().map(|v| (v - first).abs() / scale).fold(0.0, f64::max))
    }

    /// One row per accepted step: `t`, state columns, monitor columns.
    /// Values carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W, state_names: &[String]) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(state_names.iter().cloned());
        header.extend(self.monitors.iter().map(|(n, _)| n.clone()));
        writeln!(out, "{}", header.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt17(*t)];
            row.extend(self.states[k].iter().map(|v| fmt17(*v)));
            row.extend(self.monitors.iter().map(|(_, s)| fmt17(s[k])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbortReason {
    #[error("step size {dt:.3e} fell below dt_min at t = {t}")]
    DtUnderflow { t: f64, dt: f64 },
    #[error("right-hand side is not finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("right-hand side failed at t = {t}: {source}")]
    Rhs { t: f64, source: ModelError },
    #[error("invalid configuration: {0}")]
    Config(ModelError),
}

/// Integration stopped early; `partial` holds every step accepted so far.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{reason}")]
pub struct IntegrateError {
    pub reason: AbortReason,
    pub partial: Box<TrajectoryRecord>,
}

struct Recorder<'m, 'r> {
    record: TrajectoryRecord,
    monitors: &'m [Monitor<'m>],
    recording: &'r Recording<'r>,
}

impl Recorder<'_, '_> {
    fn push(&mut self, t: f64, y: &[f64]) {
        self.record.times.push(t);
        self.record.states.push(match self.recording {
            Recording::Full => y.to_vec(),
            Recording::Projected(f) => f(y),
        });
        for (k, m) in self.monitors.iter().enumerate() {
            self.record.monitors[k].1.push(m.eval(t, y));
        }
    }

    fn fail(mut self, reason: AbortReason, y: &[f64]) -> IntegrateError {
        self.record.final_state = y.to_vec();
        IntegrateError { reason, partial: Box::new(self.record) }
    }
}

pub type Rhs<'a> = dyn FnMut(f64, &[f64], &mut [f64]) -> Result<(), ModelError> + 'a;

fn call(rhs: &mut Rhs<'_>, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), AbortReason> {
    rhs(t, y, out).map_err(|source| AbortReason::Rhs { t, source })?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(AbortReason::NonFinite { t });
    }
    Ok(())
}

/// Integrates `y' = rhs(t, y)` from `cfg.t0` to `cfg.horizon`, keeping the
/// full state at every accepted step.
pub fn integrate(
    rhs: &mut Rhs<'_>,
    initial: &[f64],
    cfg: &StepperConfig,
    monitors: &[Monitor<'_>],
) -> Result<TrajectoryRecord, IntegrateError> {
    integrate_with(rhs, initial, cfg, monitors, &Recording::Full)
}

pub fn integrate_with(
    rhs: &mut Rhs<'_>,
    initial: &[f64],
    cfg: &StepperConfig,
    monitors: &[Monitor<'_>],
    recording: &Recording<'_>,
) -> Result<TrajectoryRecord, IntegrateError> {
    let record = TrajectoryRecord {
        monitors: monitors.iter().map(|m| (m.name.clone(), Vec::new())).collect(),
        ..Default::default()
    };
    let mut rec = Recorder { record, monitors, recording };
    if let Err(e) = cfg.validate() {
        return Err(rec.fail(AbortReason::Config(e), initial));
    }
    rec.push(cfg.t0, initial);
    match cfg.method {
        Method::Rk4 { dt } => rk4(rhs, initial, cfg, dt, rec),
        Method::Adaptive { rtol, atol, dt_min, dt_max } => dopri5(rhs, initial, cfg, rtol, atol, dt_min, dt_max, rec),
    }
}

fn axpy_into(out: &mut [f64], y: &[f64], terms: &[(f64, &[f64])], h: f64) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o = y[i] + h * acc;
    }
}

fn rk4(
    rhs: &mut Rhs<'_>,
    initial: &[f64],
    cfg: &StepperConfig,
    dt: f64,
    mut rec: Recorder<'_, '_>,
) -> Result<TrajectoryRecord, IntegrateError> {
    let n = initial.len();
    let mut y = initial.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let span = cfg.horizon - cfg.t0;
    let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
    for s in 0..steps {
        let t = cfg.t0 + s as f64 * dt;
        let h = if s + 1 == steps { cfg.horizon - t } else { dt };
        let stage = (|| -> Result<(), AbortReason> {
            call(rhs, t, &y, &mut k1)?;
            axpy_into(&mut tmp, &y, &[(0.5, &k1)], h);
            call(rhs, t + 0.5 * h, &tmp, &mut k2)?;
            axpy_into(&mut tmp, &y, &[(0.5, &k2)], h);
            call(rhs, t + 0.5 * h, &tmp, &mut k3)?;
            axpy_into(&mut tmp, &y, &[(1.0, &k3)], h);
            call(rhs, t + h, &tmp, &mut k4)?;
            Ok(())
        })();
        if let Err(reason) = stage {
            return Err(rec.fail(reason, &y));
        }
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_new = if s + 1 == steps { cfg.horizon } else { t + h };
        rec.push(t_new, &y);
    }
    rec.record.final_state = y;
    Ok(rec.record)
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[allow(clippy::too_many_arguments)]
fn dopri5(
    rhs: &mut Rhs<'_>,
    initial: &[f64],
    cfg: &StepperConfig,
    rtol: f64,
    atol: f64,
    dt_min: f64,
    dt_max: f64,
    mut rec: Recorder<'_, '_>,
) -> Result<TrajectoryRecord, IntegrateError> {
    let n = initial.len();
    let mut y = initial.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut t = cfg.t0;

    if let Err(reason) = call(rhs, t, &y, &mut k[0]) {
        return Err(rec.fail(reason, &y));
    }
    let norm = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / n.max(1) as f64).sqrt();
    let d0 = norm(&y).max(1e-5);
    let d1 = norm(&k[0]).max(1e-5);
    let mut h = (0.01 * d0 / d1).clamp(dt_min, dt_max.min(cfg.horizon - cfg.t0));
    let mut fac_old: f64 = 1e-4;
    let expo = 0.2 - 0.75 * BETA;

    while t < cfg.horizon {
        let last = t + h >= cfg.horizon - 1e-14 * cfg.horizon.abs().max(1.0);
        if last {
            h = cfg.horizon - t;
        }
        let stages = (|| -> Result<(), AbortReason> {
            let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
            for (s, row) in rows.iter().enumerate() {
                let (done, rest) = k.split_at_mut(s + 1);
                let terms: Vec<(f64, &[f64])> =
                    row.iter().zip(done.iter()).map(|(&a, ks)| (a, ks.as_slice())).collect();
                axpy_into(&mut tmp, &y, &terms, h);
                call(rhs, t + C[s + 1] * h, &tmp, &mut rest[0])?;
            }
            let terms: Vec<(f64, &[f64])> = B.iter().zip(k.iter()).map(|(&b, ks)| (b, ks.as_slice())).collect();
            axpy_into(&mut y_new, &y, &terms, h);
            call(rhs, t + h, &y_new, &mut k[6])?;
            Ok(())
        })();
        if let Err(reason) = stages {
            return Err(rec.fail(reason, &y));
        }
        let mut err2 = 0.0;
        for i in 0..n {
            let e: f64 = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err2 += (e / sc).powi(2);
        }
        let err = (err2 / n.max(1) as f64).sqrt();
        let fac11 = err.powf(expo);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            fac_old = err.max(1e-4);
            t = if last { cfg.horizon } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            rec.push(t, &y);
            h = (h / fac).min(dt_max);
        } else {
            rec.record.rejected_steps += 1;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
        if h < dt_min && t < cfg.horizon {
            return Err(rec.fail(AbortReason::DtUnderflow { t, dt: h }, &y));
        }
    }
    rec.record.final_state = y;
    Ok(rec.record)
}
