//! Kähler–Ricci flow on potentials, `∂φ/∂t = log(ρ_φ/ρ₀) + φ - h_ω`.
//!
//! [`run`] integrates with adaptive steps and records every monitor at every
//! accepted step. The gauge of the recorded solution is the literal one
//! (`φ(0) = φ₀`); [`renormalize_c`] moves the `c`-dependent series to the
//! normalized gauge afterwards.

mod gauge;
mod stepper;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::{e1_energy, f_functional, jensen_gap_f, k_energy, u_statistics};
use crate::geometry::{BackgroundGeometry, PotentialState};
use crate::grid::Field;

pub use gauge::{
    normalized_mean, perelman_diagnostics, renormalize_c, NormalizedSeries, PerelmanCeilings,
};
pub use stepper::{Advance, StepError, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_max: f64,
    /// Stop once `sup|∇u|² < conv_tol`.
    pub conv_tol: f64,
    /// Accepted steps between stored potential snapshots (0 disables).
    pub snapshot_every: usize,
    pub stepper: Stepper,
    /// Mixed absolute/relative local error tolerance on the samples.
    pub step_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            dt_min: 1e-9,
            dt_max: 5e-3,
            t_max: 30.0,
            conv_tol: 1e-8,
            snapshot_every: 100,
            stepper: Stepper::SemiImplicit,
            step_tol: 1e-9,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_init
            && self.dt_init <= self.dt_max
            && self.t_max > 0.0
            && self.conv_tol > 0.0
            && self.step_tol > 0.0;
        if ok
            && [self.dt_init, self.dt_min, self.dt_max, self.t_max]
                .iter()
                .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(FlowError::InvalidConfig(format!(
                "need 0 < dt_min <= dt_init <= dt_max, t_max > 0, conv_tol > 0, step_tol > 0; got {self:?}"
            )))
        }
    }
}

/// Reject a step whose `sup|u - c|` moves by more than this.
pub const SUP_U_GUARD: f64 = 0.5;
/// Reject a step whose `min m / max m` falls below this.
pub const POSITIVITY_GUARD: f64 = 1e-8;

/// Monitors at one accepted state.
///
/// `u_dev = u - c` is the part of the velocity that does not depend on the
/// gauge; statistics that do depend on it (`b`, `ū`, `a_t`, `sup|u|`) are
/// recorded for `u_dev` and shifted by [`renormalize_c`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub t: f64,
    /// Step that produced this record (0 for the initial state).
    pub dt: f64,
    pub nu: f64,
    pub f: f64,
    pub e1: f64,
    /// `(1/V)∫uρ_φ` in the recorded gauge.
    pub c: f64,
    /// `ε = (1/V)∫|∇u|²ρ_φ`.
    pub eps: f64,
    pub f_gap: f64,
    /// `∫u_dev²ρ_φ`.
    pub var_u: f64,
    pub ubar_dev: f64,
    pub a_dev: f64,
    pub u_dev_min: f64,
    pub u_dev_max: f64,
    /// `sup|h_t|` with `h_t = -u + a_t` (gauge-free).
    pub sup_h: f64,
    pub sup_grad_u_sq: f64,
    pub sup_lap_u: f64,
    /// `∫ρ_φ ds - V`.
    pub volume_error: f64,
}

impl FlowRecord {
    pub fn measure(bg: &BackgroundGeometry, state: &PotentialState, dt: f64) -> Self {
        let w = state.log_ratio() + state.phi() - bg.ricci_potential();
        let mean_w = bg.average(&w, state.rho());
        let u_dev = w.add_scalar(-mean_w);
        let stats = u_statistics(bg, state, &u_dev);
        let nu = k_energy(bg, state);
        let f = f_functional(bg, state);
        let sup_h = u_dev
            .iter()
            .map(|v| (stats.a_t - v).abs())
            .fold(0.0, f64::max);
        Self {
            t: state.t(),
            dt,
            nu,
            f,
            e1: e1_energy(bg, state),
            c: mean_w + state.offset(),
            eps: bg.grid().dirichlet_energy(&u_dev) / bg.volume(),
            f_gap: jensen_gap_f(bg, state, &u_dev),
            var_u: stats.b,
            ubar_dev: stats.ubar,
            a_dev: stats.a_t,
            u_dev_min: u_dev.min(),
            u_dev_max: u_dev.max(),
            sup_h,
            sup_grad_u_sq: stats.sup_grad_u_sq,
            sup_lap_u: stats.sup_lap_u,
            volume_error: bg.grid().integrate_density(state.rho()) - bg.volume(),
        }
    }

    /// `ν - F - (1/V)∫h_ωρ₀` given the background constant.
    pub fn gap(&self, ricci_mean: f64) -> f64 {
        self.nu - self.f - ricci_mean
    }

    fn sup_u_dev(&self) -> f64 {
        self.u_dev_max.abs().max(self.u_dev_min.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Horizon,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    /// Full potential `φ + offset` at the nodes.
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    /// Background constant `(1/V)∫h_ωρ₀`.
    pub ricci_mean: f64,
    pub volume: f64,
    /// Last accepted state, absent when the initial potential was invalid.
    pub final_state: Option<PotentialState>,
}

impl FlowTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> Option<&FlowRecord> {
        self.records.last()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Advances `state` by exactly `dt` with the given stepper; the local error
/// estimate is ignored.
pub fn step(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    dt: f64,
    stepper: Stepper,
) -> Result<PotentialState, StepError> {
    stepper.advance(bg, state, dt, 1.0).map(|a| a.state)
}

fn snapshot(state: &PotentialState) -> Snapshot {
    Snapshot {
        t: state.t(),
        phi: state.potential().iter().copied().collect(),
    }
}

/// Integrates the flow from `phi0` until convergence, the horizon, or
/// step-size collapse. An invalid `phi0` yields an empty degenerate trace.
pub fn run(
    bg: &BackgroundGeometry,
    phi0: &Field,
    cfg: &FlowConfig,
) -> Result<FlowTrace, FlowError> {
    cfg.validate()?;
    let mut trace = FlowTrace {
        records: Vec::new(),
        snapshots: Vec::new(),
        termination: Termination::Degenerate,
        ricci_mean: bg.ricci_mean(),
        volume: bg.volume(),
        final_state: None,
    };
    // The flow depends on φ₀ only through the full potential; starting from
    // centered samples makes step control blind to the constant part.
    let center = bg.grid().integrate_sigma(phi0) / 2.0;
    let Ok(mut state) = PotentialState::with_offset(bg, phi0.add_scalar(-center), center, 0.0)
    else {
        return Ok(trace);
    };
    let mut record = FlowRecord::measure(bg, &state, 0.0);
    trace.records.push(record);
    if cfg.snapshot_every > 0 {
        trace.snapshots.push(snapshot(&state));
    }

    let order = cfg.stepper.controller_order();
    let mut dt = cfg.dt_init;
    let mut accepted = 0usize;
    let termination = loop {
        if record.sup_grad_u_sq < cfg.conv_tol {
            break Termination::Converged;
        }
        let remaining = cfg.t_max - state.t();
        if remaining <= cfg.dt_min {
            break Termination::Horizon;
        }
        if dt < cfg.dt_min {
            break Termination::Degenerate;
        }
        let trial = dt.min(remaining);
        let outcome = cfg.stepper.advance(bg, &state, trial, cfg.step_tol);
        let adv = match outcome {
            Ok(adv) if adv.error <= 1.0 => adv,
            Ok(adv) => {
                let factor = (0.9 * adv.error.powf(-1.0 / order)).clamp(0.1, 0.5);
                dt = trial * factor;
                continue;
            }
            Err(_) => {
                dt = trial * 0.5;
                continue;
            }
        };
        if adv.state.positivity_margin(bg.grid()) < POSITIVITY_GUARD {
            dt = trial * 0.5;
            continue;
        }
        let next = FlowRecord::measure(bg, &adv.state, trial);
        if (next.sup_u_dev() - record.sup_u_dev()).abs() > SUP_U_GUARD {
            dt = trial * 0.5;
            continue;
        }
        state = adv.state;
        record = next;
        trace.records.push(record);
        accepted += 1;
        if cfg.snapshot_every > 0 && accepted.is_multiple_of(cfg.snapshot_every) {
            trace.snapshots.push(snapshot(&state));
        }
        let growth = if adv.error > 0.0 {
            (0.9 * adv.error.powf(-1.0 / order)).clamp(0.2, 4.0)
        } else {
            4.0
        };
        // A step clipped at the horizon does not shrink the controller.
        dt = (dt.max(trial) * growth).clamp(cfg.dt_min, cfg.dt_max);
    };
    if cfg.snapshot_every > 0 && trace.snapshots.last().map(|s| s.t) != Some(state.t()) {
        trace.snapshots.push(snapshot(&state));
    }
    trace.termination = termination;
    trace.final_state = Some(state);
    Ok(trace)
}
