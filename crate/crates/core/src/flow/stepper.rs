//! Time integrators for the potential-level flow.
//!
//! The potential is split as `φ = samples + κ`. Within a step the samples
//! follow `ẏ = w(y) - g` with `w(y) = log(ρ_y/ρ₀) + y - h_ω` and the constant
//! `g = (1/V)∫w(y₀)ρ_{y₀}` frozen at the start of the step, while the offset
//! solves `κ̇ = κ + g` exactly. Since `w(y + κ) = w(y) + κ`, the pair is an
//! exact solution of the flow for the full potential, and the samples stay
//! bounded while the gauge mode `Ceᵗ` accumulates in `κ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::GeometryError;
use crate::geometry::{check_density, BackgroundGeometry, PotentialState};
use crate::grid::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    /// Linearly implicit Euler with the exact Jacobian, extrapolated to
    /// fourth order over the step sequence 1, 2, 3, 4.
    #[default]
    SemiImplicit,
    /// Classical RK4 with step-doubling error control. Stable only for
    /// `dt ≲ 2.8/λ_max` with `λ_max ≈ 0.6 N²`.
    ExplicitRk4,
}

impl Stepper {
    /// Exponent order used by the step-size controller.
    pub fn controller_order(self) -> f64 {
        match self {
            Stepper::SemiImplicit => 4.0,
            Stepper::ExplicitRk4 => 5.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("candidate state left the Kähler cone: {0}")]
    Positivity(#[from] GeometryError),
    #[error("step size {0} is not positive")]
    BadStep(f64),
}

/// Result of one trial step.
#[derive(Debug, Clone)]
pub struct Advance {
    pub state: PotentialState,
    /// Scaled local error estimate; the step is acceptable when `≤ 1`.
    pub error: f64,
}

struct Rhs<'a> {
    bg: &'a BackgroundGeometry,
    shift: f64,
}

impl Rhs<'_> {
    fn density(&self, y: &Field) -> Result<Field, GeometryError> {
        let rho = self.bg.rho0() + self.bg.grid().diff_ss(y);
        check_density(self.bg.grid(), &rho)?;
        Ok(rho)
    }

    fn eval(&self, y: &Field) -> Result<Field, GeometryError> {
        let rho = self.density(y)?;
        let mut out =
            rho.zip_map(self.bg.rho0(), |a, b| (a / b).ln()) + y - self.bg.ricci_potential();
        out.add_scalar_mut(-self.shift);
        Ok(out)
    }

    /// `∂w/∂y = diag(1/ρ_y)·D_ss + I`.
    fn jacobian(&self, y: &Field) -> Result<DMatrix<f64>, GeometryError> {
        let rho = self.density(y)?;
        let mut j = self.bg.grid().d_ss().clone();
        for (i, mut row) in j.row_iter_mut().enumerate() {
            row /= rho[i];
        }
        for i in 0..y.len() {
            j[(i, i)] += 1.0;
        }
        Ok(j)
    }
}

fn error_norm(a: &Field, b: &Field, reference: &Field, tol: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(reference.iter())
        .map(|((x, y), r)| (x - y).abs() / (tol + tol * r.abs().max(x.abs())))
        .fold(0.0, f64::max)
}

/// Mean of `w(y)` against `ρ_y`, the constant frozen for the step.
fn frozen_shift(bg: &BackgroundGeometry, state: &PotentialState) -> f64 {
    let w = state.log_ratio() + state.phi() - bg.ricci_potential();
    bg.average(&w, state.rho())
}

fn finish(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    samples: Field,
    shift: f64,
    dt: f64,
    error: f64,
) -> Result<Advance, StepError> {
    // Keep the samples centered; round-off in the functionals scales with
    // their constant part.
    let center = bg.grid().integrate_sigma(&samples) / 2.0;
    let offset = state.offset() * dt.exp() + dt.exp_m1() * shift + center;
    let next =
        PotentialState::with_offset(bg, samples.add_scalar(-center), offset, state.t() + dt)?;
    Ok(Advance { state: next, error })
}

impl Stepper {
    /// One trial step of size `dt`; `tol` scales the error estimate.
    pub fn advance(
        self,
        bg: &BackgroundGeometry,
        state: &PotentialState,
        dt: f64,
        tol: f64,
    ) -> Result<Advance, StepError> {
        if dt.is_nan() || dt <= 0.0 {
            return Err(StepError::BadStep(dt));
        }
        let shift = frozen_shift(bg, state);
        let rhs = Rhs { bg, shift };
        let y0 = state.phi();
        match self {
            Stepper::SemiImplicit => {
                let (y, err) = extrapolated_linearly_implicit(&rhs, y0, dt)?;
                let error = error_norm(&y, &err, y0, tol);
                finish(bg, state, y, shift, dt, error)
            }
            Stepper::ExplicitRk4 => {
                let big = rk4(&rhs, y0, dt)?;
                let half = rk4(&rhs, y0, 0.5 * dt)?;
                let small = rk4(&rhs, &half, 0.5 * dt)?;
                let error = error_norm(&small, &big, y0, tol) / 15.0;
                let y = &small + (&small - &big) / 15.0;
                finish(bg, state, y, shift, dt, error)
            }
        }
    }
}

const SEQUENCE: [usize; 4] = [1, 2, 3, 4];

/// Returns the extrapolated value and the next-lower-order value.
fn extrapolated_linearly_implicit(
    rhs: &Rhs<'_>,
    y0: &Field,
    dt: f64,
) -> Result<(Field, Field), StepError> {
    let n = y0.len();
    let jac = rhs.jacobian(y0)?;
    let mut table: Vec<Vec<Field>> = Vec::with_capacity(SEQUENCE.len());
    for (row, &substeps) in SEQUENCE.iter().enumerate() {
        let h = dt / substeps as f64;
        let mut m = &jac * (-h);
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let lu = m.lu();
        let mut y = y0.clone();
        for _ in 0..substeps {
            let f = rhs.eval(&y)? * h;
            let delta = lu.solve(&f).ok_or(StepError::BadStep(dt))?;
            y += delta;
        }
        let mut entries = vec![y];
        for k in 1..=row {
            let ratio = substeps as f64 / SEQUENCE[row - k] as f64 - 1.0;
            let prev = &entries[k - 1];
            let next = prev + (prev - &table[row - 1][k - 1]) / ratio;
            entries.push(next);
        }
        table.push(entries);
    }
    let last = table.pop().expect("non-empty table");
    let k = last.len();
    Ok((last[k - 1].clone(), last[k - 2].clone()))
}

fn rk4(rhs: &Rhs<'_>, y0: &Field, dt: f64) -> Result<Field, StepError> {
    let k1 = rhs.eval(y0)?;
    let k2 = rhs.eval(&(y0 + &k1 * (0.5 * dt)))?;
    let k3 = rhs.eval(&(y0 + &k2 * (0.5 * dt)))?;
    let k4 = rhs.eval(&(y0 + &k3 * dt))?;
    Ok(y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}
