//! Energy functionals on the space of invariant Kähler potentials.
//!
//! Every functional here is invariant under `φ → φ + const` and is evaluated
//! on the non-constant samples of a [`PotentialState`]; only the velocity `u`
//! sees the constant offset.
//!
//! Of the Chen–Tian family `E_k` only `E₀` (the K-energy) and `E₁` exist in
//! complex dimension one. For reference, the general definition is
//!
//! ```text
//! E_k(φ) = (1/V)∫(log(ω_φⁿ/ωⁿ) - h_ω)(Σ_{i≤k} Ric_φ^i ∧ ω_φ^{k-i}) ∧ ω_φ^{n-k}
//!        + (1/V)∫h_ω (Σ_{i≤k} Ric_ω^i ∧ ω^{k-i}) ∧ ω^{n-k}
//!        + ((n-k)/V)∫₀¹∫ φ̇_t (ω_{φ_t}^{k+1} - ω^{k+1}) ∧ ω_{φ_t}^{n-k-1} dt
//! ```
//!
//! and any extension to higher dimension has to redo the wedge bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::geometry::{
    check_density, grad_norm_sq, laplacian, ricci_density, BackgroundGeometry, PotentialState,
};
use crate::grid::Field;

/// Flow velocity `u = log(ρ_φ/ρ₀) + (φ + offset) - h_ω`.
pub fn velocity(bg: &BackgroundGeometry, state: &PotentialState) -> Field {
    let mut u = state.log_ratio() + state.phi() - bg.ricci_potential();
    u.add_scalar_mut(state.offset());
    u
}

/// K-energy, closed form:
/// `(1/V)∫Lρ_φ + (1/V)∫h_ω(ρ₀ - ρ_φ) - (1/2V)∫(φ')²`.
pub fn k_energy(bg: &BackgroundGeometry, state: &PotentialState) -> f64 {
    let g = bg.grid();
    let entropy = g.integrate_weighted(state.log_ratio(), state.rho());
    let ricci = g.integrate_weighted(bg.ricci_potential(), &(bg.rho0() - state.rho()));
    let dirichlet = g.dirichlet_energy(state.phi());
    (entropy + ricci - 0.5 * dirichlet) / bg.volume()
}

/// K-energy from its defining path integral along `φ_τ = τφ`,
/// `-(1/V)∫₀¹∫ φ (R_τ - R̄_τ) ρ_τ ds dτ`, with composite Simpson in τ over
/// `steps` panels (rounded up to an even count).
pub fn k_energy_path(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    steps: usize,
) -> Result<f64, GeometryError> {
    let panels = steps.max(2).div_ceil(2) * 2;
    let g = bg.grid();
    let phi = state.phi();
    let ddphi = g.diff_ss(phi);
    let integrand = |tau: f64| -> Result<f64, GeometryError> {
        let rho = bg.rho0() + &ddphi * tau;
        check_density(g, &rho)?;
        let r = ricci_density(g, &rho);
        let mean_r = g.integrate_density(&r) / bg.volume();
        let excess = r - rho * mean_r;
        Ok(-g.integrate_weighted(phi, &excess) / bg.volume())
    };
    let h = 1.0 / panels as f64;
    let mut sum = integrand(0.0)? + integrand(1.0)?;
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(k as f64 * h)?;
    }
    Ok(sum * h / 3.0)
}

/// Ding–Tian functional,
/// `(1/2V)∫(φ')² - (1/V)∫φρ₀ - log((1/V)∫e^{h_ω - φ}ρ₀)`.
pub fn f_functional(bg: &BackgroundGeometry, state: &PotentialState) -> f64 {
    let g = bg.grid();
    let phi = state.phi();
    let dirichlet = g.dirichlet_energy(phi) / (2.0 * bg.volume());
    let mean = bg.average(phi, bg.rho0());
    dirichlet - mean - bg.log_mean_exp(&(bg.ricci_potential() - phi), bg.rho0())
}

/// `ν - F` through the velocity:
/// `(1/V)∫uρ_φ + (1/V)∫h_ωρ₀ + log((1/V)∫e^{-u}ρ_φ)`.
pub fn nu_minus_f(bg: &BackgroundGeometry, state: &PotentialState, u: &Field) -> f64 {
    bg.average(u, state.rho()) + bg.ricci_mean() + bg.log_mean_exp(&-u, state.rho())
}

/// `E₁ = (1/V)∫(L - h_ω)(r_φ + ρ_φ) + (1/V)∫h_ω(r₀ + ρ₀)`; the path term
/// carries the factor `n - k = 0`.
pub fn e1_energy(bg: &BackgroundGeometry, state: &PotentialState) -> f64 {
    let g = bg.grid();
    let h = bg.ricci_potential();
    let r_phi = ricci_density(g, state.rho());
    let r0 = ricci_density(g, bg.rho0());
    let first = g.integrate_weighted(&(state.log_ratio() - h), &(r_phi + state.rho()));
    let second = g.integrate_weighted(h, &(r0 + bg.rho0()));
    (first + second) / bg.volume()
}

/// Jensen gap `f = (1/V)∫uρ_φ + log((1/V)∫e^{-u}ρ_φ) ≥ 0`.
pub fn jensen_gap_f(bg: &BackgroundGeometry, state: &PotentialState, u: &Field) -> f64 {
    bg.average(u, state.rho()) + bg.log_mean_exp(&-u, state.rho())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UStatistics {
    /// `(1/V)∫uρ_φ`.
    pub c: f64,
    /// `∫u²ρ_φ`.
    pub b: f64,
    /// `(1/V)∫u e^{h_t} ρ_φ`.
    pub ubar: f64,
    /// `-log((1/V)∫e^{-u}ρ_φ)`, so that `h_t = -u + a_t` has `∫e^{h_t}ρ_φ = V`.
    pub a_t: f64,
    pub sup_u: f64,
    pub sup_grad_u_sq: f64,
    pub sup_lap_u: f64,
}

/// `h_t = -u + a_t`, the Ricci potential of `ω_φ` normalized against `ω_φ`.
pub fn normalized_ricci_potential(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    u: &Field,
) -> Field {
    let a_t = -bg.log_mean_exp(&-u, state.rho());
    (-u).add_scalar(a_t)
}

pub fn u_statistics(bg: &BackgroundGeometry, state: &PotentialState, u: &Field) -> UStatistics {
    let g = bg.grid();
    let rho = state.rho();
    let a_t = -bg.log_mean_exp(&-u, rho);
    let weight = u.map(|v| (a_t - v).exp());
    UStatistics {
        c: bg.average(u, rho),
        b: g.integrate_weighted(&u.component_mul(u), rho),
        ubar: g.integrate_weighted(&u.component_mul(&weight), rho) / bg.volume(),
        a_t,
        sup_u: u.amax(),
        sup_grad_u_sq: grad_norm_sq(bg, state, u).max().max(0.0),
        sup_lap_u: laplacian(bg, state, u).amax(),
    }
}

/// Every monitored scalar at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub nu: f64,
    pub f: f64,
    pub e1: f64,
    /// `ν - F - (1/V)∫h_ωρ₀`.
    pub gap: f64,
    pub f_gap: f64,
    /// `(1/V)∫|∇u|²ρ_φ`.
    pub eps: f64,
    pub stats: UStatistics,
}

pub fn evaluate(bg: &BackgroundGeometry, state: &PotentialState) -> FunctionalReport {
    let u = velocity(bg, state);
    let nu = k_energy(bg, state);
    let f = f_functional(bg, state);
    FunctionalReport {
        nu,
        f,
        e1: e1_energy(bg, state),
        gap: nu - f - bg.ricci_mean(),
        f_gap: jensen_gap_f(bg, state, &u),
        eps: bg.grid().dirichlet_energy(&u) / bg.volume(),
        stats: u_statistics(bg, state, &u),
    }
}
