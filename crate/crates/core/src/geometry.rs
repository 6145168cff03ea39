//! Reduced Kähler geometry of S¹-invariant metrics on CP¹.
//!
//! An invariant Kähler form is `ω = i∂∂̄Φ(s)` and is represented by its
//! reduced density `ρ = Φ''(s) > 0`. Every background potential is written as
//! `Φ₀ = 2 log(1 + eˢ) + ψ(σ)` with ψ smooth on the sphere, so the Kähler
//! class (and the volume `V = ∫ρ ds = 2`) is fixed. All integrals drop the
//! common angular factor.
//!
//! Conventions (complex Laplacian):
//! - `Δf = f''/ρ`, `|∇f|² = (f')²/ρ`, so `∫|∇f|²ρ ds = -∫fΔf ρ ds`;
//! - Ricci density `r = -(log(ρ e⁻ˢ))''`, scalar curvature `R = r/ρ`.
//!
//! The factor `ρ e⁻ˢ = m·(1-σ)²/2` with `m = ρ/(dσ/ds)` smooth and positive;
//! the logarithm of `(1-σ)²/2` is singular at the pole but its second
//! `s`-derivative is `-(dσ/ds)`, which is applied in closed form so that only
//! smooth functions of σ are ever differentiated numerically.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::grid::{barycentric_eval, barycentric_weights, Field, ReducedGrid};

/// Background Kähler potential, as a smooth perturbation ψ of the round one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// ψ = 0: the Fubini–Study (Kähler–Einstein) metric.
    Round,
    /// ψ = a(σ² + σ³/2).
    Cubic { amplitude: f64 },
    /// ψ = a·w²/((σ - c)² + w²), analytic with a pole pair at distance `w`.
    Lorentzian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// ψ given by samples, resampled onto the grid by barycentric
    /// interpolation.
    Sampled { sigma: Vec<f64>, values: Vec<f64> },
}

impl Profile {
    pub fn label(&self) -> String {
        match self {
            Profile::Round => "round".into(),
            Profile::Cubic { amplitude } => format!("cubic:{amplitude}"),
            Profile::Lorentzian {
                amplitude,
                center,
                width,
            } => format!("lorentzian:{amplitude}:{center}:{width}"),
            Profile::Sampled { sigma, .. } => format!("sampled[{}]", sigma.len()),
        }
    }

    /// ψ and its first two σ-derivatives on the grid.
    fn evaluate(&self, grid: &ReducedGrid) -> Result<(Field, Field, Field), GeometryError> {
        let n = grid.len();
        match self {
            Profile::Round => Ok((Field::zeros(n), Field::zeros(n), Field::zeros(n))),
            Profile::Cubic { amplitude: a } => Ok((
                grid.sample(|x| a * (x * x + 0.5 * x * x * x)),
                grid.sample(|x| a * (2.0 * x + 1.5 * x * x)),
                grid.sample(|x| a * (2.0 + 3.0 * x)),
            )),
            Profile::Lorentzian {
                amplitude: a,
                center: c,
                width: w,
            } => {
                if *w <= 0.0 {
                    return Err(GeometryError::InvalidProfile(
                        "lorentzian width must be positive".into(),
                    ));
                }
                let w2 = w * w;
                Ok((
                    grid.sample(|x| a * w2 / ((x - c).powi(2) + w2)),
                    grid.sample(|x| -2.0 * a * w2 * (x - c) / ((x - c).powi(2) + w2).powi(2)),
                    grid.sample(|x| {
                        let d = (x - c).powi(2) + w2;
                        2.0 * a * w2 * (3.0 * (x - c).powi(2) - w2) / d.powi(3)
                    }),
                ))
            }
            Profile::Sampled { sigma, values } => {
                let psi = resample(grid, sigma, values)?;
                let d1 = grid.d_sigma() * &psi;
                let d2 = grid.d_sigma() * &d1;
                Ok((psi, d1, d2))
            }
        }
    }
}

/// Resamples `(sigma, values)` onto the grid nodes by barycentric
/// interpolation. The source nodes must be strictly increasing inside
/// `[-1, 1]` and reach within 0.05 of both poles.
pub fn resample(grid: &ReducedGrid, sigma: &[f64], values: &[f64]) -> Result<Field, GeometryError> {
    if sigma.len() != values.len() {
        return Err(GeometryError::InvalidProfile(format!(
            "sigma has {} entries but values has {}",
            sigma.len(),
            values.len()
        )));
    }
    if sigma.len() < 2 {
        return Err(GeometryError::InvalidProfile(
            "need at least two samples".into(),
        ));
    }
    if sigma.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("resample input"));
    }
    if !sigma.windows(2).all(|w| w[0] < w[1]) {
        return Err(GeometryError::InvalidProfile(
            "sigma must be strictly increasing".into(),
        ));
    }
    let (lo, hi) = (sigma[0], sigma[sigma.len() - 1]);
    if lo < -1.0 || hi > 1.0 || lo > -0.95 || hi < 0.95 {
        return Err(GeometryError::InvalidProfile(format!(
            "sigma range [{lo}, {hi}] does not match the domain [-1, 1]"
        )));
    }
    let w = barycentric_weights(sigma);
    Ok(grid.sample(|x| barycentric_eval(sigma, &w, values, x)))
}

/// Fixed reference metric `ω` together with its Ricci potential.
#[derive(Debug, Clone)]
pub struct BackgroundGeometry {
    grid: Arc<ReducedGrid>,
    profile: Profile,
    psi: Field,
    phi0: Field,
    rho0: Field,
    volume: f64,
    ricci: Field,
    ricci_mean: f64,
}

/// Absolute tolerance on `∫(e^h - 1)ρ₀ ds`.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Builds the background on an `n`-point grid.
pub fn make_background(n: usize, profile: Profile) -> Result<BackgroundGeometry, GeometryError> {
    let grid = Arc::new(ReducedGrid::new(n)?);
    BackgroundGeometry::new(grid, profile)
}

impl BackgroundGeometry {
    pub fn new(grid: Arc<ReducedGrid>, profile: Profile) -> Result<Self, GeometryError> {
        let (psi, dpsi, d2psi) = profile.evaluate(&grid)?;
        let chain = grid.chain();
        let rho0 = Field::from_iterator(
            grid.len(),
            grid.nodes().iter().enumerate().map(|(j, &x)| {
                let c = chain[j];
                c * (1.0 - x * dpsi[j] + c * d2psi[j])
            }),
        );
        check_density(&grid, &rho0)?;
        let phi0 = Field::from_iterator(
            grid.len(),
            grid.nodes()
                .iter()
                .zip(psi.iter())
                .map(|(&x, p)| 2.0 * std::f64::consts::LN_2 - 2.0 * (-x).ln_1p() + p),
        );
        let volume = grid.integrate_density(&rho0);
        let ricci = ricci_potential(&grid, &psi, &rho0)?;
        let residual = grid.integrate_weighted(&ricci.map(|h| h.exp_m1()), &rho0);
        if residual.abs() > NORMALIZATION_TOL {
            return Err(GeometryError::NormalizationResidual { residual });
        }
        let ricci_mean = grid.integrate_weighted(&ricci, &rho0) / volume;
        Ok(Self {
            grid,
            profile,
            psi,
            phi0,
            rho0,
            volume,
            ricci,
            ricci_mean,
        })
    }

    pub fn grid(&self) -> &ReducedGrid {
        &self.grid
    }

    pub fn shared_grid(&self) -> Arc<ReducedGrid> {
        Arc::clone(&self.grid)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Smooth part ψ of the background potential.
    pub fn psi(&self) -> &Field {
        &self.psi
    }

    /// Background potential Φ₀ in the cylinder coordinate.
    pub fn phi0(&self) -> &Field {
        &self.phi0
    }

    pub fn rho0(&self) -> &Field {
        &self.rho0
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Ricci potential `h_ω`.
    pub fn ricci_potential(&self) -> &Field {
        &self.ricci
    }

    /// `(1/V)∫h_ω ρ₀ ds`, never positive.
    pub fn ricci_mean(&self) -> f64 {
        self.ricci_mean
    }

    /// `(1/V)∫ f·density ds`.
    pub fn average(&self, f: &Field, density: &Field) -> f64 {
        self.grid.integrate_weighted(f, density) / self.volume
    }

    /// `log((1/V)∫ e^g·density ds)`, evaluated with a max shift.
    pub fn log_mean_exp(&self, g: &Field, density: &Field) -> f64 {
        let shift = g.max();
        let shifted = g.map(|v| (v - shift).exp());
        shift + (self.grid.integrate_weighted(&shifted, density) / self.volume).ln()
    }
}

/// Checks that a density is finite and positive at every node.
pub fn check_density(grid: &ReducedGrid, rho: &Field) -> Result<(), GeometryError> {
    if rho.len() != grid.len() {
        return Err(GeometryError::LengthMismatch {
            expected: grid.len(),
            got: rho.len(),
        });
    }
    for (j, (&r, &x)) in rho.iter().zip(grid.nodes()).enumerate() {
        if !r.is_finite() {
            return Err(GeometryError::NonFinite("density"));
        }
        if r <= 0.0 {
            return Err(GeometryError::NonPositiveDensity {
                index: j,
                sigma: x,
                value: r,
            });
        }
    }
    Ok(())
}

/// Density relative to the round form, `m = ρ/(dσ/ds)`; smooth on the sphere.
pub fn symplectic_density(grid: &ReducedGrid, rho: &Field) -> Field {
    Field::from_iterator(grid.len(), rho.iter().zip(grid.chain()).map(|(r, c)| r / c))
}

/// Ricci potential of the metric with potential `2 log(1+eˢ) + psi` and
/// density `rho`:
/// `h = -log(ρe⁻ˢ) - Φ + c₀ = -log(ρ/(dσ/ds)) - ψ + c₀`, with `c₀` fixed by
/// `∫(e^h - 1)ρ ds = 0`.
pub fn ricci_potential(
    grid: &ReducedGrid,
    psi: &Field,
    rho: &Field,
) -> Result<Field, GeometryError> {
    check_density(grid, rho)?;
    let m = symplectic_density(grid, rho);
    let raw = Field::from_iterator(
        grid.len(),
        m.iter().zip(psi.iter()).map(|(m, p)| -m.ln() - p),
    );
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("ricci potential"));
    }
    // c ↦ ∫e^{raw+c}ρ ds is e^c times a positive constant, so the root is explicit.
    let volume = grid.integrate_density(rho);
    let shift = raw.max();
    let mean = grid.integrate_weighted(&raw.map(|v| (v - shift).exp()), rho) / volume;
    let c0 = -(shift + mean.ln());
    Ok(raw.add_scalar(c0))
}

/// Reduced density of `i∂∂̄f`: `f''(s)`.
pub fn ddbar_density(grid: &ReducedGrid, f: &Field) -> Field {
    grid.diff_ss(f)
}

/// Ricci form density `-(log(ρe⁻ˢ))'' = -(log m)'' + dσ/ds`.
pub fn ricci_density(grid: &ReducedGrid, rho: &Field) -> Field {
    let log_m = symplectic_density(grid, rho).map(f64::ln);
    let mut r = -ddbar_density(grid, &log_m);
    for (v, c) in r.iter_mut().zip(grid.chain()) {
        *v += c;
    }
    r
}

/// Reduced density of `ω_φ = ω + i∂∂̄φ`. Positivity is not checked.
pub fn density(bg: &BackgroundGeometry, phi: &Field) -> Field {
    bg.rho0() + bg.grid().diff_ss(phi)
}

/// A metric-positive relative potential `φ + offset` at flow time `t`.
///
/// The constant `offset` is carried separately from the samples because
/// constants are amplified like `eᵗ` by the flow while every metric quantity
/// ignores them.
#[derive(Debug, Clone)]
pub struct PotentialState {
    phi: Field,
    offset: f64,
    t: f64,
    rho: Field,
    log_ratio: Field,
}

impl PotentialState {
    pub fn new(bg: &BackgroundGeometry, phi: Field) -> Result<Self, GeometryError> {
        Self::with_offset(bg, phi, 0.0, 0.0)
    }

    pub fn with_offset(
        bg: &BackgroundGeometry,
        phi: Field,
        offset: f64,
        t: f64,
    ) -> Result<Self, GeometryError> {
        if phi.len() != bg.grid().len() {
            return Err(GeometryError::LengthMismatch {
                expected: bg.grid().len(),
                got: phi.len(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(GeometryError::NonFinite("potential"));
        }
        let rho = density(bg, &phi);
        check_density(bg.grid(), &rho)?;
        let log_ratio = rho.zip_map(bg.rho0(), |a, b| (a / b).ln());
        Ok(Self {
            phi,
            offset,
            t,
            rho,
            log_ratio,
        })
    }

    /// The base point φ = 0.
    pub fn zero(bg: &BackgroundGeometry) -> Self {
        Self::new(bg, Field::zeros(bg.grid().len())).expect("background density is positive")
    }

    /// Non-constant part of the potential samples.
    pub fn phi(&self) -> &Field {
        &self.phi
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Full relative potential `φ + offset`.
    pub fn potential(&self) -> Field {
        self.phi.add_scalar(self.offset)
    }

    pub fn rho(&self) -> &Field {
        &self.rho
    }

    /// `log(ρ_φ/ρ₀)`.
    pub fn log_ratio(&self) -> &Field {
        &self.log_ratio
    }

    /// `min m / max m` for `m = ρ_φ/(dσ/ds)`.
    pub fn positivity_margin(&self, grid: &ReducedGrid) -> f64 {
        let m = symplectic_density(grid, &self.rho);
        m.min() / m.max()
    }
}

/// `Δ_φ f = f''/ρ_φ`.
pub fn laplacian(bg: &BackgroundGeometry, state: &PotentialState, f: &Field) -> Field {
    bg.grid().diff_ss(f).component_div(state.rho())
}

/// `|∇f|²_φ = (f')²/ρ_φ`, evaluated as `(dσ/ds)(f_σ)²/m` to avoid dividing
/// two vanishing quantities at the poles.
pub fn grad_norm_sq(bg: &BackgroundGeometry, state: &PotentialState, f: &Field) -> Field {
    let grid = bg.grid();
    let df = grid.diff_sigma(f);
    Field::from_iterator(
        grid.len(),
        df.iter()
            .zip(grid.chain())
            .zip(state.rho().iter())
            .map(|((d, c), r)| d * d * c * c / r),
    )
}

/// Scalar curvature `R_φ = r_φ/ρ_φ`.
pub fn scalar_curvature(bg: &BackgroundGeometry, state: &PotentialState) -> Field {
    ricci_density(bg.grid(), state.rho()).component_div(state.rho())
}

/// Average scalar curvature `(1/V)∫R_φ ρ_φ ds`; equals 1 for every state.
pub fn mean_scalar_curvature(bg: &BackgroundGeometry, state: &PotentialState) -> f64 {
    bg.grid()
        .integrate_density(&ricci_density(bg.grid(), state.rho()))
        / bg.volume()
}

/// Ricci potential of `ω_φ` itself (normalized against `ω_φ`).
pub fn state_ricci_potential(
    bg: &BackgroundGeometry,
    state: &PotentialState,
) -> Result<Field, GeometryError> {
    ricci_potential(bg.grid(), &(bg.psi() + state.phi()), state.rho())
}
