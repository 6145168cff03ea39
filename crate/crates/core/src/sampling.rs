//! Seeded random smooth test data: test functions for the Poincaré
//! inequality and metric-positive potentials for identity checks.

use rand::Rng;

use crate::geometry::BackgroundGeometry;
use crate::grid::{Field, ReducedGrid};

/// Superposition of 1–5 Gaussian bumps of width ≥ 0.2 plus a cubic
/// polynomial, all with coefficients in [-1, 1].
pub fn random_smooth_function<R: Rng + ?Sized>(grid: &ReducedGrid, rng: &mut R) -> Field {
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=5))
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.2..0.7),
            )
        })
        .collect();
    let poly: [f64; 4] = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ];
    grid.sample(|x| {
        let b: f64 = bumps
            .iter()
            .map(|&(a, c, w)| a * (-(x - c).powi(2) / (2.0 * w * w)).exp())
            .sum();
        b + poly[0] + x * (poly[1] + x * (poly[2] + x * poly[3]))
    })
}

/// Smallest admissible `ρ_φ/ρ₀` for [`random_valid_potential`].
pub const MIN_DENSITY_RATIO: f64 = 0.3;

/// Random potential `a·f` with `f` from [`random_smooth_function`] and the
/// amplitude drawn so that `ρ_φ/ρ₀ ≥ 0.3` everywhere.
pub fn random_valid_potential<R: Rng + ?Sized>(bg: &BackgroundGeometry, rng: &mut R) -> Field {
    let f = random_smooth_function(bg.grid(), rng);
    let q = bg.grid().diff_ss(&f).component_div(bg.rho0());
    let room = 1.0 - MIN_DENSITY_RATIO;
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    // 1 + a·q ≥ MIN_DENSITY_RATIO
    let worst = if sign > 0.0 { -q.min() } else { q.max() };
    let limit = if worst > 0.0 { room / worst } else { 1.0 };
    let amplitude = sign * limit.min(1.0) * rng.gen_range(0.1..1.0);
    f * amplitude
}
