//! Multi-run experiments: per-trace consistency checks, the infimum
//! certificate `inf F = inf ν - (1/V)∫h_ωρ₀` over a family of initial
//! potentials, the weighted Poincaré inequality, and empirical bound tables.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::flow::{
    perelman_diagnostics, renormalize_c, run, FlowConfig, FlowError, FlowTrace, PerelmanCeilings,
    Termination,
};
use crate::geometry::{state_ricci_potential, BackgroundGeometry, PotentialState, Profile};
use crate::grid::Field;
use crate::sampling::random_smooth_function;

/// Slack for the row inequalities; covers quadrature of `∫ε dt`.
pub const INEQUALITY_TOL: f64 = 1e-8;
/// Residual tolerance on the round background, where both infima are 0.
pub const ROUND_RESIDUAL_TOL: f64 = 1e-4;
pub const PERTURBED_RESIDUAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceChecks {
    /// Largest record-to-record increase of ν (≤ 0 when monotone).
    pub max_nu_increase: f64,
    pub max_f_increase: f64,
    /// Worst `|dν/dt + ε|/max(ε, 1e-12)` over interior records with `ε > 1e-9`.
    pub derivative_identity: f64,
    /// Smallest `ν - F - (1/V)∫h_ωρ₀`.
    pub min_gap: f64,
    /// Largest `|gap - f|`.
    pub max_gap_identity: f64,
    pub max_volume_error: f64,
}

pub fn trace_checks(trace: &FlowTrace) -> TraceChecks {
    let r = &trace.records;
    let mut out = TraceChecks {
        max_nu_increase: f64::NEG_INFINITY,
        max_f_increase: f64::NEG_INFINITY,
        derivative_identity: 0.0,
        min_gap: f64::INFINITY,
        max_gap_identity: 0.0,
        max_volume_error: 0.0,
    };
    for w in r.windows(2) {
        out.max_nu_increase = out.max_nu_increase.max(w[1].nu - w[0].nu);
        out.max_f_increase = out.max_f_increase.max(w[1].f - w[0].f);
    }
    for w in r.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        if b.eps <= 1e-9 {
            continue;
        }
        // Three-point centered derivative on a nonuniform stencil.
        let (h1, h2) = (b.t - a.t, c.t - b.t);
        let d = -h2 / (h1 * (h1 + h2)) * a.nu
            + (h2 - h1) / (h1 * h2) * b.nu
            + h1 / (h2 * (h1 + h2)) * c.nu;
        out.derivative_identity = out
            .derivative_identity
            .max((d + b.eps).abs() / b.eps.max(1e-12));
    }
    for rec in r {
        let gap = rec.gap(trace.ricci_mean);
        out.min_gap = out.min_gap.min(gap);
        out.max_gap_identity = out.max_gap_identity.max((gap - rec.f_gap).abs());
        out.max_volume_error = out.max_volume_error.max(rec.volume_error.abs());
    }
    out
}

/// A labelled initial potential.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPotential {
    pub label: String,
    pub phi: Field,
}

/// `φ = a(1 - σ²)`; on the round background the density ratio is
/// `1 + a(3σ² - 1)`, valid for `-1/2 < a < 1`.
pub fn bump(bg: &BackgroundGeometry, amplitude: f64) -> InitialPotential {
    InitialPotential {
        label: format!("bump:{amplitude}"),
        phi: bg.grid().sample(|x| amplitude * (1.0 - x * x)),
    }
}

pub const DEFAULT_AMPLITUDES: [f64; 5] = [-0.3, -0.1, 0.1, 0.3, 0.6];

pub fn default_family(bg: &BackgroundGeometry) -> Vec<InitialPotential> {
    DEFAULT_AMPLITUDES.iter().map(|&a| bump(bg, a)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub label: String,
    pub valid: bool,
    pub converged: bool,
    pub termination: Termination,
    pub t_end: f64,
    pub f0: f64,
    pub nu0: f64,
    pub nu_end: f64,
    pub f_end: f64,
    /// Jensen gap at the record with smallest `sup|∇u|²`.
    pub f_gap_best: f64,
    /// Smallest `ν - F - (1/V)∫h_ωρ₀` along the trace.
    pub min_gap: f64,
    /// `min_{s<t} [F(0) + f(t) - ν(s) + ∫ₛᵗε + (1/V)∫h_ωρ₀]`.
    pub a1_margin: f64,
    /// `F(0) - (inf ν_est - (1/V)∫h_ωρ₀)`.
    pub a3_margin: f64,
    pub inequalities_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub background: String,
    pub grid: usize,
    pub t_max: f64,
    pub rows: Vec<CertificateRow>,
    pub converged_rows: usize,
    pub min_f0: Option<f64>,
    /// Smallest horizon value of F over converged rows.
    pub inf_f_estimate: Option<f64>,
    /// Smallest horizon value of ν over converged rows.
    pub inf_nu_estimate: Option<f64>,
    /// `(1/V)∫h_ωρ₀`.
    pub background_constant: f64,
    pub residual: Option<f64>,
    pub residual_tol: f64,
    pub passed: bool,
    pub diagnostics: Vec<String>,
}

fn a1_margin(trace: &FlowTrace, f0: f64) -> f64 {
    let r = &trace.records;
    let mut margin = f64::INFINITY;
    let mut prefix = 0.0;
    // Running max over s < t of ν(s) + ∫₀ˢε.
    let mut best = r.first().map(|x| x.nu).unwrap_or(0.0);
    for j in 1..r.len() {
        prefix += 0.5 * (r[j].t - r[j - 1].t) * (r[j].eps + r[j - 1].eps);
        let rhs = -r[j].f_gap + best - prefix - trace.ricci_mean;
        margin = margin.min(f0 - rhs);
        best = best.max(r[j].nu + prefix);
    }
    margin
}

fn invalid_row(label: String) -> CertificateRow {
    CertificateRow {
        label,
        valid: false,
        converged: false,
        termination: Termination::Degenerate,
        t_end: 0.0,
        f0: f64::NAN,
        nu0: f64::NAN,
        nu_end: f64::NAN,
        f_end: f64::NAN,
        f_gap_best: f64::NAN,
        min_gap: f64::NAN,
        a1_margin: f64::NAN,
        a3_margin: f64::NAN,
        inequalities_hold: false,
    }
}

fn certify_row(label: String, trace: &FlowTrace) -> CertificateRow {
    let (Some(first), Some(last)) = (trace.records.first(), trace.records.last()) else {
        return invalid_row(label);
    };
    let best = trace
        .records
        .iter()
        .min_by(|a, b| a.sup_grad_u_sq.total_cmp(&b.sup_grad_u_sq))
        .expect("non-empty");
    let min_gap = trace
        .records
        .iter()
        .map(|r| r.gap(trace.ricci_mean))
        .fold(f64::INFINITY, f64::min);
    CertificateRow {
        label,
        valid: true,
        converged: trace.converged(),
        termination: trace.termination,
        t_end: last.t,
        f0: first.f,
        nu0: first.nu,
        nu_end: last.nu,
        f_end: last.f,
        f_gap_best: best.f_gap,
        min_gap,
        a1_margin: a1_margin(trace, first.f),
        a3_margin: f64::NAN,
        inequalities_hold: false,
    }
}

/// Runs the flow from every member of `family` and compares the two sides
/// of `inf F = inf ν - (1/V)∫h_ωρ₀` at the horizon.
pub fn certify_theorem(
    bg: &BackgroundGeometry,
    family: &[InitialPotential],
    cfg: &FlowConfig,
) -> Result<CertificateReport, FlowError> {
    cfg.validate()?;
    let traces: Vec<FlowTrace> = family
        .par_iter()
        .map(|m| run(bg, &m.phi, cfg))
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<CertificateRow> = family
        .iter()
        .zip(&traces)
        .map(|(m, tr)| certify_row(m.label.clone(), tr))
        .collect();

    let constant = bg.ricci_mean();
    let fold_min = |it: &mut dyn Iterator<Item = f64>| it.reduce(f64::min);
    let converged: Vec<&CertificateRow> = rows.iter().filter(|r| r.converged).collect();
    let inf_nu = fold_min(&mut converged.iter().map(|r| r.nu_end));
    let inf_f = fold_min(&mut converged.iter().map(|r| r.f_end));
    let min_f0 = fold_min(&mut rows.iter().filter(|r| r.valid).map(|r| r.f0));
    let converged_rows = converged.len();
    let residual = inf_nu.zip(inf_f).map(|(n, f)| (f - (n - constant)).abs());

    for row in rows.iter_mut().filter(|r| r.valid) {
        row.a3_margin = inf_nu.map_or(f64::NAN, |n| row.f0 - (n - constant));
        row.inequalities_hold = row.min_gap >= -INEQUALITY_TOL
            && row.a1_margin >= -INEQUALITY_TOL
            && row.a3_margin >= -INEQUALITY_TOL;
    }

    let residual_tol = match bg.profile() {
        Profile::Round => ROUND_RESIDUAL_TOL,
        _ => PERTURBED_RESIDUAL_TOL,
    };
    let mut diagnostics = Vec::new();
    for row in &rows {
        if !row.valid {
            diagnostics.push(format!(
                "{}: initial potential is not a Kähler potential",
                row.label
            ));
        } else if !row.converged {
            diagnostics.push(format!(
                "{}: not converged ({:?} at t = {})",
                row.label, row.termination, row.t_end
            ));
        } else if !row.inequalities_hold {
            diagnostics.push(format!("{}: row inequality violated", row.label));
        }
    }
    if converged_rows == 0 {
        diagnostics.push("no converged rows".into());
    }
    if let Some(res) = residual.filter(|&r| r >= residual_tol) {
        diagnostics.push(format!("residual {res:e} exceeds {residual_tol:e}"));
    }
    let passed = converged_rows > 0
        && rows.iter().all(|r| r.valid && r.inequalities_hold)
        && residual.is_some_and(|r| r < residual_tol);

    Ok(CertificateReport {
        background: bg.profile().label(),
        grid: bg.grid().len(),
        t_max: cfg.t_max,
        rows,
        converged_rows,
        min_f0,
        inf_f_estimate: inf_f,
        inf_nu_estimate: inf_nu,
        background_constant: constant,
        residual,
        residual_tol,
        passed,
        diagnostics,
    })
}

/// Both sides of the weighted Poincaré inequality for one test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareSides {
    /// `∫|∇f|²e^hρ_φ`.
    pub gradient: f64,
    /// `∫|f - f_h|²e^hρ_φ`.
    pub variance: f64,
}

impl PoincareSides {
    pub fn margin(&self) -> f64 {
        self.gradient - self.variance
    }
}

/// Evaluates the inequality with `h` the normalized Ricci potential of `ω_φ`.
pub fn poincare_sides(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    h: &Field,
    f: &Field,
) -> PoincareSides {
    let g = bg.grid();
    let weight = h.map(f64::exp);
    let density = state.rho().component_mul(&weight);
    let mean = g.integrate_weighted(f, &density) / g.integrate_density(&density);
    let centered = f.add_scalar(-mean);
    let df = g.diff_sigma(f);
    let gradient = g
        .weights()
        .iter()
        .zip(g.chain())
        .zip(df.iter().zip(weight.iter()))
        .map(|((w, c), (d, e))| w * c * d * d * e)
        .sum();
    PoincareSides {
        gradient,
        variance: g.integrate_weighted(&centered.component_mul(&centered), &density),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareSummary {
    pub trials: usize,
    pub worst_margin: f64,
    /// Smallest `gradient/variance` among the trials.
    pub worst_ratio: f64,
}

pub fn poincare_suite(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    trials: usize,
    seed: u64,
) -> Result<PoincareSummary, GeometryError> {
    let h = state_ricci_potential(bg, state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PoincareSummary {
        trials,
        worst_margin: f64::INFINITY,
        worst_ratio: f64::INFINITY,
    };
    for _ in 0..trials {
        let f = random_smooth_function(bg.grid(), &mut rng);
        let sides = poincare_sides(bg, state, &h, &f);
        out.worst_margin = out.worst_margin.min(sides.margin());
        if sides.variance > 0.0 {
            out.worst_ratio = out.worst_ratio.min(sides.gradient / sides.variance);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub label: String,
    /// `B = sup_t sup|u|` in the normalized gauge.
    pub b: f64,
    pub b_attained_at: f64,
    pub t_end: f64,
    pub ceilings: PerelmanCeilings,
    /// `sup|h_t| ≤ sup|u| + |a_t|` at every record.
    pub triangle_holds: bool,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    pub rows: Vec<BoundRow>,
    /// `max B / min B` over rows with `B > 0`.
    pub b_spread: Option<f64>,
}

pub fn bound_ledger(traces: &[(String, &FlowTrace)]) -> BoundLedger {
    let rows: Vec<BoundRow> = traces
        .iter()
        .map(|(label, trace)| {
            let series = renormalize_c(trace);
            let mut b = (0.0, 0.0);
            for (rec, &s) in trace.records.iter().zip(&series.sup_u) {
                if s > b.0 {
                    b = (s, rec.t);
                }
            }
            let triangle_holds = trace
                .records
                .iter()
                .zip(series.sup_u.iter().zip(&series.a_t))
                .all(|(rec, (s, a))| rec.sup_h <= s + a.abs() + 1e-12);
            let ceilings = perelman_diagnostics(trace);
            let finite = b.0.is_finite()
                && ceilings.sup_h.is_finite()
                && ceilings.sup_grad_h_sq.is_finite()
                && ceilings.sup_lap_h.is_finite();
            BoundRow {
                label: label.clone(),
                b: b.0,
                b_attained_at: b.1,
                t_end: trace.last().map_or(0.0, |r| r.t),
                ceilings,
                triangle_holds,
                finite,
            }
        })
        .collect();
    let positive: Vec<f64> = rows.iter().map(|r| r.b).filter(|&b| b > 0.0).collect();
    let b_spread = (!positive.is_empty()).then(|| {
        let max = positive.iter().cloned().fold(f64::MIN, f64::max);
        let min = positive.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    });
    BoundLedger { rows, b_spread }
}
