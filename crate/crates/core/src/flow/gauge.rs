//! Offline gauge normalization and measured ceilings along a trace.
//!
//! The recorded mean velocity `c(t) = (1/V)∫uρ_φ` obeys `(e^{-t}c)' = -εe^{-t}`,
//! and `φ → φ + Ceᵗ` shifts it by `Ceᵗ`. The normalized series is the
//! solution with `c̃(T) = 0`, i.e. `c̃(t) = ∫_t^T ε(τ)e^{-(τ-t)}dτ`, evaluated
//! exactly for the piecewise-linear interpolant of the recorded `ε`.

use serde::{Deserialize, Serialize};

use super::{FlowRecord, FlowTrace};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub c_norm: Vec<f64>,
    /// `∫u²ρ_φ` in the normalized gauge.
    pub b: Vec<f64>,
    pub ubar: Vec<f64>,
    pub a_t: Vec<f64>,
    pub sup_u: Vec<f64>,
    /// `∫₀^T c̃ dt`.
    pub integral_c_norm: f64,
    /// `ν(0) - ν(T)`, with `ν(T)` the value at the horizon.
    pub nu_drop: f64,
    /// `e^{-(T-t)}·sup ε`, a bound on the tail dropped by the finite horizon.
    pub truncation_bound: Vec<f64>,
    /// `C` with `c̃(t) = c(t) + Ceᵗ`; the normalized solution starts at `φ₀ + C`.
    pub gauge_constant: f64,
}

/// Backward recurrence for `c̃` on nodes `t` with samples `eps`; returns
/// `(c̃, ∫₀^T c̃ dt)`.
pub fn normalized_mean(t: &[f64], eps: &[f64]) -> (Vec<f64>, f64) {
    let n = t.len();
    let mut c = vec![0.0; n];
    let mut integral = 0.0;
    if n == 0 {
        return (c, integral);
    }
    let t0 = t[0];
    for i in (0..n - 1).rev() {
        let h = t[i + 1] - t[i];
        let decay = (-h).exp();
        let one_minus = -(-h).exp_m1();
        // ∫₀ʰ e^{-τ}dτ and ∫₀ʰ (τ/h)e^{-τ}dτ
        let m0 = one_minus;
        let m1 = (one_minus - h * decay) / h;
        let slope = eps[i + 1] - eps[i];
        c[i] = decay * c[i + 1] + eps[i] * m0 + slope * m1;
        // ∫ over the panel of ε(τ)(1 - e^{-(τ-t0)})
        let w = (-(t[i] - t0)).exp();
        let lin = h * 0.5 * (eps[i] + eps[i + 1]);
        integral += lin - w * (eps[i] * m0 + slope * m1);
    }
    (c, integral)
}

pub fn renormalize_c(trace: &FlowTrace) -> NormalizedSeries {
    let rec = &trace.records;
    if rec.is_empty() {
        return NormalizedSeries::default();
    }
    let t: Vec<f64> = rec.iter().map(|r| r.t).collect();
    let eps: Vec<f64> = rec.iter().map(|r| r.eps).collect();
    let (c_norm, integral_c_norm) = normalized_mean(&t, &eps);
    let t_end = *t.last().expect("non-empty");
    let sup_eps = eps.iter().cloned().fold(0.0, f64::max);
    let shifted = |f: fn(&FlowRecord, f64, f64) -> f64| -> Vec<f64> {
        rec.iter()
            .zip(&c_norm)
            .map(|(r, &k)| f(r, k, trace.volume))
            .collect()
    };
    NormalizedSeries {
        b: shifted(|r, k, v| r.var_u + k * k * v),
        ubar: shifted(|r, k, _| r.ubar_dev + k),
        a_t: shifted(|r, k, _| r.a_dev + k),
        sup_u: shifted(|r, k, _| (r.u_dev_max + k).abs().max((r.u_dev_min + k).abs())),
        integral_c_norm,
        nu_drop: rec[0].nu - rec[rec.len() - 1].nu,
        truncation_bound: t
            .iter()
            .map(|&ti| (-(t_end - ti)).exp() * sup_eps)
            .collect(),
        gauge_constant: c_norm[0] - rec[0].c,
        c_norm,
    }
}

/// Empirical ceilings for `sup|h_t|`, `sup|∇h_t|²`, `sup|Δh_t|`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerelmanCeilings {
    pub sup_h: f64,
    pub sup_grad_h_sq: f64,
    pub sup_lap_h: f64,
    /// Times at which each ceiling is attained.
    pub attained_at: [f64; 3],
    /// None of the three series grows over the last third of the trace.
    pub plateau: bool,
}

fn ceiling(t: &[f64], series: &[f64]) -> (f64, f64, bool) {
    let mut best = (0.0, t.first().copied().unwrap_or(0.0));
    for (&ti, &v) in t.iter().zip(series) {
        if v > best.0 {
            best = (v, ti);
        }
    }
    let cut = series.len() * 2 / 3;
    let (head, tail) = series.split_at(cut);
    let head_max = head.iter().cloned().fold(0.0, f64::max);
    let tail_max = tail.iter().cloned().fold(0.0, f64::max);
    let finite = series.iter().all(|v| v.is_finite());
    (
        best.0,
        best.1,
        finite && (tail_max <= head_max || series.len() < 3),
    )
}

/// `h_t = -u + a_t` has the gradient and Laplacian of `u`, so only the
/// value ceiling needs the recorded `a_t` shift.
pub fn perelman_diagnostics(trace: &FlowTrace) -> PerelmanCeilings {
    let t: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    let pick = |f: fn(&FlowRecord) -> f64| -> Vec<f64> { trace.records.iter().map(f).collect() };
    let (h, th, ph) = ceiling(&t, &pick(|r| r.sup_h));
    let (g, tg, pg) = ceiling(&t, &pick(|r| r.sup_grad_u_sq));
    let (l, tl, pl) = ceiling(&t, &pick(|r| r.sup_lap_u));
    PerelmanCeilings {
        sup_h: h,
        sup_grad_h_sq: g,
        sup_lap_h: l,
        attained_at: [th, tg, tl],
        plateau: ph && pg && pl,
    }
}
