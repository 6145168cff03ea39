//! Compactified collocation grid for S¹-invariant functions on CP¹.
//!
//! An S¹-invariant function on CP¹ is a function of the cylinder coordinate
//! `s = log|z|²`, and it is smooth on the sphere exactly when it is a smooth
//! function of `σ = tanh(s/2) ∈ [-1, 1]` (σ is, up to an affine change, the
//! moment map of the round metric). Every field in this crate is sampled at
//! Chebyshev points of the first kind in σ, which never touch the poles.
//!
//! Derivatives in `s` are obtained from σ-derivatives through the chain
//! factor `dσ/ds = (1 - σ²)/2`, and integrals against `ds` of densities
//! (which always carry one factor of `dσ/ds`) are reduced to Fejér
//! quadrature in σ.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::GeometryError;

/// Samples of a function at the grid nodes.
pub type Field = DVector<f64>;

/// Smallest node count accepted by [`ReducedGrid::new`].
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone)]
pub struct ReducedGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    chain: Vec<f64>,
    bary: Vec<f64>,
    d_sigma: DMatrix<f64>,
    d_s: DMatrix<f64>,
    d_ss: DMatrix<f64>,
}

impl ReducedGrid {
    /// Builds the `n`-point grid: nodes `σ_j = -cos((2j+1)π/2n)`, Fejér
    /// first-rule weights, and spectral differentiation matrices.
    pub fn new(n: usize) -> Result<Self, GeometryError> {
        if n < MIN_NODES {
            return Err(GeometryError::GridTooSmall { n, min: MIN_NODES });
        }
        let theta: Vec<f64> = (0..n)
            .map(|j| (2 * j + 1) as f64 * PI / (2 * n) as f64)
            .collect();
        let nodes: Vec<f64> = theta.iter().map(|t| -t.cos()).collect();

        let half = n / 2;
        let weights: Vec<f64> = theta
            .iter()
            .map(|&t| {
                let tail: f64 = (1..=half)
                    .map(|m| {
                        let m = m as f64;
                        (2.0 * m * t).cos() / (4.0 * m * m - 1.0)
                    })
                    .sum();
                2.0 / n as f64 * (1.0 - 2.0 * tail)
            })
            .collect();

        // Barycentric weights of first-kind Chebyshev points, up to a common factor.
        let bary: Vec<f64> = theta
            .iter()
            .enumerate()
            .map(|(j, t)| if j % 2 == 0 { t.sin() } else { -t.sin() })
            .collect();

        let mut d_sigma = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    d_sigma[(i, j)] = v;
                    diag -= v;
                }
            }
            d_sigma[(i, i)] = diag;
        }

        let chain: Vec<f64> = nodes.iter().map(|x| 0.5 * (1.0 - x * x)).collect();
        let chain_diag = DMatrix::from_diagonal(&DVector::from_column_slice(&chain));
        let d_s = &chain_diag * &d_sigma;
        let mut d_ss = &d_s * &d_s;
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| d_ss[(i, j)]).sum();
            d_ss[(i, i)] = -off;
        }

        Ok(Self {
            nodes,
            weights,
            chain,
            bary,
            d_sigma,
            d_s,
            d_ss,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes σ_j, strictly increasing inside (-1, 1).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weights for the measure dσ.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Chain factor dσ/ds at the nodes.
    pub fn chain(&self) -> &[f64] {
        &self.chain
    }

    /// Cylinder coordinate `s = 2 artanh σ` at the nodes.
    pub fn cylinder_coordinates(&self) -> Vec<f64> {
        self.nodes.iter().map(|x| 2.0 * x.atanh()).collect()
    }

    pub fn d_sigma(&self) -> &DMatrix<f64> {
        &self.d_sigma
    }

    pub fn d_s(&self) -> &DMatrix<f64> {
        &self.d_s
    }

    pub fn d_ss(&self) -> &DMatrix<f64> {
        &self.d_ss
    }

    /// Evaluates `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_iterator(self.len(), self.nodes.iter().map(|&x| f(x)))
    }

    pub fn constant(&self, value: f64) -> Field {
        Field::from_element(self.len(), value)
    }

    /// `f` minus its mean sample value. Differentiation matrices annihilate
    /// constants only up to round-off proportional to the constant, so every
    /// derivative below acts on the centered samples.
    fn centered(&self, f: &Field) -> Field {
        f.add_scalar(-f.mean())
    }

    /// First derivative in σ.
    pub fn diff_sigma(&self, f: &Field) -> Field {
        &self.d_sigma * self.centered(f)
    }

    /// First derivative in `s`.
    pub fn diff_s(&self, f: &Field) -> Field {
        &self.d_s * self.centered(f)
    }

    /// Second derivative in `s`.
    pub fn diff_ss(&self, f: &Field) -> Field {
        &self.d_ss * self.centered(f)
    }

    /// `∫ f dσ`.
    pub fn integrate_sigma(&self, f: &Field) -> f64 {
        self.weights.iter().zip(f.iter()).map(|(w, v)| w * v).sum()
    }

    /// `∫ density ds` for a density that vanishes like `dσ/ds` at the poles.
    pub fn integrate_density(&self, density: &Field) -> f64 {
        self.weights
            .iter()
            .zip(&self.chain)
            .zip(density.iter())
            .map(|((w, c), v)| w * v / c)
            .sum()
    }

    /// `∫ f·density ds`.
    pub fn integrate_weighted(&self, f: &Field, density: &Field) -> f64 {
        self.weights
            .iter()
            .zip(&self.chain)
            .zip(f.iter().zip(density.iter()))
            .map(|((w, c), (a, b))| w * a * b / c)
            .sum()
    }

    /// `∫ (f')² ds`, computed in σ as `∫ (dσ/ds)·(f_σ)² dσ` so that no
    /// division by the vanishing chain factor occurs.
    pub fn dirichlet_energy(&self, f: &Field) -> f64 {
        let df = self.diff_sigma(f);
        self.weights
            .iter()
            .zip(&self.chain)
            .zip(df.iter())
            .map(|((w, c), d)| w * c * d * d)
            .sum()
    }

    /// Polynomial interpolant of the node samples evaluated at `x`.
    pub fn interpolate(&self, values: &Field, x: f64) -> f64 {
        barycentric_eval(&self.nodes, &self.bary, values.as_slice(), x)
    }
}

/// Barycentric weights for arbitrary distinct nodes, scaled to avoid
/// overflow; only ratios matter.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut log_mag = vec![0.0; n];
    let mut sign = vec![1.0; n];
    for j in 0..n {
        for k in 0..n {
            if j != k {
                let d = nodes[j] - nodes[k];
                log_mag[j] -= d.abs().ln();
                if d < 0.0 {
                    sign[j] = -sign[j];
                }
            }
        }
    }
    let max = log_mag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    log_mag
        .iter()
        .zip(&sign)
        .map(|(l, s)| s * (l - max).exp())
        .collect()
}

/// Second-form barycentric evaluation.
pub fn barycentric_eval(nodes: &[f64], weights: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xj, &wj), &fj) in nodes.iter().zip(weights).zip(values) {
        let d = x - xj;
        if d == 0.0 {
            return fj;
        }
        let t = wj / d;
        num += t * fj;
        den += t;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grid() {
        assert!(matches!(
            ReducedGrid::new(8),
            Err(GeometryError::GridTooSmall { n: 8, .. })
        ));
    }

    #[test]
    fn nodes_increasing_and_interior() {
        let g = ReducedGrid::new(33).unwrap();
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes().iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn quadrature_exact_on_monomials() {
        let g = ReducedGrid::new(32).unwrap();
        for k in 0..32 {
            let f = g.sample(|x| x.powi(k));
            let exact = if k % 2 == 1 {
                0.0
            } else {
                2.0 / (k as f64 + 1.0)
            };
            assert!((g.integrate_sigma(&f) - exact).abs() < 1e-14, "degree {k}");
        }
    }

    #[test]
    fn derivatives_annihilate_constants() {
        let g = ReducedGrid::new(64).unwrap();
        let one = g.constant(1.0);
        assert!(g.diff_s(&one).amax() < 1e-12);
        assert!(g.diff_ss(&one).amax() < 1e-12);
        assert!((g.d_ss() * &one).amax() < 1e-12);
        let big = g.constant(1e4);
        assert_eq!(g.diff_ss(&big).amax(), 0.0);
    }

    #[test]
    fn derivative_of_sigma_in_s() {
        // σ = tanh(s/2): σ' = (1-σ²)/2, σ'' = -σ(1-σ²)/2.
        let g = ReducedGrid::new(64).unwrap();
        let sigma = g.sample(|x| x);
        let d1 = g.diff_s(&sigma);
        let d2 = g.diff_ss(&sigma);
        for (j, &x) in g.nodes().iter().enumerate() {
            assert!((d1[j] - 0.5 * (1.0 - x * x)).abs() < 1e-13);
            assert!((d2[j] + 0.5 * x * (1.0 - x * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_reproduces_smooth_function() {
        let g = ReducedGrid::new(48).unwrap();
        let f = g.sample(|x| (2.0 * x).sin() + x * x);
        for &x in &[-0.999f64, -0.3, 0.0, 0.77, 0.9999] {
            let exact = (2.0 * x).sin() + x * x;
            assert!((g.interpolate(&f, x) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn generic_barycentric_matches_chebyshev() {
        let g = ReducedGrid::new(20).unwrap();
        let w = barycentric_weights(g.nodes());
        let f = g.sample(|x| x.exp());
        let a = barycentric_eval(g.nodes(), &w, f.as_slice(), 0.123);
        assert!((a - 0.123f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_energy_of_sigma() {
        // ∫ (σ')² ds = ∫ (1-σ²)/2 dσ = 2/3.
        let g = ReducedGrid::new(32).unwrap();
        let sigma = g.sample(|x| x);
        assert!((g.dirichlet_energy(&sigma) - 2.0 / 3.0).abs() < 1e-14);
    }
}
