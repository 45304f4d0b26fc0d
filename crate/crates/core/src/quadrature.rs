//! Gauss–Legendre quadrature, plus the σ-measure rule used for the
//! continuous outcome families on σ ∈ [0, 1].

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Default node count for every σ-integral.
pub const DEFAULT_NODES: usize = 64;

/// Nodes and weights on [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::Argument("Gauss-Legendre needs at least one node".into()));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// (x, w) pairs mapped to [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + h * x, h * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Entrywise Gauss–Legendre integral of a matrix-valued function over [a, b].
pub fn gauss_legendre(
    f: impl Fn(f64) -> ComplexMatrix,
    a: f64,
    b: f64,
    nodes: usize,
) -> Result<ComplexMatrix> {
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Argument(format!("empty interval [{a}, {b}]")));
    }
    if nodes < 2 {
        return Err(Error::Argument("at least two quadrature nodes required".into()));
    }
    let rule = GaussLegendre::new(nodes)?;
    Ok(rule.on(a, b).map(|(x, w)| f(x).scale_real(w)).sum())
}

/// Quadrature for ∫₀¹ g(σ) dσ with σ = u², dσ = 2u du, so integrands that are
/// polynomials in √σ are integrated exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaRule {
    points: Vec<(f64, f64)>,
}

impl SigmaRule {
    pub fn new(nodes: usize) -> Result<Self> {
        let gl = GaussLegendre::new(nodes)?;
        let points = gl.on(0.0, 1.0).map(|(u, w)| (u * u, 2.0 * u * w)).collect();
        Ok(Self { points })
    }

    /// (σ, weight) pairs.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().map(|&(s, w)| w * f(s)).sum()
    }

    pub fn integrate_matrix(&self, f: impl Fn(f64) -> ComplexMatrix) -> ComplexMatrix {
        self.points
            .iter()
            .map(|&(s, w)| f(s).scale_real(w))
            .sum()
    }
}

impl Default for SigmaRule {
    fn default() -> Self {
        Self::new(DEFAULT_NODES).expect("positive node count")
    }
}
