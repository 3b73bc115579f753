//! Quadrature rules: composite Gauss–Legendre on intervals and product rules
//! on the low-dimensional unit spheres.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_order` from the Chebyshev-like initial guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Applies the rule on `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if order == 0 { 1.0 } else { p1 };
    let d = order as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// A composite rule on `[a, b]`: `panels` equal sub-intervals, each carrying
/// a Gauss–Legendre rule of the same order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CompositeRule {
    pub lower: f64,
    pub upper: f64,
    pub panels: usize,
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(lower: f64, upper: f64, panels: usize, order: usize) -> Self {
        let gl = GaussLegendre::new(order);
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        let width = (upper - lower) / panels as f64;
        for p in 0..panels {
            let a = lower + p as f64 * width;
            let half = 0.5 * width;
            let mid = a + half;
            for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
                nodes.push(mid + half * x);
                weights.push(w * half);
            }
        }
        Self {
            lower,
            upper,
            panels,
            order,
            nodes,
            weights,
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn refined(&self) -> Self {
        Self::new(self.lower, self.upper, self.panels * 2, self.order)
    }
}

/// One-shot composite Gauss–Legendre integral.
pub fn composite<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, order: usize, f: F) -> f64 {
    if a == b {
        return 0.0;
    }
    CompositeRule::new(a, b, panels, order).integrate(f)
}

/// Doubles the panel count until successive estimates differ by less than
/// `tol`. Returns the finer estimate and the panel count that produced it.
pub fn integrate_doubling<F: Fn(f64) -> f64>(
    a: f64,
    b: f64,
    order: usize,
    start_panels: usize,
    max_panels: usize,
    tol: f64,
    f: F,
) -> Result<(f64, usize)> {
    let mut panels = start_panels.max(1);
    let mut prev = composite(a, b, panels, order, &f);
    while panels < max_panels {
        panels *= 2;
        let next = composite(a, b, panels, order, &f);
        if (next - prev).abs() < tol {
            return Ok((next, panels));
        }
        prev = next;
    }
    Err(Error::numerical(format!(
        "composite quadrature on [{a}, {b}] did not reach {tol:e} within {max_panels} panels"
    )))
}

/// Nodes and weights on `S^{n-1}` with respect to the surface measure.
///
/// - `n = 1`: the two points `±1` with unit weights (counting measure).
/// - `n = 2`: trapezoid rule in the angle, exact for trigonometric polynomials
///   of degree below `resolution`.
/// - `n = 3`: Gauss–Legendre in `cos(polar)` times trapezoid in azimuth.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SphereRule {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self {
                dim,
                nodes: vec![vec![-1.0], vec![1.0]],
                weights: vec![1.0, 1.0],
            }),
            2 => {
                let k = resolution.max(4);
                let w = 2.0 * PI / k as f64;
                let nodes = (0..k)
                    .map(|j| {
                        let phi = w * j as f64;
                        vec![phi.cos(), phi.sin()]
                    })
                    .collect();
                Ok(Self {
                    dim,
                    nodes,
                    weights: vec![w; k],
                })
            }
            3 => {
                let polar = GaussLegendre::new((resolution / 2).max(2));
                let k = resolution.max(4);
                let wa = 2.0 * PI / k as f64;
                let mut nodes = Vec::with_capacity(polar.order() * k);
                let mut weights = Vec::with_capacity(polar.order() * k);
                for (&z, &wz) in polar.nodes.iter().zip(&polar.weights) {
                    let s = (1.0 - z * z).sqrt();
                    for j in 0..k {
                        let phi = wa * j as f64;
                        nodes.push(vec![s * phi.cos(), s * phi.sin(), z]);
                        weights.push(wz * wa);
                    }
                }
                Ok(Self { dim, nodes, weights })
            }
            0 => Err(Error::invalid("dimension must be positive")),
            _ => Err(Error::Unsupported(format!(
                "sphere quadrature for n = {dim} (supported: 1, 2, 3)"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(a, &w)| w * f(a))
            .sum()
    }
}
