//! Quadrature on the reference edge `[0, 1]` and the reference triangle
//! `{ξ ≥ 0, η ≥ 0, ξ + η ≤ 1}`.
//!
//! Edge rules are Gauss–Legendre. Triangle rules above degree 2 are collapsed
//! (Duffy) tensor products of Gauss–Legendre rules, which keeps every weight
//! positive and every point strictly inside the cell.

use thiserror::Error;

/// Highest exactness degree offered for triangle rules.
pub const MAX_TRIANGLE_DEGREE: usize = 60;
/// Highest exactness degree offered for edge rules.
pub const MAX_EDGE_DEGREE: usize = 120;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("no {cell:?} rule of degree {degree} (maximum {max})")]
    UnsupportedDegree {
        cell: Cell,
        degree: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Triangle,
    Edge,
}

/// Points are reference coordinates. For edge rules only the first
/// coordinate is used and the second is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

pub fn quadrature(cell: Cell, degree: usize) -> Result<QuadratureRule, QuadratureError> {
    match cell {
        Cell::Edge => edge_rule(degree),
        Cell::Triangle => triangle_rule(degree),
    }
}

pub fn edge_rule(degree: usize) -> Result<QuadratureRule, QuadratureError> {
    if degree > MAX_EDGE_DEGREE {
        return Err(QuadratureError::UnsupportedDegree {
            cell: Cell::Edge,
            degree,
            max: MAX_EDGE_DEGREE,
        });
    }
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre_unit(n);
    Ok(QuadratureRule {
        points: x.iter().map(|&t| [t, 0.0]).collect(),
        weights: w,
        degree,
    })
}

pub fn triangle_rule(degree: usize) -> Result<QuadratureRule, QuadratureError> {
    if degree > MAX_TRIANGLE_DEGREE {
        return Err(QuadratureError::UnsupportedDegree {
            cell: Cell::Triangle,
            degree,
            max: MAX_TRIANGLE_DEGREE,
        });
    }
    match degree {
        0 | 1 => Ok(QuadratureRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            degree,
        }),
        2 => Ok(QuadratureRule {
            points: vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
            weights: vec![1.0 / 6.0; 3],
            degree,
        }),
        _ => {
            // x = u, y = (1 - u) v, dx dy = (1 - u) du dv
            let nu = (degree + 3) / 2;
            let nv = (degree + 2) / 2;
            let (xu, wu) = gauss_legendre_unit(nu);
            let (xv, wv) = gauss_legendre_unit(nv);
            let mut points = Vec::with_capacity(nu * nv);
            let mut weights = Vec::with_capacity(nu * nv);
            for (&u, &a) in xu.iter().zip(&wu) {
                for (&v, &b) in xv.iter().zip(&wv) {
                    points.push([u, (1.0 - u) * v]);
                    weights.push(a * b * (1.0 - u));
                }
            }
            Ok(QuadratureRule {
                points,
                weights,
                degree,
            })
        }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`, nodes ascending.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let xs = x.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let ws = w.iter().map(|v| 0.5 * v).collect();
    (xs, ws)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    // closed form for the reference triangle
    fn monomial_exact(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn degree_one_is_centroid() {
        let r = triangle_rule(1).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
        assert!((r.points[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.points[0][1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_monomials_exact() {
        for d in 0..=20 {
            let r = triangle_rule(d).unwrap();
            for a in 0..=d {
                for b in 0..=(d - a) {
                    let q: f64 = r
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let e = monomial_exact(a, b);
                    assert!((q - e).abs() < 1e-14, "d={d} a={a} b={b}: {q} vs {e}");
                }
            }
        }
    }

    #[test]
    fn edge_monomials_exact() {
        for d in 0..=40 {
            let r = edge_rule(d).unwrap();
            let total: f64 = r.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
            for a in 0..=d {
                let q: f64 = r.iter().map(|(p, w)| w * p[0].powi(a as i32)).sum();
                assert!((q - 1.0 / (a as f64 + 1.0)).abs() < 1e-14, "d={d} a={a}");
            }
        }
    }

    #[test]
    fn weights_positive_and_points_inside() {
        for d in 0..=MAX_TRIANGLE_DEGREE {
            let r = triangle_rule(d).unwrap();
            let total: f64 = r.weights.iter().sum();
            assert!((total - 0.5).abs() < 1e-14);
            for (p, w) in r.iter() {
                assert!(w > 0.0);
                assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0);
            }
        }
    }

    #[test]
    fn unsupported_degree_rejected() {
        assert!(matches!(
            quadrature(Cell::Triangle, MAX_TRIANGLE_DEGREE + 1),
            Err(QuadratureError::UnsupportedDegree { .. })
        ));
        assert!(quadrature(Cell::Edge, MAX_EDGE_DEGREE + 1).is_err());
    }
}
