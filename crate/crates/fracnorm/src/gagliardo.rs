//! Double-integral H^{1/2} seminorm on small affine meshes, used as an
//! independent check on the spectral norms.
//!
//! `|u|² = ∬ (u(x) - u(y))² / |x - y|³ dx dy` in two dimensions. Pairs of
//! elements far apart use a tensor rule. When the two elements coincide or
//! touch, the inner integral around each outer point is done in polar
//! coordinates, where the kernel `r⁻³ · r dr` against `(Δu)² = O(r²)` leaves
//! a bounded integrand.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::fem::MeshField;
use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre_unit, triangle_rule, QuadratureError};

pub const MAX_ORACLE_ELEMENTS: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GagliardoError {
    #[error("mesh has {elements} elements, oracle limit is {max}")]
    TooLarge { elements: usize, max: usize },
    #[error("oracle needs straight-edged elements")]
    NotAffine,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Quadrature degree for well-separated pairs; touching pairs use twice
/// that, an element against itself four times.
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub degree: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { degree: 6 }
    }
}

struct Tri {
    v: [Vector2<f64>; 3],
    origin: Vector2<f64>,
    jinv: Matrix2<f64>,
    det: f64,
}

impl Tri {
    fn new(mesh: &Mesh, e: usize) -> Tri {
        let ids = mesh.element(e);
        let v = [mesh.node(ids[0]), mesh.node(ids[1]), mesh.node(ids[2])];
        let j = Matrix2::from_columns(&[v[1] - v[0], v[2] - v[0]]);
        Tri {
            v,
            origin: v[0],
            jinv: j.try_inverse().expect("non-degenerate element"),
            det: j.determinant(),
        }
    }

    fn reference(&self, y: Vector2<f64>) -> [f64; 2] {
        let xi = self.jinv * (y - self.origin);
        let a = xi.x.clamp(0.0, 1.0);
        let b = xi.y.clamp(0.0, 1.0 - a);
        [a, b]
    }

    fn point(&self, xi: [f64; 2]) -> Vector2<f64> {
        self.origin + (self.v[1] - self.v[0]) * xi[0] + (self.v[2] - self.v[0]) * xi[1]
    }

    /// Parameter range of the ray `x + r ω` inside the closed triangle.
    fn ray(&self, x: Vector2<f64>, w: Vector2<f64>) -> Option<(f64, f64)> {
        let mut lo: f64 = 0.0;
        let mut hi = f64::INFINITY;
        for i in 0..3 {
            let p = self.v[i];
            let q = self.v[(i + 1) % 3];
            let d = q - p;
            let n = Vector2::new(-d.y, d.x);
            let s = n.dot(&(x - p));
            let nw = n.dot(&w);
            if nw.abs() <= 1e-300 {
                if s < 0.0 {
                    return None;
                }
            } else if nw > 0.0 {
                lo = lo.max(-s / nw);
            } else {
                hi = hi.min(-s / nw);
            }
        }
        (hi > lo).then_some((lo, hi))
    }

    fn contains(&self, x: Vector2<f64>) -> bool {
        (0..3).all(|i| {
            let d = self.v[(i + 1) % 3] - self.v[i];
            Vector2::new(-d.y, d.x).dot(&(x - self.v[i])) >= 0.0
        })
    }

    /// Angular sub-intervals between vertex directions seen from `x` that
    /// the triangle can occupy.
    fn angular_pieces(&self, x: Vector2<f64>) -> Vec<(f64, f64)> {
        let mut a: Vec<f64> = self.v.iter().map(|v| (v.y - x.y).atan2(v.x - x.x)).collect();
        a.sort_by(f64::total_cmp);
        let pieces = [(a[0], a[1]), (a[1], a[2]), (a[2], a[0] + 2.0 * PI)];
        if self.contains(x) {
            return pieces.to_vec();
        }
        let widest = (0..3)
            .max_by(|&i, &j| (pieces[i].1 - pieces[i].0).total_cmp(&(pieces[j].1 - pieces[j].0)))
            .expect("three pieces");
        (0..3).filter(|&i| i != widest).map(|i| pieces[i]).collect()
    }
}

/// Sum over all ordered element pairs of the Gagliardo double integral.
pub fn gagliardo_half_oracle(mesh: &Mesh, u: &dyn MeshField) -> Result<f64, GagliardoError> {
    gagliardo_half_oracle_with(mesh, u, OracleOptions::default())
}

pub fn gagliardo_half_oracle_with(mesh: &Mesh, u: &dyn MeshField, opts: OracleOptions) -> Result<f64, GagliardoError> {
    let ne = mesh.n_elements();
    if ne > MAX_ORACLE_ELEMENTS {
        return Err(GagliardoError::TooLarge {
            elements: ne,
            max: MAX_ORACLE_ELEMENTS,
        });
    }
    if !mesh.is_affine() {
        return Err(GagliardoError::NotAffine);
    }
    let q = opts.degree.max(1);
    let tris: Vec<Tri> = (0..ne).map(|e| Tri::new(mesh, e)).collect();

    // cached samples on the standard rule for separated pairs
    let far = triangle_rule(q)?;
    let samples: Vec<Vec<(Vector2<f64>, f64, f64)>> = (0..ne)
        .map(|e| {
            far.iter()
                .map(|(xi, w)| {
                    let x = tris[e].point(xi);
                    (x, w * tris[e].det, u.value(e, xi, x))
                })
                .collect()
        })
        .collect();

    let mut total = 0.0;
    for e1 in 0..ne {
        let near = mesh.vertex_neighbours(e1);
        for e2 in 0..ne {
            if e1 == e2 {
                total += near_pair(&tris, u, e1, e2, 4 * q)?;
            } else if near.binary_search(&e2).is_ok() {
                total += near_pair(&tris, u, e1, e2, 2 * q)?;
            } else {
                for &(x, wx, ux) in &samples[e1] {
                    for &(y, wy, uy) in &samples[e2] {
                        let r = (x - y).norm();
                        total += wx * wy * (ux - uy).powi(2) / (r * r * r);
                    }
                }
            }
        }
    }
    Ok(total.max(0.0).sqrt())
}

fn near_pair(tris: &[Tri], u: &dyn MeshField, e1: usize, e2: usize, degree: usize) -> Result<f64, GagliardoError> {
    let outer = triangle_rule(degree)?;
    let n = degree / 2 + 1;
    let (gx, gw) = gauss_legendre_unit(n);
    let t2 = &tris[e2];
    let mut sum = 0.0;
    for (xi, wx) in outer.iter() {
        let x = tris[e1].point(xi);
        let ux = u.value(e1, xi, x);
        let mut inner = 0.0;
        for (a0, a1) in t2.angular_pieces(x) {
            let da = a1 - a0;
            for (&ta, &wa) in gx.iter().zip(&gw) {
                let th = a0 + da * ta;
                let w = Vector2::new(th.cos(), th.sin());
                let Some((r0, r1)) = t2.ray(x, w) else { continue };
                let log_map = r0 > 0.0 && r1 / r0 > 4.0;
                let mut ray = 0.0;
                for (&tr, &wr) in gx.iter().zip(&gw) {
                    let (r, jac) = if log_map {
                        let (s0, s1) = (r0.ln(), r1.ln());
                        let r = (s0 + (s1 - s0) * tr).exp();
                        (r, r * (s1 - s0))
                    } else {
                        (r0 + (r1 - r0) * tr, r1 - r0)
                    };
                    if r <= 0.0 {
                        continue;
                    }
                    let y = x + w * r;
                    let eta = t2.reference(y);
                    let uy = u.value(e2, eta, y);
                    ray += wr * jac * (ux - uy).powi(2) / (r * r);
                }
                inner += wa * da * ray;
            }
        }
        sum += wx * tris[e1].det * inner;
    }
    Ok(sum)
}

/// Largest |value| over a lattice of `n(n+1)/2`-ish points per element,
/// vertices and edges included.
pub fn sampled_sup(mesh: &Mesh, u: &dyn MeshField, n: usize) -> f64 {
    let n = n.max(1);
    let mut m: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        for i in 0..=n {
            for j in 0..=(n - i) {
                let xi = [i as f64 / n as f64, j as f64 / n as f64];
                let (x, _) = mesh.map_point(e, xi);
                m = m.max(u.value(e, xi, x).abs());
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{nodal_interp_bulk, FeField, PointField};
    use crate::mesh::{build_disk_mesh_rings, build_square_mesh};

    #[test]
    fn constant_has_zero_seminorm() {
        let m = build_square_mesh(2, 1).unwrap();
        let v = gagliardo_half_oracle(&m, &PointField(|_: Vector2<f64>| 3.0)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn homogeneity() {
        let m = build_square_mesh(2, 2).unwrap();
        let u = nodal_interp_bulk(&m, |p| p.x * p.y + p.x);
        let v = u.scaled(-2.5);
        let a = gagliardo_half_oracle(&m, &FeField { mesh: &m, u: &u }).unwrap();
        let b = gagliardo_half_oracle(&m, &FeField { mesh: &m, u: &v }).unwrap();
        assert!((b - 2.5 * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn independent_of_mesh_for_linear_function() {
        // a linear function is represented exactly on both meshes, so the
        // values must agree to quadrature accuracy
        let f = |p: Vector2<f64>| p.x - 0.5 * p.y;
        let a = gagliardo_half_oracle(&build_square_mesh(2, 1).unwrap(), &PointField(f)).unwrap();
        let b = gagliardo_half_oracle(&build_square_mesh(4, 1).unwrap(), &PointField(f)).unwrap();
        assert!((a / b - 1.0).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn one_dimensional_profile_oracle() {
        // For u = x on the unit square the integral reduces to
        // ∬ (x1-x2)² / |x-y|³, computed here independently by a fine product
        // rule in the difference variables.
        let m = build_square_mesh(3, 1).unwrap();
        let got = gagliardo_half_oracle(&m, &PointField(|p: Vector2<f64>| p.x)).unwrap();
        // ∬_{[0,1]^4} = ∫∫_{[-1,1]²} (1-|a|)(1-|b|) a² / (a²+b²)^{3/2} da db
        let (g, w) = gauss_legendre_unit(200);
        let mut s = 0.0;
        // symmetric in sign of a and b; integrate the positive quadrant in polar-split form
        for (&ta, &wa) in g.iter().zip(&w) {
            for (&tb, &wb) in g.iter().zip(&w) {
                // a = ta, b = ta * tb (b < a) and the mirrored half
                let a = ta;
                let b = ta * tb;
                let jac = ta;
                let f1 = (1.0 - a) * (1.0 - b) * a * a / (a * a + b * b).powf(1.5);
                let f2 = (1.0 - b) * (1.0 - a) * b * b / (a * a + b * b).powf(1.5);
                s += wa * wb * jac * (f1 + f2);
            }
        }
        let want = (4.0 * s).sqrt();
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
    }

    #[test]
    fn rejects_curved_and_large_meshes() {
        let curved = build_disk_mesh_rings(2, 2).unwrap();
        assert_eq!(
            gagliardo_half_oracle(&curved, &PointField(|_: Vector2<f64>| 1.0)),
            Err(GagliardoError::NotAffine)
        );
        let big = build_square_mesh(16, 1).unwrap();
        assert!(matches!(
            gagliardo_half_oracle(&big, &PointField(|_: Vector2<f64>| 1.0)),
            Err(GagliardoError::TooLarge { .. })
        ));
    }

    #[test]
    fn sup_sampling_sees_vertices() {
        let m = build_square_mesh(2, 1).unwrap();
        let s = sampled_sup(&m, &PointField(|p: Vector2<f64>| p.x + p.y), 4);
        assert!((s - 2.0).abs() < 1e-14);
    }
}
