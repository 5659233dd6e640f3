//! The map Λ_h from the discrete disk onto the exact disk and the transport
//! of functions through it.
//!
//! On an element with a boundary edge `ab` and opposite vertex `c`, let
//! `s = 1 - λ_c`, `t = λ_b / s` and `y = F(ξ_e(t))` the point of the discrete
//! edge "below" `ξ`. Then `Λ_h(F(ξ)) = F(ξ) + s^{k+2} (P(y) - y)` with `P` the
//! radial projection. The correction vanishes on the two interior edges, so
//! Λ_h is continuous, and is `P` itself on the boundary edge. Every other
//! element is left unchanged.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::basis;
use crate::fem::{assemble_bulk, assemble_grams_on, ElementMap, FemError, FeFunction, GramSet, MeshField, Space};
use crate::linalg::{CsrMatrix, SpdSolver};
use crate::mesh::{DomainKind, Locator, Mesh};
use crate::norms::{generalized_eigen, NormError};
use crate::quadrature::triangle_rule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("point ({0}, {1}) is not covered by the mesh")]
    OutsideMesh(f64, f64),
    #[error("lifted function must be a scalar bulk function")]
    WrongSpace,
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

#[derive(Debug, Clone, Copy)]
struct Blend {
    a: usize,
    b: usize,
    c: usize,
}

#[derive(Debug, Clone)]
pub struct LiftMap {
    mesh: Mesh,
    locator: Locator,
    blends: Vec<Option<Blend>>,
}

fn radial(y: Vector2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let r = y.norm();
    let n = y / r;
    let dp = (Matrix2::identity() - n * n.transpose()) / r;
    (n, dp)
}

impl LiftMap {
    pub fn new(mesh: &Mesh) -> LiftMap {
        let blends = (0..mesh.n_elements())
            .map(|e| {
                if mesh.domain_kind() != DomainKind::Disk {
                    return None;
                }
                mesh.element_boundary_edge(e).map(|le| {
                    let [a, b] = basis::EDGE_VERTICES[le];
                    Blend { a, b, c: 3 - a - b }
                })
            })
            .collect();
        LiftMap {
            mesh: mesh.clone(),
            locator: Locator::new(mesh),
            blends,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn is_layer(&self, e: usize) -> bool {
        self.blends[e].is_some()
    }

    pub fn layer_elements(&self) -> Vec<usize> {
        (0..self.mesh.n_elements()).filter(|&e| self.is_layer(e)).collect()
    }

    /// Nodes of layer elements, sorted.
    pub fn layer_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .layer_elements()
            .iter()
            .flat_map(|&e| self.mesh.element(e).iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// `Λ_h ∘ F_e` and its derivative with respect to `ξ`.
    pub fn lifted_map(&self, e: usize, xi: [f64; 2]) -> (Vector2<f64>, Matrix2<f64>) {
        let (x, jac) = self.mesh.map_point(e, xi);
        let Some(bl) = self.blends[e] else {
            return (x, jac);
        };
        let k = self.mesh.order() as i32;
        let lam = basis::barycentric(xi);
        let s = 1.0 - lam[bl.c];
        if s <= 1e-14 {
            return (x, jac);
        }
        let t = lam[bl.b] / s;
        let va = basis::REF_VERTICES[bl.a];
        let vb = basis::REF_VERTICES[bl.b];
        let xe = [(1.0 - t) * va[0] + t * vb[0], (1.0 - t) * va[1] + t * vb[1]];
        let (y, je) = self.mesh.map_point(e, xe);
        let (p, dp) = radial(y);
        let d = p - y;
        let dy = je * Vector2::new(vb[0] - va[0], vb[1] - va[1]);
        let dd = (dp - Matrix2::identity()) * dy;
        let g = basis::barycentric_gradients();
        let grad_s = -Vector2::new(g[bl.c][0], g[bl.c][1]);
        let grad_t = (Vector2::new(g[bl.b][0], g[bl.b][1]) - grad_s * t) / s;
        // power k + 2 keeps the blend smooth at the interior vertex
        let sk = s.powi(k + 2);
        let dsk = (k + 2) as f64 * s.powi(k + 1);
        let dg = jac + d * grad_s.transpose() * dsk + dd * grad_t.transpose() * sk;
        (x + d * sk, dg)
    }

    /// `∇Λ_h` in physical coordinates at the image of `ξ`.
    pub fn lambda_jacobian(&self, e: usize, xi: [f64; 2]) -> Matrix2<f64> {
        let (_, jac) = self.mesh.map_point(e, xi);
        let (_, dg) = self.lifted_map(e, xi);
        dg * jac.try_inverse().expect("invertible element map")
    }

    /// Locates a point of Ω_h.
    pub fn locate_discrete(&self, x: Vector2<f64>) -> Option<(usize, [f64; 2])> {
        self.locator.locate(x, |e, xi| self.mesh.map_point(e, xi))
    }

    /// Locates a point of Ω through the lifted element maps.
    pub fn locate_exact(&self, y: Vector2<f64>) -> Option<(usize, [f64; 2])> {
        self.locator.locate(y, |e, xi| self.lifted_map(e, xi))
    }

    pub fn lambda_lift(&self, x: Vector2<f64>) -> Result<Vector2<f64>, LiftError> {
        let (e, xi) = self.locate_discrete(x).ok_or(LiftError::OutsideMesh(x.x, x.y))?;
        Ok(self.lifted_map(e, xi).0)
    }

    pub fn inverse_lift_point(&self, y: Vector2<f64>) -> Result<Vector2<f64>, LiftError> {
        let (e, xi) = self.locate_exact(y).ok_or(LiftError::OutsideMesh(y.x, y.y))?;
        Ok(self.mesh.map_point(e, xi).0)
    }

    /// Sampled `max ‖∇Λ_h − I‖` (spectral norm) over quadrature points of the
    /// layer elements.
    pub fn jacobian_defect(&self, degree: usize) -> f64 {
        let rule = triangle_rule(degree).expect("supported degree");
        let mut m: f64 = 0.0;
        for e in self.layer_elements() {
            for (xi, _) in rule.iter() {
                let d = self.lambda_jacobian(e, xi) - Matrix2::identity();
                m = m.max(spectral_norm(&d));
            }
        }
        m
    }
}

fn spectral_norm(a: &Matrix2<f64>) -> f64 {
    a.singular_values().max()
}

impl ElementMap for LiftMap {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn map(&self, elem: usize, xi: [f64; 2]) -> (Vector2<f64>, Matrix2<f64>) {
        self.lifted_map(elem, xi)
    }
    fn face_map(&self, f: usize, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        let (y, tan) = self.mesh.face_point(f, t);
        if self.mesh.domain_kind() != DomainKind::Disk {
            return (y, tan);
        }
        let (p, dp) = radial(y);
        (p, dp * tan)
    }
}

/// `w_h^ℓ`: a discrete function read on the exact domain.
pub struct LiftedFunction<'a> {
    pub lm: &'a LiftMap,
    pub u: &'a FeFunction,
}

pub fn lift_function<'a>(u: &'a FeFunction, lm: &'a LiftMap) -> Result<LiftedFunction<'a>, LiftError> {
    if u.space() == Space::Surface || u.arity() != 1 {
        return Err(LiftError::WrongSpace);
    }
    Ok(LiftedFunction { lm, u })
}

impl LiftedFunction<'_> {
    /// Value and gradient at a point of Ω.
    pub fn eval(&self, y: Vector2<f64>) -> Result<(f64, Vector2<f64>), LiftError> {
        let (e, xi) = self.lm.locate_exact(y).ok_or(LiftError::OutsideMesh(y.x, y.y))?;
        Ok(self.eval_at(e, xi))
    }

    /// Value and gradient at the image of `ξ` in element `e`.
    pub fn eval_at(&self, e: usize, xi: [f64; 2]) -> (f64, Vector2<f64>) {
        let (v, g) = self.u.eval_reference(self.lm.mesh(), e, xi, 0);
        let (_, dg) = self.lm.lifted_map(e, xi);
        (v, dg.try_inverse().expect("invertible lifted map").transpose() * g)
    }
}

/// `v^{-ℓ} = v ∘ Λ_h` on Ω_h, evaluated at reference points.
pub struct InverseLifted<'a, F> {
    pub lm: &'a LiftMap,
    pub v: F,
}

pub fn inverse_lift<F: Fn(Vector2<f64>) -> f64>(v: F, lm: &LiftMap) -> InverseLifted<'_, F> {
    InverseLifted { lm, v }
}

impl<F: Fn(Vector2<f64>) -> f64> MeshField for InverseLifted<'_, F> {
    fn value(&self, elem: usize, xi: [f64; 2], _: Vector2<f64>) -> f64 {
        (self.v)(self.lm.lifted_map(elem, xi).0)
    }
}

/// The four forms evaluated on lifted functions over the exact domain,
/// assembled by pulling back to Ω_h.
pub fn lifted_grams(lm: &LiftMap, degree: usize) -> Result<GramSet, LiftError> {
    Ok(assemble_grams_on(lm, degree)?)
}

/// Discrete minus lifted bulk mass and stiffness. Only layer elements
/// contribute since Λ_h is the identity elsewhere.
pub fn layer_differences(lm: &LiftMap, degree: usize) -> Result<(CsrMatrix, CsrMatrix), LiftError> {
    let rule = triangle_rule(degree).map_err(FemError::from)?;
    let keep = |e: usize| lm.is_layer(e);
    let (mh, ah) = assemble_bulk(lm.mesh(), &rule, keep)?;
    let (ml, al) = assemble_bulk(lm, &rule, keep)?;
    Ok((mh.add_scaled(&ml, -1.0), ah.add_scaled(&al, -1.0)))
}

/// `sup_v |vᵀ D v| / vᵀ G v` over all vectors when `D` is supported on the
/// index set `support`. The Gram matrix is condensed onto the support by its
/// Schur complement, which is exact for the supremum. `kernel_constants`
/// marks `G` as singular on constants with `D` sharing that kernel; the
/// constant direction is then lifted out.
pub fn sharp_constant(d: &CsrMatrix, g: &CsrMatrix, support: &[usize], kernel_constants: bool) -> Result<f64, LiftError> {
    let n = g.n_rows();
    let mut in_support = vec![false; n];
    for &i in support {
        in_support[i] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !in_support[i]).collect();
    let mut s = g.submatrix(support, support).to_dense();
    if !rest.is_empty() {
        let g_ii = g.submatrix(&rest, &rest);
        let g_il = g.submatrix(&rest, support);
        let solver = SpdSolver::new(&g_ii)?;
        let lcols = support.len();
        let mut cols: Vec<Vec<f64>> = vec![vec![0.0; rest.len()]; lcols];
        for (i, j, v) in g_il.triplets() {
            cols[j][i] = v;
        }
        for (j, col) in cols.iter().enumerate() {
            if col.iter().all(|v| *v == 0.0) {
                continue;
            }
            let x = solver.solve(col);
            for (i, c2) in cols.iter().enumerate() {
                let v: f64 = c2.iter().zip(&x).map(|(a, b)| a * b).sum();
                s[(i, j)] -= v;
            }
        }
    }
    let m = support.len();
    if kernel_constants {
        let scale = (0..m).map(|i| s[(i, i)]).fold(0.0, f64::max) / m as f64;
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] += scale;
            }
        }
    }
    let s = faer::Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let dd = d.submatrix(support, support).to_dense();
    let dd = faer::Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (dd[(i, j)] + dd[(j, i)]));
    let (vals, _) = generalized_eigen(&dd, &s)?;
    Ok(vals.iter().fold(0.0, |a, v| a.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_grams, nodal_interp_bulk};
    use crate::mesh::{build_disk_mesh_rings, build_square_mesh};

    #[test]
    fn identity_off_layer_and_on_square() {
        let m = build_disk_mesh_rings(4, 2).unwrap();
        let lm = LiftMap::new(&m);
        let rule = triangle_rule(4).unwrap();
        for e in 0..m.n_elements() {
            if lm.is_layer(e) {
                continue;
            }
            for (xi, _) in rule.iter() {
                let (x, j) = m.map_point(e, xi);
                let (y, dg) = lm.lifted_map(e, xi);
                assert_eq!(x, y);
                assert_eq!(j, dg);
            }
        }
        let sq = build_square_mesh(3, 1).unwrap();
        let ls = LiftMap::new(&sq);
        assert!(ls.layer_elements().is_empty());
        let p = Vector2::new(0.3, 0.7);
        assert!((ls.lambda_lift(p).unwrap() - p).norm() < 1e-14);
    }

    #[test]
    fn boundary_maps_onto_circle_and_nodes_fixed() {
        for k in [1, 2] {
            let m = build_disk_mesh_rings(3, k).unwrap();
            let lm = LiftMap::new(&m);
            for f in 0..m.boundary_faces().len() {
                for i in 0..=20 {
                    let (p, _) = lm.face_map(f, i as f64 / 20.0);
                    assert!((p.norm() - 1.0).abs() < 1e-10);
                    let (e, le) = m.face_owner(f);
                    let (q, _) = lm.lifted_map(e, basis::edge_point(le, i as f64 / 20.0));
                    assert!((p - q).norm() < 1e-12);
                }
            }
            for &i in m.boundary_node_ids() {
                let x = m.node(i);
                assert!((lm.lambda_lift(x).unwrap() - x).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn continuous_across_edges() {
        let m = build_disk_mesh_rings(3, 2).unwrap();
        let lm = LiftMap::new(&m);
        // evaluate along each interior edge from both sides
        for e in lm.layer_elements() {
            for le in 0..3 {
                for t in [0.1, 0.37, 0.5, 0.81] {
                    let xi = basis::edge_point(le, t);
                    let (x, _) = m.map_point(e, xi);
                    let (y, _) = lm.lifted_map(e, xi);
                    for &o in &m.vertex_neighbours(e) {
                        if lm.is_layer(o) {
                            continue;
                        }
                        if let Some(eta) = crate::mesh::invert_map(&|ee, z| m.map_point(ee, z), o, x) {
                            if eta[0] >= -1e-12 && eta[1] >= -1e-12 && eta[0] + eta[1] <= 1.0 + 1e-12 {
                                assert!((lm.lifted_map(o, eta).0 - y).norm() < 1e-10);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for k in [1, 2] {
            let m = build_disk_mesh_rings(3, k).unwrap();
            let lm = LiftMap::new(&m);
            let e = lm.layer_elements()[2];
            let xi = [0.21, 0.33];
            let (_, dg) = lm.lifted_map(e, xi);
            let h = 1e-6;
            for d in 0..2 {
                let mut a = xi;
                let mut b = xi;
                a[d] += h;
                b[d] -= h;
                let fd = (lm.lifted_map(e, a).0 - lm.lifted_map(e, b).0) / (2.0 * h);
                assert!((fd - dg.column(d)).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn round_trip_through_lift() {
        let m = build_disk_mesh_rings(4, 2).unwrap();
        let lm = LiftMap::new(&m);
        let u = nodal_interp_bulk(&m, |p| p.x * p.y - 0.2 * p.x);
        let lifted = lift_function(&u, &lm).unwrap();
        for (i, &x) in m.nodes().iter().enumerate() {
            let y = lm.lambda_lift(x).unwrap();
            let (v, _) = lifted.eval(y).unwrap();
            assert!((v - u.coeffs()[i]).abs() < 1e-12);
            assert!((lm.inverse_lift_point(y).unwrap() - x).norm() < 1e-10);
        }
    }

    #[test]
    fn lifted_area_is_pi() {
        let m = build_disk_mesh_rings(4, 1).unwrap();
        let lm = LiftMap::new(&m);
        let g = lifted_grams(&lm, 20).unwrap();
        let one = vec![1.0; m.n_nodes()];
        let area = g.m_bulk.quadratic(&one);
        assert!((area - std::f64::consts::PI).abs() < 1e-10, "area {area}");
        let ones = vec![1.0; m.n_boundary_nodes()];
        assert!((g.m_surf.quadratic(&ones) - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn layer_difference_matches_full_difference() {
        let m = build_disk_mesh_rings(3, 2).unwrap();
        let lm = LiftMap::new(&m);
        let gh = assemble_grams(&m).unwrap();
        let gl = lifted_grams(&lm, crate::fem::default_degree(&m)).unwrap();
        let (dm, _) = layer_differences(&lm, crate::fem::default_degree(&m)).unwrap();
        let full = gh.m_bulk.add_scaled(&gl.m_bulk, -1.0);
        let gap = full.add_scaled(&dm, -1.0);
        assert!(gap.max_abs() < 1e-14);
    }

    #[test]
    fn sharp_constant_against_dense_oracle() {
        let m = build_disk_mesh_rings(3, 1).unwrap();
        let lm = LiftMap::new(&m);
        let g = assemble_grams(&m).unwrap();
        let (dm, _) = layer_differences(&lm, 6).unwrap();
        let fast = sharp_constant(&dm, &g.m_bulk, &lm.layer_nodes(), false).unwrap();
        let (vals, _) = generalized_eigen(&dm.to_dense(), &g.m_bulk.to_dense()).unwrap();
        let dense = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((fast - dense).abs() < 1e-10 * dense);
    }
}
