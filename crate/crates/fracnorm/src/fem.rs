//! Finite element functions, interpolation, traces and the assembled
//! bulk and surface mass/stiffness forms.

use std::io;
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::basis;
use crate::linalg::CsrMatrix;
use crate::mesh::Mesh;
use crate::quadrature::{edge_rule, triangle_rule, QuadratureRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("element {elem}: non-positive jacobian determinant {det} during assembly")]
    InvertedElement { elem: usize, det: f64 },
    #[error("coefficient length {got} does not match space size {want}")]
    Length { got: usize, want: usize },
    #[error("zero-trace function has non-zero boundary coefficient at node {0}")]
    NonZeroTrace(usize),
    #[error("expected a {want:?} function, got {got:?}")]
    WrongSpace { want: Space, got: Space },
    #[error("element id {0} out of range")]
    InvalidElement(usize),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
}

/// Which discrete space a coefficient vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// all nodal basis functions on the bulk mesh
    Bulk,
    /// bulk functions vanishing on the boundary
    ZeroTrace,
    /// traces on the boundary curve
    Surface,
}

/// Coefficients stored component by component: component `c` of a vector
/// function occupies `coeffs[c * n .. (c + 1) * n]`. Zero-trace functions use
/// the full bulk numbering with exact zeros at boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    coeffs: Vec<f64>,
    space: Space,
    arity: usize,
}

impl FeFunction {
    pub fn new(mesh: &Mesh, space: Space, arity: usize, coeffs: Vec<f64>) -> Result<FeFunction, FemError> {
        let n = match space {
            Space::Bulk | Space::ZeroTrace => mesh.n_nodes(),
            Space::Surface => mesh.n_boundary_nodes(),
        };
        if coeffs.len() != n * arity {
            return Err(FemError::Length {
                got: coeffs.len(),
                want: n * arity,
            });
        }
        if space == Space::ZeroTrace {
            for c in 0..arity {
                for &i in mesh.boundary_node_ids() {
                    if coeffs[c * n + i] != 0.0 {
                        return Err(FemError::NonZeroTrace(i));
                    }
                }
            }
        }
        Ok(FeFunction { coeffs, space, arity })
    }

    /// Unchecked constructor for coefficients produced by this crate.
    pub(crate) fn from_raw(coeffs: Vec<f64>, space: Space, arity: usize) -> FeFunction {
        FeFunction { coeffs, space, arity }
    }

    pub fn bulk(mesh: &Mesh, coeffs: Vec<f64>) -> Result<FeFunction, FemError> {
        FeFunction::new(mesh, Space::Bulk, 1, coeffs)
    }

    pub fn surface(mesh: &Mesh, coeffs: Vec<f64>) -> Result<FeFunction, FemError> {
        FeFunction::new(mesh, Space::Surface, 1, coeffs)
    }

    pub fn zeros(mesh: &Mesh, space: Space, arity: usize) -> FeFunction {
        let n = match space {
            Space::Bulk | Space::ZeroTrace => mesh.n_nodes(),
            Space::Surface => mesh.n_boundary_nodes(),
        };
        FeFunction {
            coeffs: vec![0.0; n * arity],
            space,
            arity,
        }
    }

    /// Copy with boundary coefficients set to zero.
    pub fn zero_trace_part(&self, mesh: &Mesh) -> FeFunction {
        assert!(self.space != Space::Surface);
        let n = mesh.n_nodes();
        let mut c = self.coeffs.clone();
        for a in 0..self.arity {
            for &i in mesh.boundary_node_ids() {
                c[a * n + i] = 0.0;
            }
        }
        FeFunction {
            coeffs: c,
            space: Space::ZeroTrace,
            arity: self.arity,
        }
    }

    /// Reinterpret a zero-trace function as a member of the full bulk space.
    pub fn as_bulk(&self) -> FeFunction {
        assert!(self.space != Space::Surface);
        FeFunction {
            coeffs: self.coeffs.clone(),
            space: Space::Bulk,
            arity: self.arity,
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }
    pub fn space(&self) -> Space {
        self.space
    }
    pub fn arity(&self) -> usize {
        self.arity
    }
    fn block(&self) -> usize {
        self.coeffs.len() / self.arity
    }

    pub fn component(&self, c: usize) -> FeFunction {
        let n = self.block();
        FeFunction {
            coeffs: self.coeffs[c * n..(c + 1) * n].to_vec(),
            space: self.space,
            arity: 1,
        }
    }

    pub fn from_components(parts: &[FeFunction]) -> FeFunction {
        assert!(!parts.is_empty());
        let space = parts[0].space;
        let mut coeffs = Vec::new();
        for p in parts {
            assert_eq!(p.arity, 1);
            assert_eq!(p.space, space);
            coeffs.extend_from_slice(&p.coeffs);
        }
        FeFunction {
            coeffs,
            space,
            arity: parts.len(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> FeFunction {
        FeFunction {
            coeffs: self.coeffs.iter().map(|c| alpha * c).collect(),
            space: self.space,
            arity: self.arity,
        }
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &FeFunction) -> FeFunction {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        let space = if self.space == other.space { self.space } else { Space::Bulk };
        FeFunction {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + alpha * b).collect(),
            space,
            arity: self.arity,
        }
    }

    /// Value and physical gradient of a scalar bulk function.
    pub fn eval(&self, mesh: &Mesh, elem: usize, xi: [f64; 2]) -> (f64, Vector2<f64>) {
        let (_, jac) = mesh.map_point(elem, xi);
        let (v, g) = self.eval_reference(mesh, elem, xi, 0);
        let jinv_t = jac.try_inverse().expect("invertible jacobian").transpose();
        (v, jinv_t * g)
    }

    /// Value and reference gradient of component `c`.
    pub fn eval_reference(&self, mesh: &Mesh, elem: usize, xi: [f64; 2], c: usize) -> (f64, Vector2<f64>) {
        debug_assert!(self.space != Space::Surface);
        let order = mesh.order();
        let mut v = [0.0; 6];
        let mut g = [[0.0; 2]; 6];
        basis::shape_values(order, xi, &mut v);
        basis::shape_gradients(order, xi, &mut g);
        let off = c * mesh.n_nodes();
        let mut val = 0.0;
        let mut grad = Vector2::zeros();
        for (a, &i) in mesh.element(elem).iter().enumerate() {
            let ci = self.coeffs[off + i];
            val += ci * v[a];
            grad.x += ci * g[a][0];
            grad.y += ci * g[a][1];
        }
        (val, grad)
    }

    /// Jacobian `∂u_i/∂x_j` of a 2-vector bulk function.
    pub fn eval_jacobian(&self, mesh: &Mesh, elem: usize, xi: [f64; 2]) -> (Vector2<f64>, Matrix2<f64>) {
        assert_eq!(self.arity, 2);
        let (_, jac) = mesh.map_point(elem, xi);
        let jinv_t = jac.try_inverse().expect("invertible jacobian").transpose();
        let (v0, g0) = self.eval_reference(mesh, elem, xi, 0);
        let (v1, g1) = self.eval_reference(mesh, elem, xi, 1);
        let d0 = jinv_t * g0;
        let d1 = jinv_t * g1;
        (
            Vector2::new(v0, v1),
            Matrix2::new(d0.x, d0.y, d1.x, d1.y),
        )
    }
}

/// Checked wrapper around [`FeFunction::eval`].
pub fn eval_fe(mesh: &Mesh, u: &FeFunction, elem: usize, ref_pt: [f64; 2]) -> Result<(f64, Vector2<f64>), FemError> {
    if elem >= mesh.n_elements() {
        return Err(FemError::InvalidElement(elem));
    }
    if u.space == Space::Surface {
        return Err(FemError::WrongSpace {
            want: Space::Bulk,
            got: u.space,
        });
    }
    Ok(u.eval(mesh, elem, ref_pt))
}

/// A scalar quantity that can be sampled at a reference point of an element
/// whose physical image is `x`.
pub trait MeshField {
    fn value(&self, elem: usize, xi: [f64; 2], x: Vector2<f64>) -> f64;
}

/// A 2-vector quantity sampled like [`MeshField`].
pub trait VectorMeshField {
    fn value(&self, elem: usize, xi: [f64; 2], x: Vector2<f64>) -> Vector2<f64>;
}

/// Adapts a function of the physical point.
pub struct PointField<F>(pub F);

impl<F: Fn(Vector2<f64>) -> f64> MeshField for PointField<F> {
    fn value(&self, _: usize, _: [f64; 2], x: Vector2<f64>) -> f64 {
        (self.0)(x)
    }
}

impl<F: Fn(Vector2<f64>) -> Vector2<f64>> VectorMeshField for PointField<F> {
    fn value(&self, _: usize, _: [f64; 2], x: Vector2<f64>) -> Vector2<f64> {
        (self.0)(x)
    }
}

/// A finite element function borrowed together with its mesh.
pub struct FeField<'a> {
    pub mesh: &'a Mesh,
    pub u: &'a FeFunction,
}

impl MeshField for FeField<'_> {
    fn value(&self, elem: usize, xi: [f64; 2], _: Vector2<f64>) -> f64 {
        self.u.eval_reference(self.mesh, elem, xi, 0).0
    }
}

/// The elementwise gradient of a scalar finite element function.
pub struct FeGradient<'a> {
    pub mesh: &'a Mesh,
    pub u: &'a FeFunction,
}

impl VectorMeshField for FeGradient<'_> {
    fn value(&self, elem: usize, xi: [f64; 2], _: Vector2<f64>) -> Vector2<f64> {
        self.u.eval(self.mesh, elem, xi).1
    }
}

/// A domain map used for assembly: the discrete mesh itself, or the mesh
/// composed with a lift onto the exact domain.
pub trait ElementMap {
    fn mesh(&self) -> &Mesh;
    /// Image point and Jacobian with respect to reference coordinates.
    fn map(&self, elem: usize, xi: [f64; 2]) -> (Vector2<f64>, Matrix2<f64>);
    /// Image point and derivative along boundary face `f` at `t`.
    fn face_map(&self, f: usize, t: f64) -> (Vector2<f64>, Vector2<f64>);
}

impl ElementMap for Mesh {
    fn mesh(&self) -> &Mesh {
        self
    }
    fn map(&self, elem: usize, xi: [f64; 2]) -> (Vector2<f64>, Matrix2<f64>) {
        self.map_point(elem, xi)
    }
    fn face_map(&self, f: usize, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        self.face_point(f, t)
    }
}

pub fn default_degree(mesh: &Mesh) -> usize {
    2 * mesh.order() + 4
}

/// Bulk and surface forms. Surface matrices are indexed by the surface
/// numbering (position in `boundary_node_ids`).
#[derive(Debug, Clone)]
pub struct GramSet {
    pub m_bulk: CsrMatrix,
    pub a_bulk: CsrMatrix,
    pub m_surf: CsrMatrix,
    pub a_surf: CsrMatrix,
    pub interior_ids: Vec<usize>,
    pub boundary_ids: Vec<usize>,
    pub trace_selector: Vec<Option<usize>>,
}

impl GramSet {
    pub fn n_bulk(&self) -> usize {
        self.m_bulk.n_rows()
    }
    pub fn n_surface(&self) -> usize {
        self.m_surf.n_rows()
    }
    /// `M + A`, the full H¹ Gram matrix.
    pub fn h1_bulk(&self) -> CsrMatrix {
        self.m_bulk.add_scaled(&self.a_bulk, 1.0)
    }
    pub fn h1_surf(&self) -> CsrMatrix {
        self.m_surf.add_scaled(&self.a_surf, 1.0)
    }

    pub fn write_matrix_market(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, m) in [
            ("m_bulk", &self.m_bulk),
            ("a_bulk", &self.a_bulk),
            ("m_surf", &self.m_surf),
            ("a_surf", &self.a_surf),
        ] {
            let f = std::fs::File::create(dir.join(format!("{name}.mtx")))?;
            m.write_matrix_market(io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

pub fn assemble_grams(mesh: &Mesh) -> Result<GramSet, FemError> {
    assemble_grams_on(mesh, default_degree(mesh))
}

/// Assembles the four forms for an arbitrary element map at the given
/// quadrature degree.
pub fn assemble_grams_on<G: ElementMap + ?Sized>(geo: &G, degree: usize) -> Result<GramSet, FemError> {
    let mesh = geo.mesh();
    let tri = triangle_rule(degree)?;
    let edge = edge_rule(degree)?;
    let (m_bulk, a_bulk) = assemble_bulk(geo, &tri, |_| true)?;
    let (m_surf, a_surf) = assemble_surface(geo, &edge);
    Ok(GramSet {
        m_bulk,
        a_bulk,
        m_surf,
        a_surf,
        interior_ids: mesh.interior_node_ids().to_vec(),
        boundary_ids: mesh.boundary_node_ids().to_vec(),
        trace_selector: (0..mesh.n_nodes()).map(|i| mesh.surface_index(i)).collect(),
    })
}

/// Bulk mass and stiffness restricted to the elements accepted by `keep`.
pub fn assemble_bulk<G: ElementMap + ?Sized>(
    geo: &G,
    rule: &QuadratureRule,
    keep: impl Fn(usize) -> bool,
) -> Result<(CsrMatrix, CsrMatrix), FemError> {
    let mesh = geo.mesh();
    let order = mesh.order();
    let nloc = mesh.nodes_per_element();
    let n = mesh.n_nodes();
    let mut tm = Vec::with_capacity(mesh.n_elements() * nloc * nloc);
    let mut ta = Vec::with_capacity(mesh.n_elements() * nloc * nloc);
    let mut v = [0.0; 6];
    let mut g = [[0.0; 2]; 6];
    let mut grad = [Vector2::zeros(); 6];
    for e in 0..mesh.n_elements() {
        if !keep(e) {
            continue;
        }
        let ids = mesh.element(e);
        let mut lm = [[0.0; 6]; 6];
        let mut la = [[0.0; 6]; 6];
        for (xi, w) in rule.iter() {
            let (_, jac) = geo.map(e, xi);
            let det = jac.determinant();
            if !(det > 0.0) {
                return Err(FemError::InvertedElement { elem: e, det });
            }
            let jinv_t = jac.try_inverse().expect("det > 0").transpose();
            basis::shape_values(order, xi, &mut v);
            basis::shape_gradients(order, xi, &mut g);
            for a in 0..nloc {
                grad[a] = jinv_t * Vector2::new(g[a][0], g[a][1]);
            }
            let wd = w * det;
            for a in 0..nloc {
                for b in 0..nloc {
                    lm[a][b] += wd * v[a] * v[b];
                    la[a][b] += wd * grad[a].dot(&grad[b]);
                }
            }
        }
        for a in 0..nloc {
            for b in 0..nloc {
                tm.push((ids[a], ids[b], lm[a][b]));
                ta.push((ids[a], ids[b], la[a][b]));
            }
        }
    }
    Ok((CsrMatrix::from_triplets(n, n, tm), CsrMatrix::from_triplets(n, n, ta)))
}

/// Boundary mass and tangential stiffness in surface numbering.
pub fn assemble_surface<G: ElementMap + ?Sized>(geo: &G, rule: &QuadratureRule) -> (CsrMatrix, CsrMatrix) {
    let mesh = geo.mesh();
    let order = mesh.order();
    let ns = mesh.n_boundary_nodes();
    let mut tm = Vec::new();
    let mut ta = Vec::new();
    let mut v = [0.0; 3];
    let mut d = [0.0; 3];
    for (f, face) in mesh.boundary_faces().iter().enumerate() {
        let sid: Vec<usize> = face.iter().map(|&i| mesh.surface_index(i).expect("boundary node")).collect();
        let m = sid.len();
        let mut lm = [[0.0; 3]; 3];
        let mut la = [[0.0; 3]; 3];
        for (p, w) in rule.iter() {
            let t = p[0];
            let (_, tan) = geo.face_map(f, t);
            let len = tan.norm();
            basis::edge_values(order, t, &mut v);
            basis::edge_derivatives(order, t, &mut d);
            for a in 0..m {
                for b in 0..m {
                    lm[a][b] += w * len * v[a] * v[b];
                    la[a][b] += w * d[a] * d[b] / len;
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                tm.push((sid[a], sid[b], lm[a][b]));
                ta.push((sid[a], sid[b], la[a][b]));
            }
        }
    }
    (CsrMatrix::from_triplets(ns, ns, tm), CsrMatrix::from_triplets(ns, ns, ta))
}

pub fn nodal_interp_bulk(mesh: &Mesh, v: impl Fn(Vector2<f64>) -> f64) -> FeFunction {
    FeFunction {
        coeffs: mesh.nodes().iter().map(|&p| v(p)).collect(),
        space: Space::Bulk,
        arity: 1,
    }
}

pub fn nodal_interp_surface(mesh: &Mesh, v: impl Fn(Vector2<f64>) -> f64) -> FeFunction {
    FeFunction {
        coeffs: mesh.boundary_node_ids().iter().map(|&i| v(mesh.node(i))).collect(),
        space: Space::Surface,
        arity: 1,
    }
}

pub fn nodal_interp_vector(mesh: &Mesh, v: impl Fn(Vector2<f64>) -> Vector2<f64>) -> FeFunction {
    let vals: Vec<Vector2<f64>> = mesh.nodes().iter().map(|&p| v(p)).collect();
    let mut coeffs: Vec<f64> = vals.iter().map(|p| p.x).collect();
    coeffs.extend(vals.iter().map(|p| p.y));
    FeFunction {
        coeffs,
        space: Space::Bulk,
        arity: 2,
    }
}

pub fn trace(mesh: &Mesh, u: &FeFunction) -> FeFunction {
    assert!(u.space != Space::Surface, "trace of a surface function");
    let n = mesh.n_nodes();
    let mut coeffs = Vec::with_capacity(mesh.n_boundary_nodes() * u.arity);
    for c in 0..u.arity {
        coeffs.extend(mesh.boundary_node_ids().iter().map(|&i| u.coeffs[c * n + i]));
    }
    FeFunction {
        coeffs,
        space: Space::Surface,
        arity: u.arity,
    }
}

/// Bulk function with the given boundary values and zero interior values.
pub fn extend_by_zero(mesh: &Mesh, g: &FeFunction) -> FeFunction {
    assert_eq!(g.space, Space::Surface);
    assert_eq!(g.arity, 1);
    let mut coeffs = vec![0.0; mesh.n_nodes()];
    for (s, &i) in mesh.boundary_node_ids().iter().enumerate() {
        coeffs[i] = g.coeffs[s];
    }
    FeFunction {
        coeffs,
        space: Space::Bulk,
        arity: 1,
    }
}

/// Load vector `∫ f φ_j` over the domain described by `geo`.
pub fn load_vector<G: ElementMap + ?Sized>(geo: &G, f: &dyn MeshField, degree: usize) -> Result<Vec<f64>, FemError> {
    let mesh = geo.mesh();
    let rule = triangle_rule(degree)?;
    let mut b = vec![0.0; mesh.n_nodes()];
    let mut v = [0.0; 6];
    for e in 0..mesh.n_elements() {
        let ids = mesh.element(e);
        for (xi, w) in rule.iter() {
            let (x, jac) = geo.map(e, xi);
            let fx = f.value(e, xi, x) * w * jac.determinant();
            basis::shape_values(mesh.order(), xi, &mut v);
            for (a, &i) in ids.iter().enumerate() {
                b[i] += fx * v[a];
            }
        }
    }
    Ok(b)
}

/// Surface load `∫ g ψ_j` in surface numbering; `g` is a function of the
/// image point.
pub fn surface_load_vector<G: ElementMap + ?Sized>(
    geo: &G,
    g: &dyn Fn(Vector2<f64>) -> f64,
    degree: usize,
) -> Result<Vec<f64>, FemError> {
    let mesh = geo.mesh();
    let rule = edge_rule(degree)?;
    let mut b = vec![0.0; mesh.n_boundary_nodes()];
    let mut v = [0.0; 3];
    for (f, face) in mesh.boundary_faces().iter().enumerate() {
        for (p, w) in rule.iter() {
            let (y, tan) = geo.face_map(f, p[0]);
            let gy = g(y) * w * tan.norm();
            basis::edge_values(mesh.order(), p[0], &mut v);
            for (a, &i) in face.iter().enumerate() {
                b[mesh.surface_index(i).expect("boundary node")] += gy * v[a];
            }
        }
    }
    Ok(b)
}

/// `∫ z · ∇φ_j` for every bulk basis function.
pub fn gradient_load_vector<G: ElementMap + ?Sized>(
    geo: &G,
    z: &dyn VectorMeshField,
    degree: usize,
) -> Result<Vec<f64>, FemError> {
    let mesh = geo.mesh();
    let rule = triangle_rule(degree)?;
    let mut b = vec![0.0; mesh.n_nodes()];
    let mut g = [[0.0; 2]; 6];
    for e in 0..mesh.n_elements() {
        let ids = mesh.element(e);
        for (xi, w) in rule.iter() {
            let (x, jac) = geo.map(e, xi);
            let det = jac.determinant();
            let jinv_t = jac.try_inverse().expect("invertible jacobian").transpose();
            let zx = z.value(e, xi, x);
            basis::shape_gradients(mesh.order(), xi, &mut g);
            for (a, &i) in ids.iter().enumerate() {
                let gr = jinv_t * Vector2::new(g[a][0], g[a][1]);
                b[i] += w * det * zx.dot(&gr);
            }
        }
    }
    Ok(b)
}

/// Squared L² norm of a field by quadrature over the domain of `geo`.
pub fn l2_norm_sq<G: ElementMap + ?Sized>(geo: &G, f: &dyn MeshField, degree: usize) -> Result<f64, FemError> {
    let mesh = geo.mesh();
    let rule = triangle_rule(degree)?;
    let mut s = 0.0;
    for e in 0..mesh.n_elements() {
        for (xi, w) in rule.iter() {
            let (x, jac) = geo.map(e, xi);
            let v = f.value(e, xi, x);
            s += w * jac.determinant() * v * v;
        }
    }
    Ok(s)
}

pub fn l2_norm(grams: &GramSet, u: &FeFunction) -> f64 {
    grams.m_bulk.quadratic(u.coeffs()).max(0.0).sqrt()
}

/// Full H¹ norm `sqrt(uᵀ(M+A)u)`, summed over components.
pub fn h1_norm(grams: &GramSet, u: &FeFunction) -> f64 {
    (0..u.arity())
        .map(|c| {
            let uc = u.component(c);
            grams.m_bulk.quadratic(uc.coeffs()) + grams.a_bulk.quadratic(uc.coeffs())
        })
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_disk_mesh_rings, build_square_mesh};

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn square_mass_of_one_is_area() {
        for k in [1, 2] {
            let m = build_square_mesh(3, k).unwrap();
            let g = assemble_grams(&m).unwrap();
            assert!((g.m_bulk.quadratic(&ones(m.n_nodes())) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn square_stiffness_of_x_is_one() {
        let m = build_square_mesh(4, 1).unwrap();
        let g = assemble_grams(&m).unwrap();
        let u = nodal_interp_bulk(&m, |p| p.x);
        assert!((g.a_bulk.quadratic(u.coeffs()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disk_p1_perimeter_is_inscribed_polygon() {
        for n in [2, 3, 6] {
            let m = build_disk_mesh_rings(n, 1).unwrap();
            let g = assemble_grams(&m).unwrap();
            let ng = m.n_boundary_nodes() as f64;
            let want = 2.0 * ng * (std::f64::consts::PI / ng).sin();
            assert!((g.m_surf.quadratic(&ones(m.n_boundary_nodes())) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn grams_symmetric_with_constant_kernels() {
        for k in [1, 2] {
            let m = build_disk_mesh_rings(3, k).unwrap();
            let g = assemble_grams(&m).unwrap();
            for a in [&g.m_bulk, &g.a_bulk, &g.m_surf, &g.a_surf] {
                assert!(a.symmetry_defect() <= 1e-14 * a.max_abs().max(1.0));
            }
            let a1 = g.a_bulk.matvec(&ones(m.n_nodes()));
            assert!(a1.iter().all(|v| v.abs() < 1e-12));
            let s1 = g.a_surf.matvec(&ones(m.n_boundary_nodes()));
            assert!(s1.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn eval_constant_and_linear() {
        let m = build_square_mesh(3, 1).unwrap();
        let c = nodal_interp_bulk(&m, |_| 5.0);
        let l = nodal_interp_bulk(&m, |p| p.x + 2.0 * p.y);
        for e in 0..m.n_elements() {
            let (v, g) = eval_fe(&m, &c, e, [0.3, 0.2]).unwrap();
            assert!((v - 5.0).abs() < 1e-14 && g.norm() < 1e-13);
            let (_, g) = eval_fe(&m, &l, e, [0.1, 0.7]).unwrap();
            assert!((g - Vector2::new(1.0, 2.0)).norm() < 1e-13);
        }
        assert!(eval_fe(&m, &c, m.n_elements(), [0.0, 0.0]).is_err());
    }

    #[test]
    fn basis_function_is_nodal_delta() {
        let m = build_disk_mesh_rings(2, 2).unwrap();
        let refs = basis::reference_nodes(2);
        for i in [0usize, 5, 17, m.n_nodes() - 1] {
            let mut c = vec![0.0; m.n_nodes()];
            c[i] = 1.0;
            let phi = FeFunction::bulk(&m, c).unwrap();
            for e in 0..m.n_elements() {
                for (a, &j) in m.element(e).iter().enumerate() {
                    let (v, _) = phi.eval(&m, e, refs[a]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        for k in [1, 2] {
            let m = build_disk_mesh_rings(3, k).unwrap();
            let one = nodal_interp_bulk(&m, |_| 1.0);
            let r = triangle_rule(default_degree(&m)).unwrap();
            for e in 0..m.n_elements() {
                for (xi, _) in r.iter() {
                    let (v, g) = one.eval(&m, e, xi);
                    assert!((v - 1.0).abs() < 1e-13);
                    assert!(g.norm() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn polynomial_reproduction_on_square() {
        for k in [1usize, 2] {
            let m = build_square_mesh(3, k).unwrap();
            let g = assemble_grams(&m).unwrap();
            let f = move |p: Vector2<f64>| if k == 1 { 1.0 + 2.0 * p.x - p.y } else { p.x * p.y - p.y * p.y + 0.5 * p.x };
            let u = nodal_interp_bulk(&m, f);
            let r = triangle_rule(8).unwrap();
            for e in 0..m.n_elements() {
                for (xi, _) in r.iter() {
                    let (x, _) = m.map_point(e, xi);
                    assert!((u.eval(&m, e, xi).0 - f(x)).abs() < 1e-13);
                }
            }
            assert!(h1_norm(&g, &u) > 0.0);
        }
    }

    #[test]
    fn interp_of_zero_is_zero() {
        let m = build_square_mesh(2, 2).unwrap();
        assert!(nodal_interp_bulk(&m, |_| 0.0).coeffs().iter().all(|&c| c == 0.0));
        assert!(nodal_interp_surface(&m, |_| 0.0).coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn trace_behaviour() {
        let m = build_disk_mesh_rings(3, 2).unwrap();
        let g = assemble_grams(&m).unwrap();
        let one = nodal_interp_bulk(&m, |_| 1.0);
        assert_eq!(trace(&m, &one), nodal_interp_surface(&m, |_| 1.0));
        let u = nodal_interp_bulk(&m, |p| p.x * p.x - 0.3 * p.y);
        let z = u.zero_trace_part(&m);
        assert!(trace(&m, &z).coeffs().iter().all(|&c| c == 0.0));
        // boundary quadrature of u² straight from the bulk representation
        let rule = edge_rule(12).unwrap();
        let mut direct = 0.0;
        for f in 0..m.boundary_faces().len() {
            let (e, le) = m.face_owner(f);
            for (p, w) in rule.iter() {
                let (v, _) = u.eval(&m, e, basis::edge_point(le, p[0]));
                let (_, tan) = m.face_point(f, p[0]);
                direct += w * tan.norm() * v * v;
            }
        }
        let tr = trace(&m, &u);
        let q = g.m_surf.quadratic(tr.coeffs());
        // |tangent| is not polynomial on curved faces
        assert!((q - direct).abs() < 1e-10 * direct, "{q} vs {direct}");
    }

    #[test]
    fn zero_trace_validation() {
        let m = build_square_mesh(2, 1).unwrap();
        assert!(FeFunction::new(&m, Space::ZeroTrace, 1, vec![1.0; 9]).is_err());
        assert!(FeFunction::bulk(&m, vec![1.0; 8]).is_err());
    }

    #[test]
    fn matrix_market_export() {
        let m = build_square_mesh(2, 1).unwrap();
        let g = assemble_grams(&m).unwrap();
        let dir = std::env::temp_dir().join(format!("fracnorm-mtx-{}", std::process::id()));
        g.write_matrix_market(&dir).unwrap();
        let text = std::fs::read_to_string(dir.join("a_bulk.mtx")).unwrap();
        assert!(text.starts_with("%%MatrixMarket"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
