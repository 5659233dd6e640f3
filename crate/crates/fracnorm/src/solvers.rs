//! Discrete Dirichlet and Robin problems, their fine-mesh surrogates for
//! the continuous solution operators, and the Dirichlet energy on a
//! deformed mesh.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, Vector2};
use thiserror::Error;

use crate::basis;
use crate::fem::{
    assemble_bulk, default_degree, load_vector, surface_load_vector, FemError, FeFunction, GramSet, PointField, Space,
};
use crate::lift::{lifted_grams, LiftError, LiftMap};
use crate::linalg::{CsrMatrix, LinalgError, SpdSolver};
use crate::mesh::{Mesh, MeshError};
use crate::multilinear::deformation_tensor;
use crate::quadrature::triangle_rule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("deformed element {elem} is inverted")]
    InvertedDeformation { elem: usize },
    #[error("argument belongs to the wrong space")]
    WrongSpace,
    #[error("linear solve failed: {0}")]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Lift(#[from] LiftError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Dirichlet,
    Robin,
}

/// Solves `a(u, φ) = rhs(φ)` for interior test functions with `u = g` on
/// the boundary nodes. `g` is in surface numbering.
pub fn dirichlet_with_rhs(a: &CsrMatrix, rhs: &[f64], grams: &GramSet, g: &[f64]) -> Result<Vec<f64>, SolverError> {
    let solver = SpdSolver::new(&a.submatrix(&grams.interior_ids, &grams.interior_ids))?;
    dirichlet_with_factor(&solver, a, rhs, grams, g)
}

fn dirichlet_with_factor(
    solver: &SpdSolver,
    a: &CsrMatrix,
    rhs: &[f64],
    grams: &GramSet,
    g: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let n = a.n_rows();
    let mut u = vec![0.0; n];
    for (s, &i) in grams.boundary_ids.iter().enumerate() {
        u[i] = g[s];
    }
    let lift = a.matvec(&u);
    let b: Vec<f64> = grams.interior_ids.iter().map(|&i| rhs[i] - lift[i]).collect();
    let x = solver.solve(&b);
    for (p, &i) in grams.interior_ids.iter().enumerate() {
        u[i] = x[p];
    }
    Ok(u)
}

fn check_data(f: &FeFunction, g: &FeFunction) -> Result<(), SolverError> {
    if f.space() == Space::Surface || f.arity() != 1 || g.space() != Space::Surface || g.arity() != 1 {
        return Err(SolverError::WrongSpace);
    }
    Ok(())
}

pub fn solve_dirichlet_fe(grams: &GramSet, f: &FeFunction, g: &FeFunction) -> Result<FeFunction, SolverError> {
    check_data(f, g)?;
    let rhs = grams.m_bulk.matvec(f.coeffs());
    let u = dirichlet_with_rhs(&grams.a_bulk, &rhs, grams, g.coeffs())?;
    Ok(FeFunction::from_raw(u, Space::Bulk, 1))
}

/// Bulk stiffness plus boundary mass embedded through the trace.
pub fn robin_matrix(grams: &GramSet) -> CsrMatrix {
    let n = grams.n_bulk();
    let trip: Vec<(usize, usize, f64)> = grams
        .m_surf
        .triplets()
        .map(|(i, j, v)| (grams.boundary_ids[i], grams.boundary_ids[j], v))
        .collect();
    grams.a_bulk.add_scaled(&CsrMatrix::from_triplets(n, n, trip), 1.0)
}

fn embed_surface(grams: &GramSet, s: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grams.n_bulk()];
    for (p, &i) in grams.boundary_ids.iter().enumerate() {
        out[i] = s[p];
    }
    out
}

pub fn solve_robin_fe(grams: &GramSet, f: &FeFunction, g: &FeFunction) -> Result<FeFunction, SolverError> {
    check_data(f, g)?;
    let mut rhs = grams.m_bulk.matvec(f.coeffs());
    let sg = embed_surface(grams, &grams.m_surf.matvec(g.coeffs()));
    for (r, s) in rhs.iter_mut().zip(&sg) {
        *r += s;
    }
    let u = SpdSolver::new(&robin_matrix(grams))?.solve(&rhs);
    Ok(FeFunction::from_raw(u, Space::Bulk, 1))
}

/// Largest `|a(u, φ_i) − m(f, φ_i)|` over interior basis functions.
pub fn dirichlet_residual(grams: &GramSet, u: &FeFunction, f: &FeFunction) -> f64 {
    let au = grams.a_bulk.matvec(u.coeffs());
    let mf = grams.m_bulk.matvec(f.coeffs());
    grams.interior_ids.iter().map(|&i| (au[i] - mf[i]).abs()).fold(0.0, f64::max)
}

/// A fine mesh with its lift onto the exact disk, the lifted forms and the
/// factorisations reused by every surrogate solve on it.
pub struct Overkill {
    pub mesh: Mesh,
    pub lift: LiftMap,
    pub grams: GramSet,
    dirichlet: SpdSolver,
    robin: SpdSolver,
    mass: SpdSolver,
    degree: usize,
}

impl std::fmt::Debug for Overkill {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Overkill")
            .field("nodes", &self.mesh.n_nodes())
            .field("h", &self.mesh.h())
            .finish()
    }
}

impl Overkill {
    pub fn new(mesh: Mesh) -> Result<Overkill, SolverError> {
        let lift = LiftMap::new(&mesh);
        let degree = default_degree(&mesh);
        let grams = lifted_grams(&lift, degree)?;
        let dirichlet = SpdSolver::new(&grams.a_bulk.submatrix(&grams.interior_ids, &grams.interior_ids))?;
        let robin = SpdSolver::new(&robin_matrix(&grams))?;
        let mass = SpdSolver::new(&grams.m_bulk)?;
        Ok(Overkill {
            mesh,
            lift,
            grams,
            dirichlet,
            robin,
            mass,
            degree,
        })
    }

    /// `refined(levels)` of `coarse`.
    pub fn from_coarse(coarse: &Mesh, levels: u32) -> Result<Overkill, SolverError> {
        Overkill::new(coarse.refined(levels)?)
    }

    pub fn mass_solver(&self) -> &SpdSolver {
        &self.mass
    }
}

/// A fine-mesh stand-in for a continuous solution on the exact domain.
#[derive(Debug, Clone)]
pub struct OverkillSolution {
    pub kind: ProblemKind,
    pub fine: Arc<Overkill>,
    pub u: FeFunction,
}

impl OverkillSolution {
    pub fn fine_mesh(&self) -> &Mesh {
        &self.fine.mesh
    }

    pub fn coeffs(&self) -> &[f64] {
        self.u.coeffs()
    }

    /// Value and gradient at a point of the exact domain.
    pub fn eval(&self, y: Vector2<f64>) -> Option<(f64, Vector2<f64>)> {
        let (e, xi) = self.fine.lift.locate_exact(y)?;
        Some(self.eval_at(e, xi))
    }

    /// Value and gradient at the lifted image of `ξ` in fine element `e`.
    pub fn eval_at(&self, e: usize, xi: [f64; 2]) -> (f64, Vector2<f64>) {
        let (v, g) = self.u.eval_reference(&self.fine.mesh, e, xi, 0);
        let (_, dg) = self.fine.lift.lifted_map(e, xi);
        (v, dg.try_inverse().expect("invertible lifted map").transpose() * g)
    }

    /// H¹ norm on the exact domain.
    pub fn h1_norm(&self) -> f64 {
        self.fine.grams.h1_bulk().quadratic(self.u.coeffs()).max(0.0).sqrt()
    }
}

/// Solves the continuous problem with data `f` (bulk) and `g` (boundary)
/// on the fine mesh. Both are functions of the exact-domain point.
pub fn continuous_surrogate(
    kind: ProblemKind,
    f: &dyn Fn(Vector2<f64>) -> f64,
    g: &dyn Fn(Vector2<f64>) -> f64,
    fine: &Arc<Overkill>,
) -> Result<OverkillSolution, SolverError> {
    let ok = fine.as_ref();
    let rhs = load_vector(&ok.lift, &PointField(f), ok.degree)?;
    let u = match kind {
        ProblemKind::Dirichlet => {
            let gv: Vec<f64> = ok.mesh.boundary_node_ids().iter().map(|&i| g(ok.mesh.node(i))).collect();
            dirichlet_with_factor(&ok.dirichlet, &ok.grams.a_bulk, &rhs, &ok.grams, &gv)?
        }
        ProblemKind::Robin => {
            let sg = surface_load_vector(&ok.lift, g, ok.degree)?;
            let mut b = rhs;
            for (p, &i) in ok.grams.boundary_ids.iter().enumerate() {
                b[i] += sg[p];
            }
            ok.robin.solve(&b)
        }
    };
    Ok(OverkillSolution {
        kind,
        fine: Arc::clone(fine),
        u: FeFunction::from_raw(u, Space::Bulk, 1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeformationMethod {
    /// quadrature of the deformation tensor on the undeformed mesh
    Pullback,
    /// reassembly on the mesh with displaced nodes
    Remesh,
}

/// `a_{Φ(Ω_h)}(w∘Φ⁻¹, z∘Φ⁻¹)` for `Φ = id + e_x`.
pub fn deformed_dirichlet_energy(
    mesh: &Mesh,
    e_x: &FeFunction,
    w: &FeFunction,
    z: &FeFunction,
    method: DeformationMethod,
) -> Result<f64, SolverError> {
    if e_x.arity() != 2 || w.arity() != 1 || z.arity() != 1 {
        return Err(SolverError::WrongSpace);
    }
    let degree = default_degree(mesh);
    match method {
        DeformationMethod::Pullback => {
            let rule = triangle_rule(degree).map_err(FemError::from)?;
            let mut total = 0.0;
            for e in 0..mesh.n_elements() {
                for (xi, wq) in rule.iter() {
                    let (_, jac) = mesh.map_point(e, xi);
                    let (_, de) = e_x.eval_jacobian(mesh, e, xi);
                    let a = de.transpose();
                    if (a + Matrix2::identity()).determinant() <= 0.0 {
                        return Err(SolverError::InvertedDeformation { elem: e });
                    }
                    let ad = DMatrix::from_row_slice(2, 2, &[a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]]);
                    let t = deformation_tensor(&ad).map_err(|_| SolverError::InvertedDeformation { elem: e })?;
                    let t = Matrix2::new(t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]) + Matrix2::identity();
                    let gw = w.eval(mesh, e, xi).1;
                    let gz = z.eval(mesh, e, xi).1;
                    total += wq * jac.determinant() * (t * gw).dot(&gz);
                }
            }
            Ok(total)
        }
        DeformationMethod::Remesh => {
            let n = mesh.n_nodes();
            let c = e_x.coeffs();
            let disp: Vec<Vector2<f64>> = (0..n).map(|i| Vector2::new(c[i], c[n + i])).collect();
            let moved = mesh.displaced(&disp).map_err(|err| match err {
                MeshError::InvertedElement { elem, .. } => SolverError::InvertedDeformation { elem },
                other => SolverError::Mesh(other),
            })?;
            let rule = triangle_rule(degree).map_err(FemError::from)?;
            let (_, a) = assemble_bulk(&moved, &rule, |_| true)?;
            Ok(a.bilinear(w.coeffs(), z.coeffs()))
        }
    }
}

/// Reference points where a boundary face's nodes sit, for tests and
/// sampling along the edge.
pub fn face_reference_points(mesh: &Mesh, f: usize, n: usize) -> Vec<(usize, [f64; 2])> {
    let (e, le) = mesh.face_owner(f);
    (0..=n).map(|i| (e, basis::edge_point(le, i as f64 / n as f64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_grams, nodal_interp_bulk, nodal_interp_surface, nodal_interp_vector, trace};
    use crate::mesh::{build_disk_mesh_rings, build_square_mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_data_gives_zero() {
        let m = build_disk_mesh_rings(3, 2).unwrap();
        let g = assemble_grams(&m).unwrap();
        let f0 = FeFunction::zeros(&m, Space::Bulk, 1);
        let g0 = FeFunction::zeros(&m, Space::Surface, 1);
        assert!(solve_dirichlet_fe(&g, &f0, &g0).unwrap().coeffs().iter().all(|&c| c == 0.0));
        assert!(solve_robin_fe(&g, &f0, &g0).unwrap().coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn linear_boundary_data_reproduced() {
        let m = build_square_mesh(4, 1).unwrap();
        let g = assemble_grams(&m).unwrap();
        let f0 = FeFunction::zeros(&m, Space::Bulk, 1);
        let gx = nodal_interp_surface(&m, |p| p.x);
        let u = solve_dirichlet_fe(&g, &f0, &gx).unwrap();
        let want = nodal_interp_bulk(&m, |p| p.x);
        for (a, b) in u.coeffs().iter().zip(want.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn robin_with_unit_data_is_one() {
        let m = build_disk_mesh_rings(3, 2).unwrap();
        let g = assemble_grams(&m).unwrap();
        let f0 = FeFunction::zeros(&m, Space::Bulk, 1);
        let u = solve_robin_fe(&g, &f0, &nodal_interp_surface(&m, |_| 1.0)).unwrap();
        assert!(u.coeffs().iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn galerkin_residual_and_trace() {
        let m = build_disk_mesh_rings(4, 2).unwrap();
        let g = assemble_grams(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = FeFunction::bulk(&m, (0..m.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let gd = nodal_interp_surface(&m, |p| p.x * p.y);
        let u = solve_dirichlet_fe(&g, &f, &gd).unwrap();
        assert_eq!(trace(&m, &u), gd);
        let scale = g.a_bulk.max_abs() * crate::linalg::norm_inf(u.coeffs());
        assert!(dirichlet_residual(&g, &u, &f) <= 1e-12 * scale);
    }

    #[test]
    fn surrogates_reproduce_constants() {
        let coarse = build_disk_mesh_rings(2, 1).unwrap();
        let ok = Arc::new(Overkill::from_coarse(&coarse, 1).unwrap());
        for kind in [ProblemKind::Dirichlet, ProblemKind::Robin] {
            let s = continuous_surrogate(kind, &|_| 0.0, &|_| 1.0, &ok).unwrap();
            assert!(s.coeffs().iter().all(|c| (c - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn deformation_trivial_cases() {
        for k in [1, 2] {
            let m = build_disk_mesh_rings(3, k).unwrap();
            let g = assemble_grams(&m).unwrap();
            let w = nodal_interp_bulk(&m, |p| p.x * p.x + p.y);
            let z = nodal_interp_bulk(&m, |p| (p.x - p.y).sin());
            let base = g.a_bulk.bilinear(w.coeffs(), z.coeffs());
            let zero = nodal_interp_vector(&m, |_| Vector2::zeros());
            for method in [DeformationMethod::Pullback, DeformationMethod::Remesh] {
                let v = deformed_dirichlet_energy(&m, &zero, &w, &z, method).unwrap();
                assert!((v - base).abs() <= 1e-12 * base.abs().max(1.0));
            }
            let scale = nodal_interp_vector(&m, |p| p * 0.05);
            let v = deformed_dirichlet_energy(&m, &scale, &w, &z, DeformationMethod::Pullback).unwrap();
            assert!((v - base).abs() <= 1e-12 * base.abs().max(1.0));
        }
    }

    #[test]
    fn pullback_matches_remesh() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in [1, 2] {
            let m = build_disk_mesh_rings(3, k).unwrap();
            let w = nodal_interp_bulk(&m, |p| p.x * p.y);
            let z = nodal_interp_bulk(&m, |p| p.x - p.y * p.y);
            for _ in 0..5 {
                let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-0.05..0.05));
                let e = nodal_interp_vector(&m, |p| {
                    Vector2::new(a[0] * (2.0 * p.y).sin() + a[1] * p.x * p.x, a[2] * p.x * p.y + a[3] * (p.x).cos())
                });
                let p = deformed_dirichlet_energy(&m, &e, &w, &z, DeformationMethod::Pullback).unwrap();
                let r = deformed_dirichlet_energy(&m, &e, &w, &z, DeformationMethod::Remesh).unwrap();
                assert!((p - r).abs() <= 1e-10 * p.abs());
            }
        }
    }

    #[test]
    fn inverted_deformation_rejected() {
        let m = build_square_mesh(2, 1).unwrap();
        let w = nodal_interp_bulk(&m, |p| p.x);
        let fold = nodal_interp_vector(&m, |p| Vector2::new(-2.0 * p.x, 0.0));
        for method in [DeformationMethod::Pullback, DeformationMethod::Remesh] {
            assert!(matches!(
                deformed_dirichlet_energy(&m, &fold, &w, &w, method),
                Err(SolverError::InvertedDeformation { .. })
            ));
        }
    }
}
