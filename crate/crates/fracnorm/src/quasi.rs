//! Scott–Zhang quasi-interpolation, the Dirichlet lift of a discrete
//! function, the Ritz map with Robin-type form and the four-term W^{1,∞}
//! norm built from them.

use std::cell::Cell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::basis;
use crate::fem::{
    default_degree, gradient_load_vector, surface_load_vector, FeFunction, FemError, GramSet, MeshField, Space,
    VectorMeshField,
};
use crate::lift::{lift_function, LiftError, LiftMap};
use crate::linalg::{LinalgError, SpdSolver};
use crate::mesh::Mesh;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::solvers::{continuous_surrogate, robin_matrix, Overkill, OverkillSolution, ProblemKind, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuasiError {
    #[error("point ({0}, {1}) could not be located")]
    Unlocated(f64, f64),
    #[error("expected a scalar bulk function")]
    WrongSpace,
    #[error("fine mesh does not refine the lifted mesh")]
    MeshMismatch,
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
}

fn local_mass(values: &[Vec<f64>], weights: &[f64]) -> DMatrix<f64> {
    let n = values[0].len();
    let mut m = DMatrix::zeros(n, n);
    for (v, &w) in values.iter().zip(weights) {
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] += w * v[a] * v[b];
            }
        }
    }
    m
}

/// Coefficient `∫_σ v ψ_a` against the dual basis of the cell σ: the
/// moments `∫_σ v φ_b` mapped through the inverse cell mass matrix.
fn dual_coefficient(values: &[Vec<f64>], weights: &[f64], samples: &[f64], a: usize) -> f64 {
    let m = local_mass(values, weights);
    let n = m.nrows();
    let mut moments = DVector::zeros(n);
    for ((v, &w), &s) in values.iter().zip(weights).zip(samples) {
        for b in 0..n {
            moments[b] += w * s * v[b];
        }
    }
    let inv = m.cholesky().expect("cell mass is SPD").inverse();
    (inv.row(a) * moments)[(0, 0)]
}

/// Scott–Zhang interpolant of a field. Boundary nodes average over their
/// lowest-index boundary face, interior nodes over their lowest-index
/// element; the field is always sampled through an owning element.
pub fn scott_zhang(mesh: &Mesh, v: &dyn MeshField) -> Result<FeFunction, QuasiError> {
    let k = mesh.order();
    let degree = default_degree(mesh);
    let trule = triangle_rule(degree)?;
    let erule = edge_rule(degree)?;
    let npe = mesh.nodes_per_element();
    let mut out = vec![0.0; mesh.n_nodes()];
    let mut sv = vec![0.0; npe];
    for (i, slot) in out.iter_mut().enumerate() {
        let (values, weights, samples, a) = if mesh.is_boundary_node(i) {
            let f = *mesh.node_faces(i).iter().min().expect("boundary node has a face");
            let face = &mesh.boundary_faces()[f];
            let (e, le) = mesh.face_owner(f);
            let mut vals = Vec::new();
            let mut ws = Vec::new();
            let mut ss = Vec::new();
            let mut ev = [0.0; 3];
            for (p, w) in erule.iter() {
                let (_, tan) = mesh.face_point(f, p[0]);
                basis::edge_values(k, p[0], &mut ev);
                vals.push(ev[..face.len()].to_vec());
                ws.push(w * tan.norm());
                let xi = basis::edge_point(le, p[0]);
                ss.push(v.value(e, xi, mesh.map_point(e, xi).0));
            }
            let a = face.iter().position(|&j| j == i).expect("node on face");
            (vals, ws, ss, a)
        } else {
            let e = *mesh.node_elements(i).iter().min().expect("node has an element");
            let mut vals = Vec::new();
            let mut ws = Vec::new();
            let mut ss = Vec::new();
            for (xi, w) in trule.iter() {
                let (x, jac) = mesh.map_point(e, xi);
                basis::shape_values(k, xi, &mut sv);
                vals.push(sv.clone());
                ws.push(w * jac.determinant());
                ss.push(v.value(e, xi, x));
            }
            let a = mesh.element(e).iter().position(|&j| j == i).expect("node in element");
            (vals, ws, ss, a)
        };
        *slot = dual_coefficient(&values, &weights, &samples, a);
    }
    Ok(FeFunction::from_raw(out, Space::Bulk, 1))
}

/// `(f_h, g_h)` with `m(f_h, φ) = a(u_h, φ)` for every zero-trace `φ` and
/// `g_h = γ_h u_h`.
pub fn dirichlet_riesz_data(u: &FeFunction, grams: &GramSet) -> Result<(FeFunction, FeFunction), QuasiError> {
    if u.space() == Space::Surface || u.arity() != 1 {
        return Err(QuasiError::WrongSpace);
    }
    let au = grams.a_bulk.matvec(u.coeffs());
    let r: Vec<f64> = grams.interior_ids.iter().map(|&i| au[i]).collect();
    let m00 = grams.m_bulk.submatrix(&grams.interior_ids, &grams.interior_ids);
    let x = SpdSolver::new(&m00)?.solve(&r);
    let mut f = vec![0.0; grams.n_bulk()];
    for (p, &i) in grams.interior_ids.iter().enumerate() {
        f[i] = x[p];
    }
    let g = grams.boundary_ids.iter().map(|&i| u.coeffs()[i]).collect();
    Ok((
        FeFunction::from_raw(f, Space::ZeroTrace, 1),
        FeFunction::from_raw(g, Space::Surface, 1),
    ))
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// `g^ℓ(y)` for a surface function `g` and `y` on the exact boundary. The
/// lift moves boundary points radially, so the preimage is the point of a
/// discrete face on the ray through `y`.
pub fn lifted_trace_value(mesh: &Mesh, g: &FeFunction, y: Vector2<f64>) -> Option<f64> {
    let mut ev = [0.0; 3];
    for (f, face) in mesh.boundary_faces().iter().enumerate() {
        let p0 = mesh.node(face[0]);
        let p1 = mesh.node(face[1]);
        let o = cross(p0, p1);
        let eps = 1e-12 * p0.norm();
        if y.dot(&(p0 + p1)) <= 0.0 || cross(p0, y) * o.signum() < -eps || cross(y, p1) * o.signum() < -eps {
            continue;
        }
        let side = |t: f64| cross(mesh.face_point(f, t).0, y) * o.signum();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if side(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        basis::edge_values(mesh.order(), t, &mut ev);
        let c = g.coeffs();
        return Some(
            face.iter()
                .enumerate()
                .map(|(a, &i)| ev[a] * c[mesh.surface_index(i).expect("boundary node")])
                .sum(),
        );
    }
    None
}

/// Fine-mesh surrogate of `u_h^D = E^D(f_h^ℓ, g_h^ℓ)`.
pub fn dirichlet_lift(
    u: &FeFunction,
    grams: &GramSet,
    lm: &LiftMap,
    fine: &Arc<Overkill>,
) -> Result<OverkillSolution, QuasiError> {
    let (f, g) = dirichlet_riesz_data(u, grams)?;
    lift_riesz_data(&f, &g, lm, fine)
}

fn lift_riesz_data(f: &FeFunction, g: &FeFunction, lm: &LiftMap, fine: &Arc<Overkill>) -> Result<OverkillSolution, QuasiError> {
    let fl = lift_function(f, lm)?;
    let missing = Cell::new(None);
    let fv = |y: Vector2<f64>| match fl.eval(y) {
        Ok((v, _)) => v,
        Err(_) => {
            missing.set(Some(y));
            0.0
        }
    };
    let gv = |y: Vector2<f64>| match lifted_trace_value(lm.mesh(), g, y) {
        Some(v) => v,
        None => {
            missing.set(Some(y));
            0.0
        }
    };
    let sol = continuous_surrogate(ProblemKind::Dirichlet, &fv, &gv, fine)?;
    if let Some(y) = missing.get() {
        return Err(QuasiError::Unlocated(y.x, y.y));
    }
    Ok(sol)
}

struct PulledBack<'a> {
    lm: &'a LiftMap,
    w: &'a OverkillSolution,
    // known boundary values of `w`, read on faces instead of the surrogate
    trace: Option<&'a FeFunction>,
    missing: Cell<Option<Vector2<f64>>>,
}

impl MeshField for PulledBack<'_> {
    fn value(&self, elem: usize, xi: [f64; 2], _: Vector2<f64>) -> f64 {
        let y = self.lm.lifted_map(elem, xi).0;
        if let Some(g) = self.trace {
            if on_boundary_edge(self.lm.mesh(), elem, xi) {
                if let Some(v) = lifted_trace_value(self.lm.mesh(), g, y) {
                    return v;
                }
            }
        }
        match self.w.eval(y) {
            Some((v, _)) => v,
            None => {
                self.missing.set(Some(y));
                0.0
            }
        }
    }
}

fn on_boundary_edge(mesh: &Mesh, elem: usize, xi: [f64; 2]) -> bool {
    let Some(le) = mesh.element_boundary_edge(elem) else {
        return false;
    };
    let [a, b] = basis::EDGE_VERTICES[le];
    basis::barycentric(xi)[3 - a - b].abs() < 1e-14
}

fn sz_of_pulled_back(field: PulledBack<'_>) -> Result<FeFunction, QuasiError> {
    let out = scott_zhang(field.lm.mesh(), &field)?;
    if let Some(y) = field.missing.get() {
        return Err(QuasiError::Unlocated(y.x, y.y));
    }
    Ok(out)
}

/// `Ĩ_h^{SZ}(w^{-ℓ})` for a surrogate function `w` on the exact domain.
pub fn scott_zhang_of_lifted(w: &OverkillSolution, lm: &LiftMap) -> Result<FeFunction, QuasiError> {
    sz_of_pulled_back(PulledBack {
        lm,
        w,
        trace: None,
        missing: Cell::new(None),
    })
}

/// `u_h^D` together with `Ĩ_h^{SZ}((u_h^D)^{-ℓ})`. On boundary faces the
/// interpolant reads the Dirichlet data `g_h^ℓ`, which `u_h^D` equals there.
pub fn dirichlet_lift_and_sz(
    u: &FeFunction,
    grams: &GramSet,
    lm: &LiftMap,
    fine: &Arc<Overkill>,
) -> Result<(OverkillSolution, FeFunction), QuasiError> {
    let (f, g) = dirichlet_riesz_data(u, grams)?;
    let ud = lift_riesz_data(&f, &g, lm, fine)?;
    let sz = sz_of_pulled_back(PulledBack {
        lm,
        w: &ud,
        trace: Some(&g),
        missing: Cell::new(None),
    })?;
    Ok((ud, sz))
}

/// The composite interpolant `Ĩ_h^{SZ}((u_h^D)^{-ℓ})`.
pub fn sz_via_dirichlet(
    u: &FeFunction,
    grams: &GramSet,
    lm: &LiftMap,
    fine: &Arc<Overkill>,
) -> Result<FeFunction, QuasiError> {
    Ok(dirichlet_lift_and_sz(u, grams, lm, fine)?.1)
}

struct PointGradient<'a>(&'a dyn Fn(Vector2<f64>) -> (f64, Vector2<f64>));

impl VectorMeshField for PointGradient<'_> {
    fn value(&self, _: usize, _: [f64; 2], x: Vector2<f64>) -> Vector2<f64> {
        (self.0)(x).1
    }
}

/// Ritz map: `a_h(Rw, φ) + m_Γh(γRw, γφ) = a(w, φ^ℓ) + m_Γ(γw, γφ^ℓ)` for all
/// `φ ∈ V_h`. `w` returns value and gradient at points of the exact domain.
pub fn ritz_map(
    w: &dyn Fn(Vector2<f64>) -> (f64, Vector2<f64>),
    lm: &LiftMap,
    grams: &GramSet,
) -> Result<FeFunction, QuasiError> {
    let degree = default_degree(lm.mesh());
    let mut rhs = gradient_load_vector(lm, &PointGradient(w), degree)?;
    let sv = surface_load_vector(lm, &|y| w(y).0, degree)?;
    for (p, &i) in grams.boundary_ids.iter().enumerate() {
        rhs[i] += sv[p];
    }
    let r = SpdSolver::new(&robin_matrix(grams))?.solve(&rhs);
    Ok(FeFunction::from_raw(r, Space::Bulk, 1))
}

fn sampled_w1inf(n_elem: usize, rule_pts: &[[f64; 2]], eval: impl Fn(usize, [f64; 2]) -> (f64, Vector2<f64>)) -> f64 {
    let mut m: f64 = 0.0;
    for e in 0..n_elem {
        for &xi in rule_pts {
            let (v, g) = eval(e, xi);
            m = m.max(v.abs()).max(g.norm());
        }
    }
    m
}

/// The four W^{1,∞} norms entering the maximum, in the order
/// `u_h`, `Ĩ̂_h^{SZ} u_h`, `u_h^D`, `I_h^{SZ} u_h^D`.
pub fn winf_like_parts(
    u: &FeFunction,
    grams: &GramSet,
    lm: &LiftMap,
    fine: &Arc<Overkill>,
) -> Result<[f64; 4], QuasiError> {
    let mesh = lm.mesh();
    let rule = triangle_rule(default_degree(mesh))?;
    let pts: Vec<[f64; 2]> = rule.iter().map(|(p, _)| p).collect();
    let (ud, sz) = dirichlet_lift_and_sz(u, grams, lm, fine)?;
    let szl = lift_function(&sz, lm)?;
    Ok([
        sampled_w1inf(mesh.n_elements(), &pts, |e, xi| u.eval(mesh, e, xi)),
        sampled_w1inf(mesh.n_elements(), &pts, |e, xi| sz.eval(mesh, e, xi)),
        sampled_w1inf(fine.mesh.n_elements(), &pts, |e, xi| ud.eval_at(e, xi)),
        sampled_w1inf(mesh.n_elements(), &pts, |e, xi| szl.eval_at(e, xi)),
    ])
}

pub fn winf_like_norm(u: &FeFunction, grams: &GramSet, lm: &LiftMap, fine: &Arc<Overkill>) -> Result<f64, QuasiError> {
    Ok(winf_like_parts(u, grams, lm, fine)?.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_grams, h1_norm, nodal_interp_bulk, nodal_interp_surface, PointField};
    use crate::lift::lifted_grams;
    use crate::mesh::{build_disk_mesh_rings, build_square_mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fe(mesh: &Mesh, seed: u64) -> FeFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeFunction::bulk(mesh, (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn scott_zhang_is_a_projection() {
        for k in [1, 2] {
            for mesh in [build_disk_mesh_rings(3, k).unwrap(), build_square_mesh(3, k).unwrap()] {
                let u = random_fe(&mesh, 11);
                let s = scott_zhang(&mesh, &crate::fem::FeField { mesh: &mesh, u: &u }).unwrap();
                for (a, b) in s.coeffs().iter().zip(u.coeffs()) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn scott_zhang_of_constant() {
        let mesh = build_disk_mesh_rings(3, 2).unwrap();
        let s = scott_zhang(&mesh, &PointField(|_: Vector2<f64>| 1.0)).unwrap();
        assert!(s.coeffs().iter().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn scott_zhang_uses_face_data_on_boundary() {
        // a field that is 1 on the boundary faces and 0 elsewhere inside
        let mesh = build_square_mesh(3, 1).unwrap();
        let field = PointField(|x: Vector2<f64>| {
            let d = x.x.min(x.y).min(1.0 - x.x).min(1.0 - x.y);
            if d.abs() < 1e-12 {
                1.0
            } else {
                0.0
            }
        });
        let s = scott_zhang(&mesh, &field).unwrap();
        for i in 0..mesh.n_nodes() {
            let want = if mesh.is_boundary_node(i) { 1.0 } else { 0.0 };
            assert!((s.coeffs()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn riesz_data_cases() {
        let mesh = build_square_mesh(4, 1).unwrap();
        let g = assemble_grams(&mesh).unwrap();
        let one = nodal_interp_bulk(&mesh, |_| 1.0);
        let (f, gh) = dirichlet_riesz_data(&one, &g).unwrap();
        assert!(f.coeffs().iter().all(|c| c.abs() < 1e-12));
        assert!(gh.coeffs().iter().all(|c| (c - 1.0).abs() < 1e-15));
        let x = nodal_interp_bulk(&mesh, |p| p.x);
        let (f, _) = dirichlet_riesz_data(&x, &g).unwrap();
        assert!(f.coeffs().iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn riesz_data_residual() {
        let mesh = build_disk_mesh_rings(4, 2).unwrap();
        let g = assemble_grams(&mesh).unwrap();
        let u = random_fe(&mesh, 2);
        let (f, _) = dirichlet_riesz_data(&u, &g).unwrap();
        assert_eq!(f.space(), Space::ZeroTrace);
        let mf = g.m_bulk.matvec(f.coeffs());
        let au = g.a_bulk.matvec(u.coeffs());
        let scale = g.a_bulk.max_abs();
        for &i in &g.interior_ids {
            assert!((mf[i] - au[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn lifted_trace_on_nodes() {
        let mesh = build_disk_mesh_rings(3, 2).unwrap();
        let g = FeFunction::surface(&mesh, (0..mesh.n_boundary_nodes()).map(|i| i as f64).collect()).unwrap();
        for (s, &i) in mesh.boundary_node_ids().iter().enumerate() {
            let v = lifted_trace_value(&mesh, &g, mesh.node(i)).unwrap();
            assert!((v - s as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn lifted_trace_between_nodes() {
        // a linear trace on straight faces, read along rays through each face
        let mesh = build_disk_mesh_rings(3, 1).unwrap();
        let lin = |p: Vector2<f64>| 0.3 + p.x - 2.0 * p.y;
        let g = nodal_interp_surface(&mesh, lin);
        for face in mesh.boundary_faces() {
            let (p0, p1) = (mesh.node(face[0]), mesh.node(face[1]));
            for t in [0.1, 0.37, 0.5, 0.82] {
                let x = p0 + (p1 - p0) * t;
                let y = x / x.norm();
                let v = lifted_trace_value(&mesh, &g, y).unwrap();
                assert!((v - lin(x)).abs() < 1e-12, "{v} vs {}", lin(x));
            }
        }
    }

    #[test]
    fn dirichlet_lift_of_constant() {
        let mesh = build_disk_mesh_rings(2, 1).unwrap();
        let g = assemble_grams(&mesh).unwrap();
        let lm = LiftMap::new(&mesh);
        let fine = Arc::new(Overkill::from_coarse(&mesh, 2).unwrap());
        let one = nodal_interp_bulk(&mesh, |_| 1.0);
        let ud = dirichlet_lift(&one, &g, &lm, &fine).unwrap();
        assert!(ud.coeffs().iter().all(|c| (c - 1.0).abs() < 1e-9));
        let sz = sz_via_dirichlet(&one, &g, &lm, &fine).unwrap();
        assert!(sz.coeffs().iter().all(|c| (c - 1.0).abs() < 1e-9));
        let parts = winf_like_parts(&one.scaled(-2.5), &g, &lm, &fine).unwrap();
        for p in parts {
            assert!((p - 2.5).abs() < 1e-8);
        }
        let zero = FeFunction::zeros(&mesh, Space::Bulk, 1);
        assert_eq!(winf_like_norm(&zero, &g, &lm, &fine).unwrap(), 0.0);
    }

    #[test]
    fn composite_interpolant_preserves_trace() {
        let mesh = build_disk_mesh_rings(2, 2).unwrap();
        let g = assemble_grams(&mesh).unwrap();
        let lm = LiftMap::new(&mesh);
        let fine = Arc::new(Overkill::from_coarse(&mesh, 2).unwrap());
        let u = nodal_interp_bulk(&mesh, |p| p.x * p.x - 0.5 * p.y);
        let sz = sz_via_dirichlet(&u, &g, &lm, &fine).unwrap();
        let scale = crate::linalg::norm_inf(u.coeffs());
        for &i in mesh.boundary_node_ids() {
            assert!((sz.coeffs()[i] - u.coeffs()[i]).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn ritz_of_member_on_square() {
        let mesh = build_square_mesh(3, 2).unwrap();
        let g = assemble_grams(&mesh).unwrap();
        let lm = LiftMap::new(&mesh);
        let u = random_fe(&mesh, 8);
        let w = |y: Vector2<f64>| {
            let (e, xi) = lm.locate_discrete(y).unwrap();
            u.eval(&mesh, e, xi)
        };
        let r = ritz_map(&w, &lm, &g).unwrap();
        for (a, b) in r.coeffs().iter().zip(u.coeffs()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(robin_matrix(&g).symmetry_defect() < 1e-13);
    }

    #[test]
    fn ritz_of_one_converges() {
        let mut err = Vec::new();
        let mut hs = Vec::new();
        for n in [2, 4, 8] {
            let mesh = build_disk_mesh_rings(n, 1).unwrap();
            let g = assemble_grams(&mesh).unwrap();
            let lm = LiftMap::new(&mesh);
            let r = ritz_map(&|_| (1.0, Vector2::zeros()), &lm, &g).unwrap();
            let d = r.axpy(-1.0, &nodal_interp_bulk(&mesh, |_| 1.0));
            err.push(h1_norm(&g, &d));
            hs.push(mesh.h());
        }
        let slope = (err[2] / err[1]).ln() / (hs[2] / hs[1]).ln();
        assert!(slope >= 0.9, "slope {slope}");
        let _ = lifted_grams;
    }
}
