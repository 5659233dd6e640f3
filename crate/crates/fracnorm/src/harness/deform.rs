//! Domain deformation estimates, discrete and continuous.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand_chacha::ChaCha8Rng;

use crate::fem::{default_degree, nodal_interp_bulk, nodal_interp_vector, ElementMap, FeFunction};
use crate::linalg::SpdSolver;
use crate::multilinear::deformation_tensor;
use crate::norms::{h_s_norm, hhat_threehalf_norm, lanczos_form, DofSet, Variant};
use crate::quadrature::triangle_rule;
use crate::solvers::{deformed_dirichlet_energy, DeformationMethod};

use super::interp::interp_of_lifted;
use super::levels::{eigen_level, rate_level};
use super::panel::{random_vector, Wave};
use super::{Config, HarnessError, RateTable, TableBuilder};

/// Random deformations compared between the two energy routes per level.
const CROSS_SAMPLES: usize = 50;

/// Gradient size of the random displacements in the two-route comparison.
const CROSS_GRADIENT: f64 = 0.1;

/// Prefactor of the smooth displacement, keeping `‖e_x‖_{W^{1,∞}}` well
/// under 1/4 on every level.
const AMPLITUDE: f64 = 0.05;

/// `max ‖∇e_x‖_F` over quadrature points.
pub(crate) fn gradient_sup(mesh: &crate::mesh::Mesh, e_x: &FeFunction) -> Result<f64, HarnessError> {
    let rule = triangle_rule(default_degree(mesh))?;
    let mut m: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        for (xi, _) in rule.iter() {
            m = m.max(e_x.eval_jacobian(mesh, e, xi).1.norm());
        }
    }
    Ok(m)
}

fn smooth_field(x: Vector2<f64>) -> Vector2<f64> {
    let (a, b) = (Wave::fixed(2), Wave::fixed(3));
    Vector2::new(a.value(x), b.value(x))
}

pub(crate) fn deformation_discrete(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let k = config.order as f64;
    let mut t = TableBuilder::new(
        "deformation_discrete",
        config,
        &["h", "ratio", "ratio_fixed_power", "cross_method"],
    );
    let (ww, wz) = (Wave::fixed(0), Wave::fixed(1));
    let power = k - 0.5 + config.kappa;
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let h = level.h();
        let interior = level.basis(DofSet::Interior)?;
        let all = level.basis(DofSet::All)?;
        let w = nodal_interp_bulk(mesh, |x| ww.value(x));
        let z = nodal_interp_bulk(mesh, |x| wz.value(x));
        let base = deformed_dirichlet_energy(mesh, &FeFunction::zeros(mesh, w.space(), 2), &w, &z, DeformationMethod::Pullback)?;
        let zn = h_s_norm(&z, 0.5, &all)?;
        let v = nodal_interp_vector(mesh, smooth_field);
        let ratio_for = |amp: f64| -> Result<f64, HarnessError> {
            let e_x = v.scaled(amp);
            let d = deformed_dirichlet_energy(mesh, &e_x, &w, &z, DeformationMethod::Pullback)?;
            let mut en = 0.0;
            for c in 0..2 {
                en += hhat_threehalf_norm(&e_x.component(c), Variant::ZeroTrace, &interior, grams)?;
            }
            Ok((d - base).abs() / ((en + h.powf(power)) * zn))
        };
        let ratio = ratio_for(AMPLITUDE * h.powf(power))?;
        let fixed = ratio_for(AMPLITUDE * h.powf(1.6))?;
        let mut cross: f64 = 0.0;
        for _ in 0..CROSS_SAMPLES {
            let r = random_vector(mesh, rng);
            let e_x = r.scaled(CROSS_GRADIENT / gradient_sup(mesh, &r)?);
            let p = deformed_dirichlet_energy(mesh, &e_x, &w, &z, DeformationMethod::Pullback)?;
            let r = deformed_dirichlet_energy(mesh, &e_x, &w, &z, DeformationMethod::Remesh)?;
            cross = cross.max((p - r).abs() / r.abs());
        }
        t.row(vec![h, ratio, fixed, cross]);
    }
    t.bounded_ratio("ratio");
    let fixed = t.column("ratio_fixed_power");
    let growth = fixed.iter().fold(0.0f64, |a, &x| a.max(x)) / fixed[0];
    t.at_most("growth ratio_fixed_power", growth, 2.0);
    let tol = if config.order == 1 { 1e-8 } else { 1e-6 };
    t.column_at_most("cross_method", tol);
    Ok(t.finish())
}

fn to_dmatrix(a: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]])
}

pub(crate) fn deformation_continuous(config: &Config, _rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new(
        "deformation_continuous",
        config,
        &["h", "epsilon", "energy_change", "ratio", "w1inf_displacement"],
    );
    let (ww, wz) = (Wave::fixed(0), Wave::fixed(1));
    let (va, vb) = (Wave::fixed(2), Wave::fixed(3));
    for j in 0..config.levels {
        let level = rate_level(config.order, j)?;
        let lm = &level.lm;
        let mesh = &level.mesh;
        let eps = 0.05 * 0.5f64.powi(j as i32);
        let rule = triangle_rule(default_degree(mesh) + 4)?;
        let mut change = 0.0;
        let mut w1inf: f64 = 0.0;
        for e in 0..mesh.n_elements() {
            for (xi, wq) in rule.iter() {
                let (y, dg) = lm.map(e, xi);
                let (ga, gb) = (va.grad(y), vb.grad(y));
                // ∂Φ_i/∂y_j - δ_ij
                let jac = Matrix2::new(ga.x, ga.y, gb.x, gb.y) * eps;
                w1inf = w1inf.max(eps * va.value(y).abs().max(vb.value(y).abs())).max(jac.norm());
                let d = deformation_tensor(&to_dmatrix(&jac.transpose()))?;
                let d = Matrix2::new(d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]);
                change += wq * dg.determinant().abs() * (d * ww.grad(y)).dot(&wz.grad(y));
            }
        }
        let lifted = level.lifted()?;
        let k = lifted.h1_bulk();
        let solver = SpdSolver::new(&lifted.m_bulk)?;
        let norm = |u: &FeFunction, s: f64| {
            lanczos_form(&k, &lifted.m_bulk, &solver, u.coeffs(), |l| l.powf(s), 80)
                .max(0.0)
                .sqrt()
        };
        let pa = interp_of_lifted(lm, |y| va.value(y))?;
        let pb = interp_of_lifted(lm, |y| vb.value(y))?;
        let disp = eps * (norm(&pa, 1.5).powi(2) + norm(&pb, 1.5).powi(2)).sqrt();
        let zn = norm(&interp_of_lifted(lm, |y| wz.value(y))?, 0.5);
        let ratio = change.abs() / (ww.w2inf() * disp * zn);
        t.row(vec![level.h(), eps, change, ratio, w1inf]);
    }
    t.bounded_ratio("ratio");
    t.column_at_most("w1inf_displacement", 0.25);
    Ok(t.finish())
}

