//! Consistency of the lift onto the exact domain.

use nalgebra::{DMatrix, Matrix2};
use rand_chacha::ChaCha8Rng;

use crate::fem::{default_degree, nodal_interp_bulk, nodal_interp_vector, FeFunction};
use crate::lift::{layer_differences, sharp_constant};
use crate::mesh::Mesh;
use crate::multilinear::MultilinearForm;
use crate::quadrature::triangle_rule;

use super::algebra::random_matrix;
use super::levels::rate_level;
use super::panel::Wave;
use super::{Config, HarnessError, RateTable, TableBuilder};

pub(crate) fn lift_consistency(config: &Config, _rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let k = config.order as f64;
    let mut t = TableBuilder::new(
        "lift_consistency",
        config,
        &["h", "jacobian_defect", "bulk_mass", "bulk_stiffness", "surface_mass", "surface_stiffness"],
    );
    for j in 0..config.levels {
        let level = rate_level(config.order, j)?;
        let degree = default_degree(&level.mesh);
        let grams = &level.grams;
        let lifted = level.lifted()?;
        let defect = level.lm.jacobian_defect(degree);
        let (dm, da) = layer_differences(&level.lm, degree)?;
        let layer = level.lm.layer_nodes();
        let cm = sharp_constant(&dm, &grams.m_bulk, &layer, false)?;
        let ca = sharp_constant(&da, &grams.a_bulk, &layer, true)?;
        let all: Vec<usize> = (0..grams.n_surface()).collect();
        let dsm = grams.m_surf.add_scaled(&lifted.m_surf, -1.0);
        let dsa = grams.a_surf.add_scaled(&lifted.a_surf, -1.0);
        let csm = sharp_constant(&dsm, &grams.m_surf, &all, false)?;
        let csa = sharp_constant(&dsa, &grams.a_surf, &all, true)?;
        t.row(vec![level.h(), defect, cm, ca, csm, csa]);
    }
    t.slope("jacobian_defect", k, 0.3)?;
    t.slope("bulk_mass", k, 0.3)?;
    t.slope("bulk_stiffness", k, 0.3)?;
    t.slope("surface_mass", k + 1.0, 0.3)?;
    t.slope("surface_stiffness", k + 1.0, 0.3)?;
    Ok(t.finish())
}

fn reference_jacobian(u: &FeFunction, mesh: &Mesh, e: usize, xi: [f64; 2]) -> Matrix2<f64> {
    let g0 = u.eval_reference(mesh, e, xi, 0).1;
    let g1 = u.eval_reference(mesh, e, xi, 1).1;
    Matrix2::new(g0.x, g0.y, g1.x, g1.y)
}

fn dm2(a: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]])
}

pub(crate) fn lift_multilinear(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let k = config.order as f64;
    let mut t = TableBuilder::new("lift_multilinear", config, &["h", "residual"]);
    let slots = vec![(2, 2), (2, 2), (2, 1)];
    let n: usize = 4 * 4 * 2;
    let c = random_matrix(rng, n, 1, 1.0);
    let form = MultilinearForm::new(slots, (1, 1), c.iter().copied().collect())?;
    let waves: Vec<Wave> = (0..5).map(|_| Wave::random(rng, 2.0)).collect();
    for j in 0..config.levels {
        let level = rate_level(config.order, j)?;
        let (mesh, lm) = (&level.mesh, &level.lm);
        let u1 = nodal_interp_vector(mesh, |x| nalgebra::Vector2::new(waves[0].value(x), waves[1].value(x)));
        let u2 = nodal_interp_vector(mesh, |x| nalgebra::Vector2::new(waves[2].value(x), waves[3].value(x)));
        let u3 = nodal_interp_bulk(mesh, |x| waves[4].value(x));
        let rule = triangle_rule(default_degree(mesh) + 2)?;
        let (mut exact, mut discrete) = (0.0, 0.0);
        let mut sup = [0.0f64; 3];
        for e in 0..mesh.n_elements() {
            for (xi, w) in rule.iter() {
                let (_, df) = mesh.map_point(e, xi);
                let (_, dg) = lm.lifted_map(e, xi);
                let dfi = df.try_inverse().expect("invertible element map");
                let dgi = dg.try_inverse().expect("invertible lift");
                let (j1, j2) = (reference_jacobian(&u1, mesh, e, xi), reference_jacobian(&u2, mesh, e, xi));
                let g3 = u3.eval_reference(mesh, e, xi, 0).1;
                let (a1, a2, a3) = (j1 * dfi, j2 * dfi, dfi.transpose() * g3);
                let (b1, b2, b3) = (j1 * dgi, j2 * dgi, dgi.transpose() * g3);
                sup[0] = sup[0].max(a1.norm());
                sup[1] = sup[1].max(a2.norm());
                sup[2] = sup[2].max(a3.norm());
                let a3 = DMatrix::from_column_slice(2, 1, a3.as_slice());
                let b3 = DMatrix::from_column_slice(2, 1, b3.as_slice());
                discrete += w * df.determinant() * form.eval_scalar(&[&dm2(&a1), &dm2(&a2), &a3])?;
                exact += w * dg.determinant() * form.eval_scalar(&[&dm2(&b1), &dm2(&b2), &b3])?;
            }
        }
        let scale = form.norm() * sup.iter().product::<f64>();
        t.row(vec![level.h(), (exact - discrete).abs() / scale]);
    }
    t.slope_at_least("residual", k - 0.3)?;
    Ok(t.finish())
}
