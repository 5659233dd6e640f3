//! Interpolation experiments: nodal rates and the Scott–Zhang family.

use nalgebra::Vector2;
use rand_chacha::ChaCha8Rng;

use crate::fem::{default_degree, h1_norm, nodal_interp_bulk, trace, ElementMap, FeField, FeFunction, Space};
use crate::lift::LiftMap;
use crate::norms::{hhat_threehalf_norm, lanczos_form, DofSet, Variant};
use crate::quadrature::triangle_rule;
use crate::quasi::{dirichlet_lift_and_sz, dirichlet_riesz_data, scott_zhang, sz_via_dirichlet};

use super::levels::{eigen_level, rate_level};
use super::panel::{random_bulk, random_zero_trace, Wave};
use super::{Config, HarnessError, RateTable, TableBuilder};

/// `v ∘ Λ_h` at the nodes of the mesh.
pub(crate) fn interp_of_lifted(lm: &LiftMap, v: impl Fn(Vector2<f64>) -> f64) -> Result<FeFunction, HarnessError> {
    let mesh = lm.mesh();
    let mut c = Vec::with_capacity(mesh.n_nodes());
    for &x in mesh.nodes() {
        c.push(v(lm.lambda_lift(x)?));
    }
    Ok(FeFunction::from_raw(c, Space::Bulk, 1))
}

/// L² and H¹-seminorm errors `v - u^ℓ` on the exact domain.
pub(crate) fn lifted_errors(
    lm: &LiftMap,
    u: &FeFunction,
    v: impl Fn(Vector2<f64>) -> (f64, Vector2<f64>),
) -> Result<(f64, f64), HarnessError> {
    let mesh = lm.mesh();
    let rule = triangle_rule(default_degree(mesh) + 4)?;
    let (mut l2, mut h1) = (0.0, 0.0);
    for e in 0..mesh.n_elements() {
        for (xi, w) in rule.iter() {
            let (y, dg) = lm.map(e, xi);
            let (uv, ug) = u.eval_reference(mesh, e, xi, 0);
            let g = dg.try_inverse().expect("invertible lift").transpose() * ug;
            let (vv, vg) = v(y);
            let jw = w * dg.determinant().abs();
            l2 += jw * (vv - uv).powi(2);
            h1 += jw * (vg - g).norm_squared();
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

fn sin_cos(y: Vector2<f64>) -> (f64, Vector2<f64>) {
    let (sx, cx) = y.x.sin_cos();
    let (sy, cy) = y.y.sin_cos();
    (sx * cy, Vector2::new(cx * cy, -sx * sy))
}

pub(crate) fn interp_rates(config: &Config, _rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let k = config.order as f64;
    let mut t = TableBuilder::new("interp_rates", config, &["h", "l2_error", "h1_error"]);
    for j in 0..config.levels {
        let level = rate_level(config.order, j)?;
        let u = interp_of_lifted(&level.lm, |y| sin_cos(y).0)?;
        let (l2, h1) = lifted_errors(&level.lm, &u, sin_cos)?;
        t.row(vec![level.h(), l2, h1]);
    }
    t.slope("l2_error", k + 1.0, 0.25)?;
    t.slope("h1_error", k, 0.25)?;
    Ok(t.finish())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn sz_projection(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new(
        "sz_projection",
        config,
        &["h", "idempotence", "constants", "trace_locality", "composite_trace"],
    );
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let mut idem: f64 = 0.0;
        let mut locality: f64 = 0.0;
        let mut composite: f64 = 0.0;
        for _ in 0..3 {
            let u = random_bulk(mesh, rng);
            let p = scott_zhang(mesh, &FeField { mesh, u: &u })?;
            idem = idem.max(max_abs_diff(p.coeffs(), u.coeffs()) / max_abs(u.coeffs()));
            // boundary values see only the trace
            let w = u.axpy(1.0, &random_zero_trace(mesh, rng));
            let q = scott_zhang(mesh, &FeField { mesh, u: &w })?;
            let (tp, tq) = (trace(mesh, &p), trace(mesh, &q));
            locality = locality.max(max_abs_diff(tp.coeffs(), tq.coeffs()) / max_abs(tp.coeffs()));
        }
        let one = nodal_interp_bulk(mesh, |_| 1.0);
        let c = scott_zhang(mesh, &FeField { mesh, u: &one })?;
        let constants = max_abs_diff(c.coeffs(), one.coeffs());
        let fine = level.overkill()?;
        for _ in 0..2 {
            let u = random_bulk(mesh, rng);
            let s = sz_via_dirichlet(&u, grams, &level.lm, &fine)?;
            let (tu, ts) = (trace(mesh, &u), trace(mesh, &s));
            composite = composite.max(max_abs_diff(tu.coeffs(), ts.coeffs()) / max_abs(tu.coeffs()));
        }
        t.row(vec![level.h(), idem, constants, locality, composite]);
    }
    t.column_at_most("idempotence", 1e-10);
    t.column_at_most("constants", 1e-10);
    t.column_at_most("trace_locality", 1e-12);
    t.column_at_most("composite_trace", 1e-8);
    Ok(t.finish())
}

/// H^{3/2} norm on the exact domain of a fine-mesh function, by Lanczos
/// quadrature of the lifted pencil.
pub(crate) fn fine_threehalf_norm(fine: &crate::solvers::Overkill, u: &[f64]) -> f64 {
    let g = &fine.grams;
    lanczos_form(&g.h1_bulk(), &g.m_bulk, fine.mass_solver(), u, |l| l.powf(1.5), 80)
        .max(0.0)
        .sqrt()
}

pub(crate) fn sz_error(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("sz_error", config, &["h", "ratio_data", "ratio_hhat", "lift_threehalf"]);
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let h = level.h();
        let interior = level.basis(DofSet::Interior)?;
        let fine = level.overkill()?;
        let mut panel: Vec<FeFunction> = (0..2).map(|_| random_bulk(mesh, rng)).collect();
        let w = Wave::fixed(2);
        panel.push(nodal_interp_bulk(mesh, |x| w.value(x)));
        let (mut ra, mut rb, mut rc) = (0.0f64, 0.0f64, 0.0f64);
        for u in &panel {
            let (ud, s) = dirichlet_lift_and_sz(u, grams, &level.lm, &fine)?;
            let err = h1_norm(grams, &u.axpy(-1.0, &s));
            let (f, g) = dirichlet_riesz_data(u, grams)?;
            let data = crate::norms::dual_neg_half_norm(&f, Variant::ZeroTrace, &interior, grams)?
                + grams.h1_surf().quadratic(g.coeffs()).max(0.0).sqrt();
            let hhat = hhat_threehalf_norm(u, Variant::ZeroTrace, &interior, grams)?;
            ra = ra.max(err / (h.sqrt() * data));
            rb = rb.max(err / (h.sqrt() * hhat));
            rc = rc.max(fine_threehalf_norm(&fine, ud.coeffs()) / hhat);
        }
        t.row(vec![h, ra, rb, rc]);
    }
    t.bounded_ratio("ratio_data");
    t.bounded_ratio("ratio_hhat");
    t.bounded_ratio("lift_threehalf");
    Ok(t.finish())
}

/// Fixed bound for the stability ratios.
const STABILITY_BOUND: f64 = 10.0;

pub(crate) fn h1_stability(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("h1_stability", config, &["h", "lift_ratio", "composite_ratio", "lifted_composite_ratio"]);
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let fine = level.overkill()?;
        let lifted = level.lifted()?;
        let mut panel: Vec<FeFunction> = (0..3).map(|_| random_bulk(mesh, rng)).collect();
        let w = Wave::fixed(0);
        panel.push(nodal_interp_bulk(mesh, |x| w.value(x)));
        let (mut ra, mut rb, mut rc) = (0.0f64, 0.0f64, 0.0f64);
        for u in &panel {
            let n = h1_norm(grams, u);
            let (ud, s) = dirichlet_lift_and_sz(u, grams, &level.lm, &fine)?;
            ra = ra.max(ud.h1_norm() / n);
            rb = rb.max(h1_norm(grams, &s) / n);
            // the same interpolant read on the exact domain
            rc = rc.max(h1_norm(&lifted, &s) / n);
        }
        t.row(vec![level.h(), ra, rb, rc]);
    }
    t.column_at_most("lift_ratio", STABILITY_BOUND);
    t.column_at_most("composite_ratio", STABILITY_BOUND);
    t.column_at_most("lifted_composite_ratio", STABILITY_BOUND);
    Ok(t.finish())
}
