//! Ratio studies of the discrete fractional and dual norms.

use rand_chacha::ChaCha8Rng;

use crate::fem::{default_degree, h1_norm, l2_norm, nodal_interp_bulk, nodal_interp_vector, ElementMap, FeFunction};
use crate::lift::LiftMap;
use crate::linalg::dot;
use crate::norms::{dual_neg_half_norm, h_s_norm, hhat_threehalf_norm, mass_load, vec_dual_half_norm, DofSet, Variant};
use crate::quadrature::triangle_rule;

use super::levels::eigen_level;
use super::panel::{random_bulk, random_vector, random_zero_trace, FeVector, Wave};
use super::{Config, HarnessError, RateTable, TableBuilder};

pub(crate) fn dual_inverse(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new(
        "dual_inverse",
        config,
        &["h", "ratio_zero_trace", "ratio_full", "monotonicity_excess", "sup_residual"],
    );
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let h = level.h();
        let interior = level.basis(DofSet::Interior)?;
        let all = level.basis(DofSet::All)?;
        let mut ra: f64 = 0.0;
        let mut rb: f64 = 0.0;
        let mut excess: f64 = 0.0;
        let mut residual: f64 = 0.0;
        let w = Wave::fixed(j);
        let smooth = nodal_interp_bulk(mesh, |x| w.value(x));
        let mut panel: Vec<FeFunction> = (0..3).map(|_| random_zero_trace(mesh, rng)).collect();
        panel.push(smooth.zero_trace_part(mesh));
        for f in &panel {
            let d0 = dual_neg_half_norm(f, Variant::ZeroTrace, &interior, grams)?;
            let d1 = dual_neg_half_norm(&f.as_bulk(), Variant::Full, &all, grams)?;
            ra = ra.max(h.sqrt() * l2_norm(grams, f) / d0);
            excess = excess.max((d0 - d1) / d1);
        }
        let mut full: Vec<FeFunction> = (0..3).map(|_| random_bulk(mesh, rng)).collect();
        full.push(smooth);
        for f in &full {
            let d1 = dual_neg_half_norm(f, Variant::Full, &all, grams)?;
            rb = rb.max(h.sqrt() * l2_norm(grams, f) / d1);
        }
        // the maximiser realises the supremum
        for (f, sb) in panel.iter().map(|f| (f, &interior)).chain(full.iter().map(|f| (f, &all))) {
            let b = mass_load(f, sb, grams);
            let value = sb.dual_half(&b);
            let phi = sb.dual_half_maximizer(&b);
            let quotient = dot(&grams.m_bulk.matvec(f.coeffs()), &phi) / sb.norm_s(&phi, 0.5)?;
            residual = residual.max((quotient - value).abs() / value);
        }
        t.row(vec![h, ra, rb, excess.max(0.0), residual]);
    }
    t.bounded_ratio("ratio_zero_trace");
    t.bounded_ratio("ratio_full");
    t.column_at_most("monotonicity_excess", 1e-12);
    t.column_at_most("sup_residual", 1e-8);
    Ok(t.finish())
}

pub(crate) fn inverse_estimate(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("inverse_estimate", config, &["h", "ratio"]);
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let h = level.h();
        let sb = level.basis(DofSet::Interior)?;
        let mut panel: Vec<FeFunction> = (0..3).map(|_| random_bulk(mesh, rng)).collect();
        let w = Wave::fixed(1);
        panel.push(nodal_interp_bulk(mesh, |x| w.value(x)));
        let mut r: f64 = 0.0;
        for u in &panel {
            r = r.max(h.sqrt() * hhat_threehalf_norm(u, Variant::ZeroTrace, &sb, grams)? / h1_norm(grams, u));
        }
        t.row(vec![h, r]);
    }
    t.bounded_ratio("ratio");
    Ok(t.finish())
}

pub(crate) fn norm_equivalence(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("norm_equivalence", config, &["h", "ratio_min", "ratio_max"]);
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let interior = level.basis(DofSet::Interior)?;
        let all = level.basis(DofSet::All)?;
        let mut panel: Vec<FeFunction> = (0..3).map(|_| random_bulk(mesh, rng)).collect();
        panel.push(random_zero_trace(mesh, rng).as_bulk());
        for i in 0..2 {
            let w = Wave::fixed(i);
            panel.push(nodal_interp_bulk(mesh, |x| w.value(x)));
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for u in &panel {
            let r = hhat_threehalf_norm(u, Variant::Full, &all, grams)? / hhat_threehalf_norm(u, Variant::ZeroTrace, &interior, grams)?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        t.row(vec![level.h(), lo, hi]);
    }
    t.bounded_ratio("ratio_min");
    t.bounded_ratio("ratio_max");
    Ok(t.finish())
}

/// `Σ_{j ≤ m} ∫_Ω |D^j v|²` by quadrature on the lifted mesh.
pub(crate) fn exact_sobolev_sq(lm: &LiftMap, w: &Wave, m: usize) -> Result<f64, HarnessError> {
    let mesh = lm.mesh();
    let rule = triangle_rule(default_degree(mesh) + 4)?;
    let mut s = 0.0;
    for e in 0..mesh.n_elements() {
        for (xi, wq) in rule.iter() {
            let (y, dg) = lm.map(e, xi);
            let jw = wq * dg.determinant().abs();
            for d in 0..=m {
                s += jw * w.derivative_norm(d, y).powi(2);
            }
        }
    }
    Ok(s)
}

pub(crate) fn interpolant_membership(config: &Config, _rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let k = config.order;
    let mut t = TableBuilder::new("interpolant_membership", config, &["h", "ratio", "hhat_norm"]);
    let waves: Vec<Wave> = (0..3).map(Wave::fixed).collect();
    for j in 0..config.levels {
        let level = eigen_level(k, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let h = level.h();
        let sb = level.basis(DofSet::Interior)?;
        let mut r: f64 = 0.0;
        let mut norm: f64 = 0.0;
        for w in &waves {
            let v = nodal_interp_bulk(mesh, |x| w.value(x));
            let n = hhat_threehalf_norm(&v, Variant::ZeroTrace, &sb, grams)?;
            let hk1 = exact_sobolev_sq(&level.lm, w, k + 1)?.sqrt();
            // H^{3/2} through the interpolation inequality between H¹ and H²
            let h32 = (exact_sobolev_sq(&level.lm, w, 1)?.sqrt() * exact_sobolev_sq(&level.lm, w, 2)?.sqrt()).sqrt();
            let rhs = h.powf(k as f64 - 0.5) * hk1 + h32;
            r = r.max(n / rhs);
            norm = norm.max(n);
        }
        t.row(vec![h, r, norm]);
    }
    t.bounded_ratio("ratio");
    Ok(t.finish())
}

pub(crate) fn duality_sampled(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("duality_sampled", config, &["h", "ratio_zero_trace", "ratio_full"]);
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let mesh = &level.mesh;
        let interior = level.basis(DofSet::Interior)?;
        let all = level.basis(DofSet::All)?;
        let mut panel: Vec<FeFunction> = (0..3)
            .map(|i| {
                let w = Wave::fixed(i);
                nodal_interp_vector(mesh, |x| w.grad(x))
            })
            .collect();
        panel.push(random_vector(mesh, rng));
        let (mut r0, mut r1) = (0.0f64, 0.0f64);
        for z in &panel {
            let field = FeVector { mesh, z };
            let zn = (h_s_norm(&z.component(0), 0.5, &all)?.powi(2) + h_s_norm(&z.component(1), 0.5, &all)?.powi(2)).sqrt();
            r0 = r0.max(vec_dual_half_norm(&field, Variant::ZeroTrace, &interior, mesh)? / zn);
            r1 = r1.max(vec_dual_half_norm(&field, Variant::Full, &all, mesh)? / zn);
        }
        t.row(vec![level.h(), r0, r1]);
    }
    t.bounded_ratio("ratio_zero_trace");
    t.bounded_ratio("ratio_full");
    Ok(t.finish())
}
