//! Regularity of the discrete boundary value problems and the smallness
//! criterion.

use rand_chacha::ChaCha8Rng;

use crate::fem::{h1_norm, nodal_interp_bulk, nodal_interp_surface, FeFunction, Space};
use crate::norms::{boundary_sobolev_norm, dual_neg_half_norm, hhat_threehalf_norm, DofSet, Variant};
use crate::quasi::winf_like_norm;
use crate::solvers::{solve_dirichlet_fe, solve_robin_fe};

use super::levels::{eigen_level, Level};
use super::panel::{random_bulk, random_surface, Wave};
use super::{Config, HarnessError, RateTable, TableBuilder};

/// Smooth and rough bulk and boundary data, paired in all four ways.
fn data_panel(level: &Level, rng: &mut ChaCha8Rng) -> Vec<(FeFunction, FeFunction)> {
    let mesh = &level.mesh;
    let (wf, wg) = (Wave::fixed(0), Wave::fixed(1));
    let fs = nodal_interp_bulk(mesh, |x| wf.value(x));
    let gs = nodal_interp_surface(mesh, |x| wg.value(x));
    let fr = random_bulk(mesh, rng);
    let gr = random_surface(mesh, rng);
    let zero_g = FeFunction::zeros(mesh, Space::Surface, 1);
    let zero_f = FeFunction::zeros(mesh, Space::Bulk, 1);
    vec![
        (fs.clone(), zero_g),
        (zero_f, gs.clone()),
        (fr.clone(), gs),
        (fs, gr.clone()),
        (fr, gr),
    ]
}

pub(crate) fn dirichlet_regularity(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("dirichlet_regularity", config, &["h", "ratio"]);
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let grams = &level.grams;
        let sb = level.basis(DofSet::Interior)?;
        let mut r: f64 = 0.0;
        for (f, g) in data_panel(&level, rng) {
            let u = solve_dirichlet_fe(grams, &f, &g)?;
            let data = dual_neg_half_norm(&f, Variant::ZeroTrace, &sb, grams)? + boundary_sobolev_norm(&g, 1.0, grams)?;
            r = r.max(hhat_threehalf_norm(&u, Variant::ZeroTrace, &sb, grams)? / data);
        }
        t.row(vec![level.h(), r]);
    }
    t.bounded_ratio("ratio");
    Ok(t.finish())
}

pub(crate) fn robin_regularity(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("robin_regularity", config, &["h", "ratio"]);
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let grams = &level.grams;
        let interior = level.basis(DofSet::Interior)?;
        let all = level.basis(DofSet::All)?;
        let mut r: f64 = 0.0;
        for (f, g) in data_panel(&level, rng) {
            let u = solve_robin_fe(grams, &f, &g)?;
            let data = dual_neg_half_norm(&f, Variant::Full, &all, grams)? + boundary_sobolev_norm(&g, 0.0, grams)?;
            r = r.max(hhat_threehalf_norm(&u, Variant::ZeroTrace, &interior, grams)? / data);
        }
        t.row(vec![level.h(), r]);
    }
    t.bounded_ratio("ratio");
    Ok(t.finish())
}

/// Margin `ε` above the critical power of `h`.
const SMALLNESS_MARGIN: f64 = 0.1;

pub(crate) fn smallness(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let kappa = config.kappa;
    let mut t = TableBuilder::new("smallness", config, &["h", "h1_norm", "winf_like", "bound", "holds"]);
    let mut holds = Vec::new();
    for j in 0..config.levels {
        let level = eigen_level(config.order, j)?;
        let (mesh, grams) = (&level.mesh, &level.grams);
        let h = level.h();
        let target = h.powf(kappa + 1.5 + SMALLNESS_MARGIN);
        let fine = level.overkill()?;
        let w = Wave::fixed(3);
        let panel = [random_bulk(mesh, rng), nodal_interp_bulk(mesh, |x| w.value(x))];
        let mut worst: f64 = 0.0;
        for u in &panel {
            let u = u.scaled(target / h1_norm(grams, u));
            worst = worst.max(winf_like_norm(&u, grams, &level.lm, &fine)?);
        }
        let bound = h.powf(kappa);
        let ok = worst <= bound;
        holds.push(ok);
        t.row(vec![h, target, worst, bound, if ok { 1.0 } else { 0.0 }]);
    }
    // once the bound holds it keeps holding under refinement
    let first = holds.iter().position(|&b| b).unwrap_or(holds.len());
    let suffix = first < holds.len() && holds[first..].iter().all(|&b| b);
    t.check(
        "bound holds on a tail of levels",
        (holds.len() - first) as f64,
        "tail contains the finest level",
        suffix,
    );
    Ok(t.finish())
}
