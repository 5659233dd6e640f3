//! Estimates checked with sampled norms: the Gagliardo oracle on tiny
//! square meshes and pointwise quadrature bounds.

use nalgebra::{DMatrix, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fem::{default_degree, nodal_interp_bulk, FeField, FeFunction, MeshField};
use crate::gagliardo::{gagliardo_half_oracle, sampled_sup};
use crate::mesh::Mesh;
use crate::multilinear::MultilinearForm;
use crate::norms::{h_s_norm, hhat_threehalf_norm, vec_dual_half_norm, DofSet, Variant};
use crate::quadrature::triangle_rule;

use super::levels::{eigen_level, rate_level, square_level};
use super::panel::{random_bulk, Wave};
use super::{Config, HarnessError, RateTable, TableBuilder};

fn random_form(rng: &mut ChaCha8Rng, slots: Vec<(usize, usize)>, out: (usize, usize)) -> MultilinearForm {
    let n: usize = slots.iter().map(|(a, b)| a * b).product::<usize>() * out.0 * out.1;
    MultilinearForm::new(slots, out, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("consistent length")
}

struct Pointwise<F>(F);

impl<F: Fn(usize, [f64; 2]) -> f64> MeshField for Pointwise<F> {
    fn value(&self, e: usize, xi: [f64; 2], _: Vector2<f64>) -> f64 {
        (self.0)(e, xi)
    }
}

fn value(mesh: &Mesh, u: &FeFunction, e: usize, xi: [f64; 2]) -> f64 {
    u.eval_reference(mesh, e, xi, 0).0
}

/// `sqrt(|u|² + ‖u‖²_{L²})` with the oracle seminorm.
fn oracle_h_half(mesh: &Mesh, u: &dyn MeshField) -> Result<f64, HarnessError> {
    let semi = gagliardo_half_oracle(mesh, u)?;
    let l2 = crate::fem::l2_norm_sq(mesh, u, default_degree(mesh))?;
    Ok((semi * semi + l2).sqrt())
}

/// Lattice points of every element: reference coordinates and images.
fn lattice(mesh: &Mesh, n: usize) -> Vec<(usize, [f64; 2], Vector2<f64>)> {
    let mut out = Vec::new();
    for e in 0..mesh.n_elements() {
        for i in 0..=n {
            for j in 0..=(n - i) {
                let xi = [i as f64 / n as f64, j as f64 / n as f64];
                out.push((e, xi, mesh.map_point(e, xi).0));
            }
        }
    }
    out
}

/// `‖v‖_∞ + sup |v(x) − v(y)| / |x − y|^{1/2}` over lattice points.
fn w_half_inf(mesh: &Mesh, v: &FeFunction) -> f64 {
    let pts = lattice(mesh, 3);
    let vals: Vec<f64> = pts.iter().map(|&(e, xi, _)| value(mesh, v, e, xi)).collect();
    let sup = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut hold: f64 = 0.0;
    for i in 0..pts.len() {
        for j in 0..i {
            let r = (pts[i].2 - pts[j].2).norm();
            if r > 1e-12 {
                hold = hold.max((vals[i] - vals[j]).abs() / r.sqrt());
            }
        }
    }
    sup + hold
}

/// Ratios of the oracle H^{1/2} norm to the spectral one on square meshes
/// with `n` and `2n` cells per side, for a panel of smooth interpolants.
#[derive(Debug, Clone, PartialEq)]
pub struct GagliardoPanel {
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
}

impl GagliardoPanel {
    pub fn bracket(v: &[f64]) -> (f64, f64) {
        v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)))
    }

    fn log_width(v: &[f64]) -> f64 {
        let (a, b) = Self::bracket(v);
        (b / a).ln()
    }

    /// Widening of the bracket on refinement, in log units.
    pub fn widening(&self) -> f64 {
        Self::log_width(&self.fine) - Self::log_width(&self.coarse)
    }
}

pub fn gagliardo_spectral_panel(order: usize, n: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<GagliardoPanel, HarnessError> {
    let waves: Vec<Wave> = (0..count).map(|_| Wave::random(rng, 4.0)).collect();
    let mut out = Vec::new();
    for m in [n, 2 * n] {
        let level = square_level(order, m)?;
        let sb = level.basis(DofSet::All)?;
        let mut ratios = Vec::new();
        for w in &waves {
            let u = nodal_interp_bulk(&level.mesh, |x| w.value(x));
            let oracle = oracle_h_half(&level.mesh, &FeField { mesh: &level.mesh, u: &u })?;
            ratios.push(oracle / h_s_norm(&u, 0.5, &sb)?);
        }
        out.push(ratios);
    }
    let fine = out.pop().expect("two meshes");
    let coarse = out.pop().expect("two meshes");
    Ok(GagliardoPanel { coarse, fine })
}

fn leibniz_polynomial(rng: &mut ChaCha8Rng) -> impl Fn(Vector2<f64>) -> f64 {
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    move |x: Vector2<f64>| c[0] + c[1] * x.x + c[2] * x.y + c[3] * x.x * x.x + c[4] * x.x * x.y + c[5] * x.y * x.y
}

pub(crate) fn leibniz_half(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("leibniz_half", config, &["case", "instances", "worst_ratio", "bound"]);
    let level = square_level(config.order, 2)?;
    let mesh = &level.mesh;
    let bound = 2f64.sqrt() * 1.05;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let u = nodal_interp_bulk(mesh, leibniz_polynomial(rng));
        let v = nodal_interp_bulk(mesh, leibniz_polynomial(rng));
        let fu = FeField { mesh, u: &u };
        let fv = FeField { mesh, u: &v };
        let uv = Pointwise(|e, xi| value(mesh, &u, e, xi) * value(mesh, &v, e, xi));
        let lhs = gagliardo_half_oracle(mesh, &uv)?;
        let su = gagliardo_half_oracle(mesh, &fu)?;
        let sv = gagliardo_half_oracle(mesh, &fv)?;
        let rhs = su * sampled_sup(mesh, &fv, 12) + sv * sampled_sup(mesh, &fu, 12);
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    t.row(vec![1.0, 200.0, worst, bound]);
    t.at_most("seminorm of uv over |u| sup v + |v| sup u", worst, bound);

    // the oracle against the spectral norm it stands in for
    let panel = gagliardo_spectral_panel(config.order, 3, 20, rng)?;
    let (lo_c, hi_c) = GagliardoPanel::bracket(&panel.coarse);
    let (lo_f, hi_f) = GagliardoPanel::bracket(&panel.fine);
    t.row(vec![2.0, 20.0, lo_c.min(lo_f), 0.2]);
    t.row(vec![3.0, 20.0, hi_c.max(hi_f), 5.0]);
    t.at_least("oracle/spectral lower bracket", lo_c.min(lo_f), 0.2);
    t.at_most("oracle/spectral upper bracket", hi_c.max(hi_f), 5.0);
    t.row(vec![4.0, 20.0, panel.widening(), 0.05]);
    t.at_most("bracket widening on refinement (log)", panel.widening(), 0.05);
    Ok(t.finish())
}

/// One instance of the product estimate on a square mesh:
/// `T(u_1, u_2; v)` with vector `u_i` and scalar `v`.
fn product_instance(mesh: &Mesh, rng: &mut ChaCha8Rng, rough: bool) -> Result<f64, HarnessError> {
    let form = random_form(rng, vec![(2, 1), (2, 1), (1, 1)], (1, 1));
    let make = |rng: &mut ChaCha8Rng| {
        if rough {
            random_bulk(mesh, rng)
        } else {
            let w = Wave::random(rng, 3.0);
            nodal_interp_bulk(mesh, |x| w.value(x))
        }
    };
    let u: Vec<[FeFunction; 2]> = (0..2).map(|_| [make(rng), make(rng)]).collect();
    let w = Wave::random(rng, 2.0);
    let v = nodal_interp_bulk(mesh, |x| w.value(x));
    let lhs_field = Pointwise(|e, xi| {
        let a: Vec<DMatrix<f64>> = u
            .iter()
            .map(|p| DMatrix::from_column_slice(2, 1, &[value(mesh, &p[0], e, xi), value(mesh, &p[1], e, xi)]))
            .collect();
        let b = DMatrix::from_element(1, 1, value(mesh, &v, e, xi));
        form.eval_scalar(&[&a[0], &a[1], &b]).expect("shapes match")
    });
    let lhs = oracle_h_half(mesh, &lhs_field)?;
    let mut h_half = Vec::new();
    let mut sup = Vec::new();
    for p in &u {
        let a = oracle_h_half(mesh, &FeField { mesh, u: &p[0] })?;
        let b = oracle_h_half(mesh, &FeField { mesh, u: &p[1] })?;
        h_half.push((a * a + b * b).sqrt());
        let s = Pointwise(|e, xi| value(mesh, &p[0], e, xi).hypot(value(mesh, &p[1], e, xi)));
        sup.push(sampled_sup(mesh, &s, 8));
    }
    let rhs = form.norm() * (h_half[0] * sup[1] + h_half[1] * sup[0]) * w_half_inf(mesh, &v);
    Ok(lhs / rhs)
}

pub(crate) fn product_sampled(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let k = config.order;
    let mut t = TableBuilder::new("product_sampled", config, &["h", "h_square", "sampled_ratio", "discrete_ratio", "discrete_ratio_zero_trace"]);
    let form = random_form(rng, vec![(2, 1), (2, 1)], (2, 1));
    let amp = 0.05;
    let waves = [Wave::fixed(0), Wave::fixed(1)];
    let vstar = Wave::fixed(2);
    for j in 0..config.levels {
        let n_sq = [2, 3, 4, 6].get(j).copied().unwrap_or(2 * j);
        let sq = square_level(k, n_sq)?;
        let mut sampled: f64 = 0.0;
        for i in 0..6 {
            sampled = sampled.max(product_instance(&sq.mesh, rng, i % 3 == 2)?);
        }

        // discrete version with one small factor and one interpolant
        let level = eigen_level(k, j)?;
        let mesh = &level.mesh;
        let h = level.h();
        let all = level.basis(DofSet::All)?;
        let interior = level.basis(DofSet::Interior)?;
        let v = nodal_interp_bulk(mesh, |x| vstar.value(x));
        let (mut discrete, mut discrete0) = (0.0f64, 0.0f64);
        let mut panel: Vec<FeFunction> = waves
            .iter()
            .map(|w| nodal_interp_bulk(mesh, |x| amp * w.value(x)))
            .collect();
        let r = random_bulk(mesh, rng);
        let scale = amp * h.powf(1.5 + config.kappa + 0.1) / crate::fem::h1_norm(&level.grams, &r);
        panel.push(r.scaled(scale));
        for u in &panel {
            let field = ProductGradient {
                mesh,
                form: &form,
                u,
                v: &v,
            };
            let lhs = vec_dual_half_norm(&field, Variant::Full, &all, mesh)?;
            let lhs0 = vec_dual_half_norm(&field, Variant::ZeroTrace, &interior, mesh)?;
            let rhs = form.norm()
                * (hhat_threehalf_norm(u, Variant::ZeroTrace, &interior, &level.grams)? + h.powf(k as f64 - 0.5 + config.kappa));
            discrete = discrete.max(lhs / rhs);
            discrete0 = discrete0.max(lhs0 / rhs);
        }
        t.row(vec![h, sq.mesh.h(), sampled, discrete, discrete0]);
    }
    t.column_at_most("sampled_ratio", 10.0);
    t.bounded_ratio("discrete_ratio");
    t.bounded_ratio("discrete_ratio_zero_trace");
    Ok(t.finish())
}

struct ProductGradient<'a> {
    mesh: &'a Mesh,
    form: &'a MultilinearForm,
    u: &'a FeFunction,
    v: &'a FeFunction,
}

impl crate::fem::VectorMeshField for ProductGradient<'_> {
    fn value(&self, e: usize, xi: [f64; 2], _: Vector2<f64>) -> Vector2<f64> {
        let gu = self.u.eval(self.mesh, e, xi).1;
        let gv = self.v.eval(self.mesh, e, xi).1;
        let a = DMatrix::from_column_slice(2, 1, gu.as_slice());
        let b = DMatrix::from_column_slice(2, 1, gv.as_slice());
        let out = self.form.eval(&[&a, &b]).expect("shapes match");
        Vector2::new(out[(0, 0)], out[(1, 0)])
    }
}

/// Pointwise matrix data at quadrature points with weights.
struct Samples {
    w: Vec<f64>,
    fields: Vec<Vec<DMatrix<f64>>>,
}

fn sample_fields(mesh: &Mesh, fields: &[(usize, usize, Vec<FeFunction>)]) -> Result<Samples, HarnessError> {
    let rule = triangle_rule(default_degree(mesh))?;
    let mut w = Vec::new();
    let mut out: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); fields.len()];
    for e in 0..mesh.n_elements() {
        for (xi, wq) in rule.iter() {
            let (_, jac) = mesh.map_point(e, xi);
            w.push(wq * jac.determinant().abs());
            for (f, (r, c, comps)) in fields.iter().enumerate() {
                out[f].push(DMatrix::from_fn(*r, *c, |i, j| value(mesh, &comps[i * c + j], e, xi)));
            }
        }
    }
    Ok(Samples { w, fields: out })
}

impl Samples {
    fn l2(&self, vals: impl Iterator<Item = f64>) -> f64 {
        self.w.iter().zip(vals).map(|(w, v)| w * v * v).sum::<f64>().sqrt()
    }
    fn sup(vals: impl Iterator<Item = f64>) -> f64 {
        vals.fold(0.0, f64::max)
    }
}

pub(crate) fn l2_product(config: &Config, rng: &mut ChaCha8Rng) -> Result<RateTable, HarnessError> {
    let mut t = TableBuilder::new("l2_product", config, &["h", "ratio_product", "ratio_difference_l2", "ratio_difference_inf"]);
    let slots = vec![(2, 2), (2, 2), (2, 1)];
    let out = (2, 1);
    // pointwise bound: |T(a_1, …)| ≤ sqrt(n_out Π n_i) ‖T‖ Π |a_i|
    let c: f64 = slots.iter().map(|(a, b)| (a * b) as f64).product::<f64>() * (out.0 * out.1) as f64;
    for j in 0..config.levels {
        let level = rate_level(config.order, j)?;
        let mesh = &level.mesh;
        let mut worst = [0.0f64; 3];
        for _ in 0..10 {
            let form = random_form(rng, slots.clone(), out);
            let field = |r: usize, cc: usize, amp: f64, rng: &mut ChaCha8Rng| -> (usize, usize, Vec<FeFunction>) {
                (r, cc, (0..r * cc).map(|_| random_bulk(mesh, rng).scaled(amp)).collect())
            };
            let specs = vec![
                field(2, 2, 1.0, rng),
                field(2, 2, 1.0, rng),
                field(2, 2, 1.0, rng),
                field(2, 2, 1.0, rng),
                field(2, 1, 1.0, rng),
            ];
            let s = sample_fields(mesh, &specs)?;
            let (u1, u2, d1, d2, v) = (&s.fields[0], &s.fields[1], &s.fields[2], &s.fields[3], &s.fields[4]);
            // û_i = u_i + small perturbation
            let uh1: Vec<DMatrix<f64>> = u1.iter().zip(d1).map(|(a, b)| a + b * 0.1).collect();
            let uh2: Vec<DMatrix<f64>> = u2.iter().zip(d2).map(|(a, b)| a + b * 0.1).collect();
            let tn = form.norm();
            let n = s.w.len();
            let fro = |m: &DMatrix<f64>| m.norm();
            let eval = |a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>| form.eval(&[a, b, q]).expect("shapes");
            let tu: Vec<DMatrix<f64>> = (0..n).map(|p| eval(&u1[p], &u2[p], &v[p])).collect();
            let tuh: Vec<DMatrix<f64>> = (0..n).map(|p| eval(&uh1[p], &uh2[p], &v[p])).collect();

            let l2 = |f: &dyn Fn(usize) -> f64| s.l2((0..n).map(f));
            let sup = |f: &dyn Fn(usize) -> f64| Samples::sup((0..n).map(f));
            let u1_l2 = l2(&|p| fro(&u1[p]));
            let u2_l2 = l2(&|p| fro(&u2[p]));
            let u1_inf = sup(&|p| fro(&u1[p]));
            let u2_inf = sup(&|p| fro(&u2[p]));
            let v_inf = sup(&|p| fro(&v[p]));
            let v_l2 = l2(&|p| fro(&v[p]));
            let lhs = l2(&|p| fro(&tu[p]));
            let rhs = c * tn * (u1_l2 * u2_inf + u2_l2 * u1_inf) * v_inf;
            worst[0] = worst[0].max(lhs / rhs);

            let diff = l2(&|p| fro(&(&tu[p] - &tuh[p])));
            let e1_l2 = l2(&|p| fro(&(&u1[p] - &uh1[p])));
            let e2_l2 = l2(&|p| fro(&(&u2[p] - &uh2[p])));
            let e1_inf = sup(&|p| fro(&(&u1[p] - &uh1[p])));
            let e2_inf = sup(&|p| fro(&(&u2[p] - &uh2[p])));
            let uh1_inf = sup(&|p| fro(&uh1[p]));
            let uh2_inf = sup(&|p| fro(&uh2[p]));
            let rhs = c * tn * (e1_l2 * (e2_inf + uh2_inf) + e2_l2 * (e1_inf + uh1_inf)) * v_inf;
            worst[1] = worst[1].max(diff / rhs);
            let rhs = c * tn * (e1_inf * (e2_inf + uh2_inf) + e2_inf * (e1_inf + uh1_inf)) * v_l2;
            worst[2] = worst[2].max(diff / rhs);
        }
        t.row(vec![level.h(), worst[0], worst[1], worst[2]]);
    }
    t.note(format!("constant c = product of slot and output sizes = {c}"));
    for col in ["ratio_product", "ratio_difference_l2", "ratio_difference_inf"] {
        t.column_at_most(col, 1.0);
    }
    Ok(t.finish())
}
