use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;

use fracnorm::fem::{assemble_grams, FeFunction, GramSet};
use fracnorm::harness::fit_rate;
use fracnorm::mesh::{build_disk_mesh_rings, Mesh};
use fracnorm::multilinear::{deformation_tensor, det_form, resolvent_difference};
use fracnorm::norms::{spectral_decomp, DofSet, SpectralBasis};
use fracnorm::quadrature::triangle_rule;

struct Fixture {
    mesh: Mesh,
    grams: GramSet,
    all: SpectralBasis,
    interior: SpectralBasis,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mesh = build_disk_mesh_rings(3, 1).unwrap();
        let grams = assemble_grams(&mesh).unwrap();
        let all = spectral_decomp(&grams, DofSet::All).unwrap();
        let interior = spectral_decomp(&grams, DofSet::Interior).unwrap();
        Fixture { mesh, grams, all, interior }
    })
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    let n = fixture().mesh.n_nodes();
    prop::collection::vec(-1.0f64..1.0, n)
}

fn matrix(d: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, d * d).prop_map(move |v| DMatrix::from_row_slice(d, d, &v))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norms_are_homogeneous(c in coeffs(), alpha in -5.0f64..5.0, s in 0.0f64..1.0) {
        let f = fixture();
        let u = FeFunction::bulk(&f.mesh, c.clone()).unwrap();
        let au = u.scaled(alpha);
        let (a, b) = (f.all.norm_s(au.coeffs(), s).unwrap(), f.all.norm_s(u.coeffs(), s).unwrap());
        prop_assert!((a - alpha.abs() * b).abs() <= 1e-12 * b.max(1e-300) * alpha.abs().max(1.0));
    }

    #[test]
    fn norms_increase_with_s(c in coeffs(), s in 0.0f64..0.9, ds in 0.01f64..0.1) {
        let f = fixture();
        let a = f.all.norm_s(&c, s).unwrap();
        let b = f.all.norm_s(&c, s + ds).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-12));
    }

    #[test]
    fn half_norm_interpolates(c in coeffs()) {
        let f = fixture();
        let n = |s| f.all.norm_s(&c, s).unwrap();
        prop_assert!(n(0.5).powi(2) <= n(0.0) * n(1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn endpoint_norms_match_grams(c in coeffs()) {
        let f = fixture();
        let m = f.grams.m_bulk.quadratic(&c).sqrt();
        let h1 = (f.grams.m_bulk.quadratic(&c) + f.grams.a_bulk.quadratic(&c)).sqrt();
        prop_assert!(rel(f.all.norm_s(&c, 0.0).unwrap(), m) <= 1e-10);
        prop_assert!(rel(f.all.norm_s(&c, 1.0).unwrap(), h1) <= 1e-10);
    }

    #[test]
    fn dual_half_attained(b in coeffs()) {
        let f = fixture();
        let phi = f.interior.dual_half_maximizer(&b);
        let quotient = b.iter().zip(&phi).map(|(x, y)| x * y).sum::<f64>() / f.interior.norm_s(&phi, 0.5).unwrap();
        prop_assert!(rel(quotient, f.interior.dual_half(&b)) <= 1e-9);
    }

    #[test]
    fn det_form_is_determinant(a in matrix(3, 2.0)) {
        let t = det_form(3).unwrap();
        let v = t.eval_scalar(&[&a, &a, &a]).unwrap();
        prop_assert!((v - a.determinant()).abs() <= 1e-12 * (1.0 + a.norm().powi(3)));
    }

    #[test]
    fn two_dimensional_trace_identity(a in matrix(2, 3.0)) {
        let tr = a.trace();
        let tr2 = (&a * &a).trace();
        prop_assert!((2.0 * a.determinant() - (tr * tr - tr2)).abs() <= 1e-12 * (1.0 + a.norm_squared()));
    }

    #[test]
    fn resolvent_sides_agree(a in matrix(3, 0.3), b in matrix(3, 0.3)) {
        let (l, r) = resolvent_difference(&a, &b).unwrap();
        prop_assert!((&l - &r).norm() <= 1e-13 * (1.0 + l.norm()));
    }

    #[test]
    fn deformation_tensor_symmetric(a in matrix(2, 0.4)) {
        let d = deformation_tensor(&a).unwrap();
        prop_assert!((&d - d.transpose()).norm() <= 1e-14);
    }

    #[test]
    fn conformal_perturbations_vanish(alpha in -0.5f64..0.5, beta in -0.5f64..0.5) {
        // A + I = (1+α)I + β J, a scaled rotation
        let a = DMatrix::from_row_slice(2, 2, &[alpha, -beta, beta, alpha]);
        prop_assert!(deformation_tensor(&a).unwrap().norm() <= 1e-14);
    }

    #[test]
    fn power_laws_recovered(p in 0.5f64..4.0, c in 0.1f64..10.0) {
        let samples: Vec<(f64, f64)> = (0..4).map(|j| {
            let h = 0.5f64.powi(j);
            (h, c * h.powf(p))
        }).collect();
        let (slope, r2) = fit_rate(&samples).unwrap();
        prop_assert!((slope - p).abs() <= 1e-10);
        prop_assert!(r2 >= 1.0 - 1e-10);
    }

    #[test]
    fn quadrature_exact_for_monomials(degree in 1usize..12, i in 0usize..12) {
        let rule = triangle_rule(degree).unwrap();
        let a = i.min(degree);
        let b = degree - a;
        // ∫_T x^a y^b = a! b! / (a+b+2)!
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        let exact = fact(a) * fact(b) / fact(a + b + 2);
        let got: f64 = rule.iter().map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
        prop_assert!((got - exact).abs() <= 1e-14 + 1e-12 * exact);
    }
}

#[test]
fn refinement_halves_h() {
    for order in [1, 2] {
        let m = build_disk_mesh_rings(2, order).unwrap();
        let mut h = m.h();
        let mut cur = m;
        for _ in 0..3 {
            cur = cur.refined(1).unwrap();
            let ratio = h / cur.h();
            assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "ratio {ratio}");
            h = cur.h();
        }
    }
}
