//! Constant-coefficient multilinear forms on matrix arguments, and the
//! matrix identities used with them.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultilinearError {
    #[error("slot {slot}: expected {want:?}, got {got:?}")]
    Shape {
        slot: usize,
        want: (usize, usize),
        got: (usize, usize),
    },
    #[error("expected {want} arguments, got {got}")]
    Arity { want: usize, got: usize },
    #[error("determinant form only for d in {{2, 3}}, got {0}")]
    UnsupportedDimension(usize),
    #[error("matrix A + I is singular")]
    Singular,
    #[error("coefficient tensor has {got} entries, shapes need {want}")]
    CoeffLength { got: usize, want: usize },
}

/// `T(u_1, …, u_m)` with values in `output_shape`. Coefficients are stored
/// row-major over (slot 1 entry, …, slot m entry, output entry), each slot
/// entry being the row-major index into that slot's matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilinearForm {
    slot_shapes: Vec<(usize, usize)>,
    output_shape: (usize, usize),
    coeffs: Vec<f64>,
}

impl MultilinearForm {
    pub fn new(slot_shapes: Vec<(usize, usize)>, output_shape: (usize, usize), coeffs: Vec<f64>) -> Result<Self, MultilinearError> {
        let want = slot_shapes.iter().map(|(r, c)| r * c).product::<usize>() * output_shape.0 * output_shape.1;
        if coeffs.len() != want {
            return Err(MultilinearError::CoeffLength { got: coeffs.len(), want });
        }
        Ok(MultilinearForm {
            slot_shapes,
            output_shape,
            coeffs,
        })
    }

    /// Coefficients from `f(&[e_1, …, e_m, o])` with flat slot and output indices.
    pub fn from_fn(slot_shapes: Vec<(usize, usize)>, output_shape: (usize, usize), f: impl Fn(&[usize]) -> f64) -> Self {
        let mut dims: Vec<usize> = slot_shapes.iter().map(|(r, c)| r * c).collect();
        dims.push(output_shape.0 * output_shape.1);
        let total: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut coeffs = Vec::with_capacity(total);
        for _ in 0..total {
            coeffs.push(f(&idx));
            for d in (0..dims.len()).rev() {
                idx[d] += 1;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        MultilinearForm {
            slot_shapes,
            output_shape,
            coeffs,
        }
    }

    pub fn scalar_from_fn(slot_shapes: Vec<(usize, usize)>, f: impl Fn(&[usize]) -> f64) -> Self {
        Self::from_fn(slot_shapes, (1, 1), f)
    }

    pub fn zero(slot_shapes: Vec<(usize, usize)>, output_shape: (usize, usize)) -> Self {
        Self::from_fn(slot_shapes, output_shape, |_| 0.0)
    }

    pub fn slot_shapes(&self) -> &[(usize, usize)] {
        &self.slot_shapes
    }
    pub fn output_shape(&self) -> (usize, usize) {
        self.output_shape
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn n_slots(&self) -> usize {
        self.slot_shapes.len()
    }

    fn check(&self, slot: usize, a: &DMatrix<f64>) -> Result<(), MultilinearError> {
        let want = self.slot_shapes[slot];
        if a.shape() != want {
            return Err(MultilinearError::Shape {
                slot,
                want,
                got: a.shape(),
            });
        }
        Ok(())
    }

    /// Contracts slot `slot` with `c`.
    pub fn fix_slot(&self, slot: usize, c: &DMatrix<f64>) -> Result<MultilinearForm, MultilinearError> {
        if slot >= self.n_slots() {
            return Err(MultilinearError::Arity {
                want: self.n_slots(),
                got: slot + 1,
            });
        }
        self.check(slot, c)?;
        let flat = row_major(c);
        let dims: Vec<usize> = self.slot_shapes.iter().map(|(r, c)| r * c).collect();
        let outer: usize = dims[..slot].iter().product();
        let inner: usize = dims[slot + 1..].iter().product::<usize>() * self.output_shape.0 * self.output_shape.1;
        let n = dims[slot];
        let mut coeffs = vec![0.0; outer * inner];
        for o in 0..outer {
            for (a, &ca) in flat.iter().enumerate() {
                if ca == 0.0 {
                    continue;
                }
                let src = &self.coeffs[(o * n + a) * inner..(o * n + a + 1) * inner];
                let dst = &mut coeffs[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += ca * s;
                }
            }
        }
        let mut shapes = self.slot_shapes.clone();
        shapes.remove(slot);
        Ok(MultilinearForm {
            slot_shapes: shapes,
            output_shape: self.output_shape,
            coeffs,
        })
    }

    /// Full contraction with every slot.
    pub fn eval(&self, args: &[&DMatrix<f64>]) -> Result<DMatrix<f64>, MultilinearError> {
        if args.len() != self.n_slots() {
            return Err(MultilinearError::Arity {
                want: self.n_slots(),
                got: args.len(),
            });
        }
        for (i, a) in args.iter().enumerate() {
            self.check(i, a)?;
        }
        let mut cur = self.coeffs.clone();
        for a in args {
            let flat = row_major(a);
            let n = flat.len();
            let inner = cur.len() / n;
            let mut next = vec![0.0; inner];
            for (i, &ai) in flat.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                for (d, s) in next.iter_mut().zip(&cur[i * inner..(i + 1) * inner]) {
                    *d += ai * s;
                }
            }
            cur = next;
        }
        let (r, c) = self.output_shape;
        Ok(DMatrix::from_row_slice(r, c, &cur))
    }

    pub fn eval_scalar(&self, args: &[&DMatrix<f64>]) -> Result<f64, MultilinearError> {
        Ok(self.eval(args)?[(0, 0)])
    }

    /// Largest absolute coefficient.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = a.shape();
    let mut v = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            v.push(a[(i, j)]);
        }
    }
    v
}

pub fn ml_eval(t: &MultilinearForm, args: &[&DMatrix<f64>]) -> Result<DMatrix<f64>, MultilinearError> {
    t.eval(args)
}

pub fn ml_norm(t: &MultilinearForm) -> f64 {
    t.norm()
}

pub fn ml_fix_slot(t: &MultilinearForm, slot: usize, c: &DMatrix<f64>) -> Result<MultilinearForm, MultilinearError> {
    t.fix_slot(slot, c)
}

/// `tr(u_1ᵀ u_2)` on `r × c` matrices.
pub fn trace_form(r: usize, c: usize) -> MultilinearForm {
    MultilinearForm::scalar_from_fn(vec![(r, c), (r, c)], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
}

fn permutation_sign(p: &[usize]) -> Option<f64> {
    let n = p.len();
    let mut seen = vec![false; n];
    for &v in p {
        if v >= n || seen[v] {
            return None;
        }
        seen[v] = true;
    }
    let mut sign = 1.0;
    let mut visited = vec![false; n];
    for s in 0..n {
        if visited[s] {
            continue;
        }
        let mut len = 0;
        let mut j = s;
        while !visited[j] {
            visited[j] = true;
            j = p[j];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    Some(sign)
}

/// Determinant as a symmetric multilinear form in `d` copies of a `d × d`
/// matrix: the coefficient of `(r_1,c_1), …, (r_d,c_d)` is
/// `sgn(r) sgn(c) / d!` when rows and columns are both permutations.
pub fn det_form(d: usize) -> Result<MultilinearForm, MultilinearError> {
    if !(2..=3).contains(&d) {
        return Err(MultilinearError::UnsupportedDimension(d));
    }
    let fact: f64 = (1..=d).map(|i| i as f64).product();
    Ok(MultilinearForm::scalar_from_fn(vec![(d, d); d], |idx| {
        let rows: Vec<usize> = idx[..d].iter().map(|e| e / d).collect();
        let cols: Vec<usize> = idx[..d].iter().map(|e| e % d).collect();
        match (permutation_sign(&rows), permutation_sign(&cols)) {
            (Some(a), Some(b)) => a * b / fact,
            _ => 0.0,
        }
    }))
}

fn shifted_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, MultilinearError> {
    let n = a.nrows();
    let b = a + DMatrix::<f64>::identity(n, n);
    b.try_inverse().ok_or(MultilinearError::Singular)
}

/// `(A+I)^{-T} (A+I)^{-1} det(A+I) - I`.
pub fn deformation_tensor(a: &DMatrix<f64>) -> Result<DMatrix<f64>, MultilinearError> {
    let n = a.nrows();
    let b = a + DMatrix::<f64>::identity(n, n);
    let det = b.determinant();
    if det == 0.0 {
        return Err(MultilinearError::Singular);
    }
    let inv = b.try_inverse().ok_or(MultilinearError::Singular)?;
    Ok(inv.transpose() * &inv * det - DMatrix::<f64>::identity(n, n))
}

/// `(A+I)^{-1} - I` by a direct solve.
pub fn neumann_tail(a: &DMatrix<f64>) -> Result<DMatrix<f64>, MultilinearError> {
    let n = a.nrows();
    Ok(shifted_inverse(a)? - DMatrix::<f64>::identity(n, n))
}

/// Partial sum `Σ_{i=1}^{terms} (-A)^i`.
pub fn neumann_partial_sum(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut p = DMatrix::<f64>::identity(n, n);
    for _ in 0..terms {
        p = -(&p * a);
        sum += &p;
    }
    sum
}

/// Both sides of `(A+I)^{-1} - (B+I)^{-1} = -(A+I)^{-1}(A-B)(B+I)^{-1}`.
pub fn resolvent_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), MultilinearError> {
    let ia = shifted_inverse(a)?;
    let ib = shifted_inverse(b)?;
    let lhs = &ia - &ib;
    let rhs = -(&ia * (a - b) * &ib);
    Ok((lhs, rhs))
}

/// Spectral norm (largest singular value).
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().iter().fold(0.0, |m, s| m.max(*s))
}

pub fn entrywise_max(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// All `2^m - 1` terms of `T(u; v) - T(c; v)` obtained by writing each
/// `u_i = c_i + (u_i - c_i)` in the first `m` slots. Term `s` (a non-empty
/// bit mask) takes the difference in slots whose bit is set and the constant
/// elsewhere.
pub fn comparison_decompose(
    t: &MultilinearForm,
    u: &[DMatrix<f64>],
    c: &[DMatrix<f64>],
    v: &[DMatrix<f64>],
) -> Result<Vec<DMatrix<f64>>, MultilinearError> {
    let m = u.len();
    if c.len() != m || m + v.len() != t.n_slots() {
        return Err(MultilinearError::Arity {
            want: t.n_slots(),
            got: m + v.len(),
        });
    }
    let diffs: Vec<DMatrix<f64>> = u
        .iter()
        .zip(c)
        .enumerate()
        .map(|(i, (a, b))| {
            if a.shape() != b.shape() {
                return Err(MultilinearError::Shape {
                    slot: i,
                    want: a.shape(),
                    got: b.shape(),
                });
            }
            Ok(a - b)
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity((1 << m) - 1);
    for mask in 1usize..(1 << m) {
        let mut args: Vec<&DMatrix<f64>> = (0..m).map(|i| if mask >> i & 1 == 1 { &diffs[i] } else { &c[i] }).collect();
        args.extend(v.iter());
        out.push(t.eval(&args)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn trace_form_basics() {
        let t = trace_form(2, 2);
        let i = DMatrix::<f64>::identity(2, 2);
        assert_eq!(t.eval_scalar(&[&i, &i]).unwrap(), 2.0);
        assert_eq!(t.norm(), 1.0);
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(t.eval_scalar(&[&z, &i]).unwrap(), 0.0);
        assert_eq!(MultilinearForm::zero(vec![(2, 2)], (1, 1)).norm(), 0.0);
    }

    #[test]
    fn fixing_identity_in_trace_form_gives_trace() {
        let t = trace_form(2, 2).fix_slot(0, &DMatrix::identity(2, 2)).unwrap();
        let a = mat(2, 2, &[1.0, 7.0, -3.0, 4.0]);
        assert_eq!(t.eval_scalar(&[&a]).unwrap(), 5.0);
        let z = trace_form(2, 2).fix_slot(0, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let t = trace_form(2, 2);
        let bad = DMatrix::<f64>::zeros(3, 2);
        let i = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(t.eval(&[&bad, &i]), Err(MultilinearError::Shape { .. })));
        assert!(matches!(t.eval(&[&i]), Err(MultilinearError::Arity { .. })));
        assert!(t.fix_slot(0, &bad).is_err());
        assert!(det_form(4).is_err());
    }

    #[test]
    fn det_form_values() {
        let d2 = det_form(2).unwrap();
        let a = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!((d2.eval_scalar(&[&a, &a]).unwrap() + 2.0).abs() < 1e-14);
        assert_eq!(d2.norm(), 0.5);
        let d3 = det_form(3).unwrap();
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((d3.eval_scalar(&[&i, &i, &i]).unwrap() - 1.0).abs() < 1e-14);
        // enumerated: each non-zero coefficient is ±1/3!
        assert!((d3.norm() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(d3.coeffs().iter().filter(|c| **c != 0.0).count(), 36);
    }

    #[test]
    fn deformation_tensor_cases() {
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(deformation_tensor(&z).unwrap(), z);
        for eps in [-0.5, -0.1, 0.01, 0.3, 2.0] {
            let a = DMatrix::<f64>::identity(2, 2) * eps;
            let t = deformation_tensor(&a).unwrap();
            assert!(t.iter().all(|v| v.abs() < 1e-14));
        }
        let eps = 0.2;
        let t = deformation_tensor(&mat(2, 2, &[eps, 0.0, 0.0, 0.0])).unwrap();
        assert!((t[(0, 0)] + eps / (1.0 + eps)).abs() < 1e-15);
        assert!((t[(1, 1)] - eps).abs() < 1e-15);
        assert!(deformation_tensor(&mat(2, 2, &[-1.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn neumann_tail_diagonal() {
        let t = neumann_tail(&mat(2, 2, &[0.2, 0.0, 0.0, -0.1])).unwrap();
        assert!((t[(0, 0)] + 1.0 / 6.0).abs() < 1e-15);
        assert!((t[(1, 1)] - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(neumann_tail(&DMatrix::zeros(2, 2)).unwrap(), DMatrix::<f64>::zeros(2, 2));
    }

    #[test]
    fn resolvent_trivial_cases() {
        let a = mat(2, 2, &[0.1, -0.05, 0.02, 0.15]);
        let (l, r) = resolvent_difference(&a, &a).unwrap();
        assert!(l.iter().chain(r.iter()).all(|v| v.abs() < 1e-15));
        let (l, r) = resolvent_difference(&a, &DMatrix::zeros(2, 2)).unwrap();
        assert!((&l - &r).iter().all(|v| v.abs() < 1e-15));
        assert!((&l - neumann_tail(&a).unwrap()).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn comparison_trivial_cases() {
        let t = trace_form(2, 2);
        let u = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let v = mat(2, 2, &[0.5, -1.0, 0.0, 2.0]);
        let terms = comparison_decompose(&t, &[u.clone()], &[v.clone()], &[u.clone()]).unwrap();
        assert_eq!(terms.len(), 1);
        let want = t.eval_scalar(&[&(&u - &v), &u]).unwrap();
        assert_eq!(terms[0][(0, 0)], want);
        let same = comparison_decompose(&t, &[u.clone(), u.clone()], &[u.clone(), u.clone()], &[]).unwrap();
        assert!(same.iter().all(|m| m[(0, 0)] == 0.0));
    }

    fn small_matrix(d: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-scale..scale, d * d).prop_map(move |v| DMatrix::from_row_slice(d, d, &v))
    }

    proptest! {
        #[test]
        fn multilinear_in_each_slot(
            a in small_matrix(2, 1.0), b in small_matrix(2, 1.0), c in small_matrix(2, 1.0),
            alpha in -3.0..3.0f64, beta in -3.0..3.0f64, slot in 0usize..2,
        ) {
            let t = det_form(2).unwrap();
            let comb = &a * alpha + &b * beta;
            let with = |x: &DMatrix<f64>| if slot == 0 { t.eval_scalar(&[x, &c]).unwrap() } else { t.eval_scalar(&[&c, x]).unwrap() };
            let lhs = with(&comb);
            let rhs = alpha * with(&a) + beta * with(&b);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn fix_slot_agrees_with_eval(c in small_matrix(2, 1.0), u in small_matrix(2, 1.0)) {
            let t = det_form(2).unwrap();
            let f = t.fix_slot(0, &c).unwrap();
            let a = f.eval_scalar(&[&u]).unwrap();
            let b = t.eval_scalar(&[&c, &u]).unwrap();
            prop_assert!((a - b).abs() <= 1e-13);
            prop_assert!(f.norm() <= entrywise_max(&c) * t.norm() * 4.0 + 1e-15);
        }

        #[test]
        fn det_form_reproduces_det3(a in small_matrix(3, 2.0)) {
            let d = det_form(3).unwrap().eval_scalar(&[&a, &a, &a]).unwrap();
            let want = a.determinant();
            let scale = want.abs().max(entrywise_max(&a).powi(3));
            prop_assert!((d - want).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn conformal_scaling_vanishes(eps in -0.9..5.0f64) {
            let t = deformation_tensor(&(DMatrix::<f64>::identity(2, 2) * eps)).unwrap();
            prop_assert!(t.iter().all(|v| v.abs() <= 1e-14 * (1.0 + eps.abs())));
        }

        #[test]
        fn neumann_series_converges(a in small_matrix(2, 0.2)) {
            prop_assume!(operator_norm(&a) < 0.5);
            let direct = neumann_tail(&a).unwrap();
            let series = neumann_partial_sum(&a, 50);
            prop_assert!((direct - series).iter().all(|v| v.abs() <= 1e-12));
        }
    }
}
