//! Spectral fractional norms on finite element spaces and the dual norms
//! built from them.
//!
//! The H^s norm of a discrete function is `sqrt(Σ λ_i^s c_i²)` where
//! `(λ_i, v_i)` solve `(M + A) v = λ M v` on a set of degrees of freedom and
//! `c = Vᵀ M u`. Dual norms of a load vector `b` are `sqrt(Σ λ_i^{-1/2} (Vᵀb)_i²)`,
//! which is the exact supremum over the test space.

use faer::{Mat, Side};
use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::fem::{gradient_load_vector, FeFunction, GramSet, Space, VectorMeshField};
use crate::linalg::{CsrMatrix, LinalgError, SpdSolver};
use crate::mesh::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("mass matrix is not positive definite")]
    IndefiniteMass,
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("function has non-zero coefficient {value} at node {node} outside the degree-of-freedom set")]
    OutsideDofset { node: usize, value: f64 },
    #[error("vector length {got} does not match {want}")]
    Length { got: usize, want: usize },
    #[error("{0:?} basis cannot serve the {1:?} variant")]
    VariantMismatch(DofSet, Variant),
    #[error("boundary order {0} not in {{0, 1/2, 1}}")]
    BoundaryOrder(f64),
    #[error("function belongs to the wrong space")]
    WrongSpace,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] crate::fem::FemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DofSet {
    All,
    Interior,
    /// all surface degrees of freedom
    Surface,
}

/// Test space of a dual norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    ZeroTrace,
    Full,
}

impl Variant {
    pub fn dofset(self) -> DofSet {
        match self {
            Variant::ZeroTrace => DofSet::Interior,
            Variant::Full => DofSet::All,
        }
    }
}

/// Generalized eigendecomposition of a symmetric pencil restricted to a set
/// of degrees of freedom. Columns of `vectors` are mass-orthonormal.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub dofset: DofSet,
    pub ids: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    pub vectors: Mat<f64>,
    pub mass_on_set: CsrMatrix,
    n_full: usize,
}

/// Solves `K v = λ M v` densely. Eigenvalues ascending; eigenvectors
/// `M`-orthonormal.
pub fn generalized_eigen(k: &Mat<f64>, m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>), NormError> {
    let n = k.nrows();
    let llt = m.llt(Side::Lower).map_err(|_| NormError::IndefiniteMass)?;
    let l = llt.L().to_owned();
    // C = L⁻¹ K L⁻ᵀ
    let mut x = k.clone();
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut c = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(c.as_mut());
    let c = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| NormError::Eigen(format!("{e:?}")))?;
    let vals: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
    let mut v = evd.U().to_owned();
    l.transpose().solve_upper_triangular_in_place(v.as_mut());
    Ok((vals, v))
}

impl SpectralBasis {
    /// Decomposes the pencil `(k, m)` restricted to `ids`.
    pub fn from_pencil(k: &CsrMatrix, m: &CsrMatrix, ids: Vec<usize>, dofset: DofSet) -> Result<SpectralBasis, NormError> {
        let ks = k.submatrix(&ids, &ids).to_dense();
        let ms = m.submatrix(&ids, &ids);
        let (eigenvalues, vectors) = generalized_eigen(&ks, &ms.to_dense())?;
        Ok(SpectralBasis {
            dofset,
            n_full: m.n_rows(),
            ids,
            eigenvalues,
            vectors,
            mass_on_set: ms,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Restriction of a full-length vector, rejecting support outside the set.
    pub fn restrict(&self, u: &[f64]) -> Result<Vec<f64>, NormError> {
        if u.len() != self.n_full {
            return Err(NormError::Length {
                got: u.len(),
                want: self.n_full,
            });
        }
        let mut inside = vec![false; self.n_full];
        for &i in &self.ids {
            inside[i] = true;
        }
        for (i, &v) in u.iter().enumerate() {
            if !inside[i] && v != 0.0 {
                return Err(NormError::OutsideDofset { node: i, value: v });
            }
        }
        Ok(self.ids.iter().map(|&i| u[i]).collect())
    }

    pub fn expand(&self, r: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_full];
        for (p, &i) in self.ids.iter().enumerate() {
            u[i] = r[p];
        }
        u
    }

    /// `Vᵀ x` for a vector indexed by the set.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let col = self.vectors.col(j);
                (0..n).map(|i| col[i] * x[i]).sum()
            })
            .collect()
    }

    /// `V y`, indexed by the set.
    pub fn synthesize(&self, y: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (j, &yj) in y.iter().enumerate() {
            if yj == 0.0 {
                continue;
            }
            let col = self.vectors.col(j);
            for i in 0..n {
                out[i] += col[i] * yj;
            }
        }
        out
    }

    /// Spectral coefficients `c = Vᵀ M u` of a full-length vector.
    pub fn coefficients(&self, u: &[f64]) -> Result<Vec<f64>, NormError> {
        let r = self.restrict(u)?;
        Ok(self.project(&self.mass_on_set.matvec(&r)))
    }

    /// `sqrt(Σ λ^s c²)`; any real `s` is accepted.
    pub fn norm_s(&self, u: &[f64], s: f64) -> Result<f64, NormError> {
        let c = self.coefficients(u)?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(&c)
            .map(|(l, c)| l.powf(s) * c * c)
            .sum::<f64>()
            .max(0.0)
            .sqrt())
    }

    /// Dual H^{1/2} norm of a functional given by its load vector on the set.
    pub fn dual_half(&self, b: &[f64]) -> f64 {
        self.project(b)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(y, l)| y * y / l.sqrt())
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// Maximiser `V Λ^{-1/2} Vᵀ b` of the dual quotient, as a full-length vector.
    pub fn dual_half_maximizer(&self, b: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = self
            .project(b)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(y, l)| y / l.sqrt())
            .collect();
        self.expand(&self.synthesize(&y))
    }
}

/// Eigendecomposition of `(M + A, M)` on the interior or all bulk nodes.
pub fn spectral_decomp(grams: &GramSet, dofset: DofSet) -> Result<SpectralBasis, NormError> {
    let k = grams.h1_bulk();
    match dofset {
        DofSet::All => SpectralBasis::from_pencil(&k, &grams.m_bulk, (0..grams.n_bulk()).collect(), dofset),
        DofSet::Interior => SpectralBasis::from_pencil(&k, &grams.m_bulk, grams.interior_ids.clone(), dofset),
        DofSet::Surface => SpectralBasis::from_pencil(&grams.h1_surf(), &grams.m_surf, (0..grams.n_surface()).collect(), dofset),
    }
}

pub fn h_s_norm(u: &FeFunction, s: f64, sb: &SpectralBasis) -> Result<f64, NormError> {
    sb.norm_s(u.coeffs(), s)
}

fn check_variant(sb: &SpectralBasis, variant: Variant) -> Result<(), NormError> {
    if sb.dofset != variant.dofset() {
        return Err(NormError::VariantMismatch(sb.dofset, variant));
    }
    Ok(())
}

fn restrict_load(sb: &SpectralBasis, b: &[f64]) -> Vec<f64> {
    sb.ids.iter().map(|&i| b[i]).collect()
}

/// Load vector `b_j = m(f, φ_j)` over the variant's test set.
pub fn mass_load(f: &FeFunction, sb: &SpectralBasis, grams: &GramSet) -> Vec<f64> {
    restrict_load(sb, &grams.m_bulk.matvec(f.coeffs()))
}

/// Negative-order dual norm of `f` against H^{1/2} test functions.
pub fn dual_neg_half_norm(f: &FeFunction, variant: Variant, sb: &SpectralBasis, grams: &GramSet) -> Result<f64, NormError> {
    check_variant(sb, variant)?;
    if f.space() == Space::Surface || f.arity() != 1 {
        return Err(NormError::WrongSpace);
    }
    Ok(sb.dual_half(&mass_load(f, sb, grams)))
}

/// Dual norm of a vector field tested against gradients.
pub fn vec_dual_half_norm(
    z: &dyn VectorMeshField,
    variant: Variant,
    sb: &SpectralBasis,
    mesh: &Mesh,
) -> Result<f64, NormError> {
    check_variant(sb, variant)?;
    let b = gradient_load_vector(mesh, z, crate::fem::default_degree(mesh))?;
    Ok(sb.dual_half(&restrict_load(sb, &b)))
}

/// The discrete H^{3/2}-like norm: the gradient dual norm plus the H¹ norm
/// of the trace. `ZeroTrace` tests against interior functions, `Full`
/// against the whole bulk space.
pub fn hhat_threehalf_norm(u: &FeFunction, variant: Variant, sb: &SpectralBasis, grams: &GramSet) -> Result<f64, NormError> {
    Ok(hhat_parts(u, variant, sb, grams)?.iter().sum())
}

/// The two summands of [`hhat_threehalf_norm`]: (gradient term, trace term).
pub fn hhat_parts(u: &FeFunction, variant: Variant, sb: &SpectralBasis, grams: &GramSet) -> Result<[f64; 2], NormError> {
    check_variant(sb, variant)?;
    if u.space() == Space::Surface || u.arity() != 1 {
        return Err(NormError::WrongSpace);
    }
    // ∫ ∇u·∇φ_j = (A u)_j for a discrete gradient
    let b = grams.a_bulk.matvec(u.coeffs());
    let dual = sb.dual_half(&restrict_load(sb, &b));
    let g: Vec<f64> = grams.boundary_ids.iter().map(|&i| u.coeffs()[i]).collect();
    let tr = grams.h1_surf().quadratic(&g).max(0.0).sqrt();
    Ok([dual, tr])
}

/// Boundary norms of order 0, 1/2 or 1.
pub fn boundary_sobolev_norm(g: &FeFunction, s: f64, grams: &GramSet) -> Result<f64, NormError> {
    if g.space() != Space::Surface {
        return Err(NormError::WrongSpace);
    }
    let c = g.coeffs();
    if s == 0.0 {
        Ok(grams.m_surf.quadratic(c).max(0.0).sqrt())
    } else if s == 1.0 {
        Ok(grams.h1_surf().quadratic(c).max(0.0).sqrt())
    } else if s == 0.5 {
        spectral_decomp(grams, DofSet::Surface)?.norm_s(c, 0.5)
    } else {
        Err(NormError::BoundaryOrder(s))
    }
}

/// Krylov estimate of `uᵀ M f(M⁻¹K) u` by Gauss–Lanczos quadrature in the
/// `M` inner product, for pencils too large for a dense eigensolve.
pub fn lanczos_form(
    k: &CsrMatrix,
    m: &CsrMatrix,
    m_solver: &SpdSolver,
    u: &[f64],
    f: impl Fn(f64) -> f64,
    steps: usize,
) -> f64 {
    let mu = m.matvec(u);
    let nrm2: f64 = u.iter().zip(&mu).map(|(a, b)| a * b).sum();
    if nrm2 <= 0.0 {
        return 0.0;
    }
    let nrm = nrm2.sqrt();
    let mut qs: Vec<Vec<f64>> = vec![u.iter().map(|v| v / nrm).collect()];
    let mut mqs: Vec<Vec<f64>> = vec![mu.iter().map(|v| v / nrm).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps.min(u.len()) {
        let kq = k.matvec(&qs[j]);
        let a: f64 = qs[j].iter().zip(&kq).map(|(p, q)| p * q).sum();
        alpha.push(a);
        let mut w = m_solver.solve(&kq);
        // full reorthogonalisation, applied twice
        for _ in 0..2 {
            for (q, mq) in qs.iter().zip(&mqs) {
                let c: f64 = mq.iter().zip(&w).map(|(p, q)| p * q).sum();
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let mw = m.matvec(&w);
        let b2: f64 = w.iter().zip(&mw).map(|(p, q)| p * q).sum();
        let b = b2.max(0.0).sqrt();
        if b <= 1e-12 * a.abs().max(1.0) || j + 1 == steps.min(u.len()) {
            break;
        }
        beta.push(b);
        qs.push(w.iter().map(|v| v / b).collect());
        mqs.push(mw.iter().map(|v| v / b).collect());
    }
    let n = alpha.len();
    let t = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    (0..n)
        .map(|i| f(eig.eigenvalues[i]) * eig.eigenvectors[(0, i)].powi(2))
        .sum::<f64>()
        * nrm2
}
