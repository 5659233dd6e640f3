//! Test functions shared by the experiments.

use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fem::{FeFunction, Space, VectorMeshField};
use crate::mesh::Mesh;

pub(crate) fn random_bulk(mesh: &Mesh, rng: &mut ChaCha8Rng) -> FeFunction {
    FeFunction::from_raw((0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(), Space::Bulk, 1)
}

pub(crate) fn random_zero_trace(mesh: &Mesh, rng: &mut ChaCha8Rng) -> FeFunction {
    random_bulk(mesh, rng).zero_trace_part(mesh)
}

pub(crate) fn random_surface(mesh: &Mesh, rng: &mut ChaCha8Rng) -> FeFunction {
    FeFunction::from_raw(
        (0..mesh.n_boundary_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        Space::Surface,
        1,
    )
}

pub(crate) fn random_vector(mesh: &Mesh, rng: &mut ChaCha8Rng) -> FeFunction {
    FeFunction::from_raw((0..2 * mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(), Space::Bulk, 2)
}

/// `sin(a·x + φ)`; every derivative is explicit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Wave {
    pub a: Vector2<f64>,
    pub phase: f64,
}

impl Wave {
    pub fn random(rng: &mut ChaCha8Rng, max_freq: f64) -> Wave {
        Wave {
            a: Vector2::new(rng.gen_range(-max_freq..max_freq), rng.gen_range(-max_freq..max_freq)),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        }
    }

    pub fn fixed(i: usize) -> Wave {
        const W: [(f64, f64, f64); 4] = [(1.0, 0.5, 0.3), (-0.7, 1.6, 1.1), (2.1, -1.3, 0.0), (0.4, 2.5, 2.0)];
        let (a, b, p) = W[i % W.len()];
        Wave {
            a: Vector2::new(a, b),
            phase: p,
        }
    }

    pub fn value(&self, x: Vector2<f64>) -> f64 {
        (self.a.dot(&x) + self.phase).sin()
    }

    pub fn grad(&self, x: Vector2<f64>) -> Vector2<f64> {
        self.a * (self.a.dot(&x) + self.phase).cos()
    }

    /// Frobenius norm of the m-th derivative tensor.
    pub fn derivative_norm(&self, m: usize, x: Vector2<f64>) -> f64 {
        let t = self.a.dot(&x) + self.phase;
        let s = match m % 4 {
            0 => t.sin(),
            1 => t.cos(),
            2 => -t.sin(),
            _ => -t.cos(),
        };
        self.a.norm().powi(m as i32) * s.abs()
    }

    /// Sup of value, gradient and Hessian sizes over the plane; bounds
    /// the W^{3/2,∞} norm.
    pub fn w2inf(&self) -> f64 {
        let r = self.a.norm();
        1.0f64.max(r).max(r * r)
    }
}

/// A two-component [`FeFunction`] read as a vector field.
pub(crate) struct FeVector<'a> {
    pub mesh: &'a Mesh,
    pub z: &'a FeFunction,
}

impl VectorMeshField for FeVector<'_> {
    fn value(&self, elem: usize, xi: [f64; 2], _: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.z.eval_reference(self.mesh, elem, xi, 0).0,
            self.z.eval_reference(self.mesh, elem, xi, 1).0,
        )
    }
}
