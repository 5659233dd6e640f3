//! Mesh levels shared between experiments. Spectral bases dominate the
//! cost, so they are built once per mesh and kept for the process.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::fem::{assemble_grams, default_degree, GramSet};
use crate::lift::{lifted_grams, LiftMap};
use crate::mesh::{build_disk_mesh_rings, build_square_mesh, Mesh};
use crate::norms::{spectral_decomp, DofSet, SpectralBasis};
use crate::solvers::Overkill;

use super::HarnessError;

/// Largest dense eigensolve an experiment may request.
pub const EIGEN_DOF_CAP: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Shape {
    Disk,
    Square,
}

type Slot<T> = Mutex<Option<Arc<T>>>;

pub(crate) struct Level {
    pub mesh: Mesh,
    pub grams: GramSet,
    pub lm: LiftMap,
    all: Slot<SpectralBasis>,
    interior: Slot<SpectralBasis>,
    lifted: Slot<GramSet>,
}

fn fill<T>(slot: &Slot<T>, make: impl FnOnce() -> Result<T, HarnessError>) -> Result<Arc<T>, HarnessError> {
    let mut g = slot.lock().unwrap_or_else(|p| p.into_inner());
    if let Some(v) = g.as_ref() {
        return Ok(Arc::clone(v));
    }
    let v = Arc::new(make()?);
    *g = Some(Arc::clone(&v));
    Ok(v)
}

impl Level {
    fn new(mesh: Mesh) -> Result<Level, HarnessError> {
        let grams = assemble_grams(&mesh)?;
        let lm = LiftMap::new(&mesh);
        Ok(Level {
            mesh,
            grams,
            lm,
            all: Mutex::new(None),
            interior: Mutex::new(None),
            lifted: Mutex::new(None),
        })
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }

    pub fn basis(&self, dofset: DofSet) -> Result<Arc<SpectralBasis>, HarnessError> {
        let slot = match dofset {
            DofSet::All => &self.all,
            DofSet::Interior => &self.interior,
            DofSet::Surface => {
                return Ok(Arc::new(spectral_decomp(&self.grams, DofSet::Surface)?));
            }
        };
        fill(slot, || {
            let n = self.grams.n_bulk();
            if n > EIGEN_DOF_CAP {
                return Err(HarnessError::DofCap { dofs: n, cap: EIGEN_DOF_CAP });
            }
            Ok(spectral_decomp(&self.grams, dofset)?)
        })
    }

    /// Forms of lifted functions on the exact domain.
    pub fn lifted(&self) -> Result<Arc<GramSet>, HarnessError> {
        fill(&self.lifted, || Ok(lifted_grams(&self.lm, default_degree(&self.mesh))?))
    }

    /// A fresh surrogate mesh two refinements finer. Not cached: several
    /// of these at once would not fit in memory.
    pub fn overkill(&self) -> Result<Arc<Overkill>, HarnessError> {
        Ok(Arc::new(Overkill::from_coarse(&self.mesh, 2)?))
    }
}

type Key = (Shape, usize, usize);

fn cache() -> &'static Mutex<HashMap<Key, Arc<Level>>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Level>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn get(shape: Shape, n: usize, order: usize) -> Result<Arc<Level>, HarnessError> {
    let mut map = cache().lock().unwrap_or_else(|p| p.into_inner());
    if let Some(l) = map.get(&(shape, n, order)) {
        return Ok(Arc::clone(l));
    }
    let mesh = match shape {
        Shape::Disk => build_disk_mesh_rings(n, order)?,
        Shape::Square => build_square_mesh(n, order)?,
    };
    let l = Arc::new(Level::new(mesh)?);
    map.insert((shape, n, order), Arc::clone(&l));
    Ok(l)
}

/// Drops every cached level.
pub fn clear_cache() {
    cache().lock().unwrap_or_else(|p| p.into_inner()).clear();
}

/// Disk meshes for rate studies: 4, 8, 16, ... rings.
pub(crate) fn rate_level(order: usize, j: usize) -> Result<Arc<Level>, HarnessError> {
    get(Shape::Disk, 4 << j, order)
}

/// Disk meshes sized for dense spectral work. Quadratic elements start one
/// ring count lower so both orders reach similar sizes.
pub(crate) fn eigen_level(order: usize, j: usize) -> Result<Arc<Level>, HarnessError> {
    let base = if order == 1 { 4 } else { 2 };
    get(Shape::Disk, base << j, order)
}

pub(crate) fn square_level(order: usize, n: usize) -> Result<Arc<Level>, HarnessError> {
    get(Shape::Square, n, order)
}
