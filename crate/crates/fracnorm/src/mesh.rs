//! Isoparametric triangle meshes of the unit disk and the unit square.
//!
//! Disk meshes use concentric rings: ring `j` of `n` sits at radius `j/n`
//! and carries `6j` vertices, and neighbouring rings are zipped together
//! sector by sector. Doubling the ring count is the uniform refinement used
//! throughout. For order 2 the midpoints of boundary edges are pushed
//! radially onto the circle.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("target mesh size {0} outside (0.005, 0.5]")]
    TargetSizeOutOfRange(f64),
    #[error("at least {min} subdivisions required, got {got}")]
    TooCoarse { min: usize, got: usize },
    #[error("unsupported geometry order {0}")]
    UnsupportedOrder(usize),
    #[error("element {elem} has non-positive jacobian determinant {det}")]
    InvertedElement { elem: usize, det: f64 },
    #[error("element id {0} out of range")]
    InvalidElement(usize),
    #[error("node id {0} out of range")]
    InvalidNode(usize),
    #[error("element {elem} has {got} nodes, order {order} needs {want}")]
    BadElementArity {
        elem: usize,
        got: usize,
        want: usize,
        order: usize,
    },
    #[error("mesh has no refinement layout (loaded from a document?)")]
    NotRefinable,
    #[error("malformed mesh document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Disk,
    Square,
}

/// Construction parameters kept so that a mesh can be refined uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    DiskRings(usize),
    SquareGrid(usize),
}

/// On-disk representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Vec<usize>>,
    pub boundary_faces: Vec<Vec<usize>>,
    pub order: usize,
    pub domain_kind: DomainKind,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Vector2<f64>>,
    elements: Vec<Vec<usize>>,
    boundary_faces: Vec<Vec<usize>>,
    boundary_node_ids: Vec<usize>,
    interior_node_ids: Vec<usize>,
    order: usize,
    h: f64,
    domain_kind: DomainKind,
    layout: Option<Layout>,
    // (element, local edge) owning each boundary face
    face_owner: Vec<(usize, usize)>,
    surface_index: Vec<Option<usize>>,
    interior_index: Vec<Option<usize>>,
    // local edge of each element lying on the boundary, if any
    element_boundary_edge: Vec<Option<usize>>,
    node_elements: Vec<Vec<usize>>,
    node_faces: Vec<Vec<usize>>,
}

pub fn build_disk_mesh(target_h: f64, order: usize) -> Result<Mesh, MeshError> {
    if !(target_h > 0.005 && target_h <= 0.5) {
        return Err(MeshError::TargetSizeOutOfRange(target_h));
    }
    let rings = (1.0 / target_h).ceil() as usize;
    build_disk_mesh_rings(rings.max(2), order)
}

pub fn build_disk_mesh_rings(rings: usize, order: usize) -> Result<Mesh, MeshError> {
    check_order(order)?;
    if rings < 2 {
        return Err(MeshError::TooCoarse { min: 2, got: rings });
    }
    let n = rings;
    let mut verts: Vec<Vector2<f64>> = vec![Vector2::zeros()];
    let mut ring_start = vec![0usize; n + 1];
    for j in 1..=n {
        ring_start[j] = verts.len();
        let r = j as f64 / n as f64;
        for i in 0..6 * j {
            let t = 2.0 * PI * i as f64 / (6 * j) as f64;
            let p = if j == n {
                Vector2::new(t.cos(), t.sin())
            } else {
                Vector2::new(r * t.cos(), r * t.sin())
            };
            verts.push(p);
        }
    }
    let ring_node = |j: usize, i: usize| -> usize {
        if j == 0 {
            0
        } else {
            ring_start[j] + i % (6 * j)
        }
    };
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(6 * n * n);
    for j in 1..=n {
        for s in 0..6 {
            if j == 1 {
                tris.push([0, ring_node(1, s), ring_node(1, s + 1)]);
                continue;
            }
            let (mut a, mut b) = (0usize, 0usize);
            let inner = j - 1;
            while a < inner || b < j {
                let advance_outer = if a == inner {
                    true
                } else if b == j {
                    false
                } else {
                    // compare angular positions of the next candidates
                    (b + 1) as f64 / j as f64 <= (a + 1) as f64 / inner as f64
                };
                let pa = ring_node(inner, inner * s + a);
                let pb = ring_node(j, j * s + b);
                if advance_outer {
                    tris.push([pa, pb, ring_node(j, j * s + b + 1)]);
                    b += 1;
                } else {
                    tris.push([pa, pb, ring_node(inner, inner * s + a + 1)]);
                    a += 1;
                }
            }
        }
    }
    let on_circle: Vec<bool> = (0..verts.len()).map(|i| i >= ring_start[n]).collect();
    let mesh = assemble_from_triangles(
        verts,
        tris,
        order,
        DomainKind::Disk,
        Some(Layout::DiskRings(n)),
        |p, q, m| {
            if on_circle[p] && on_circle[q] {
                m / m.norm()
            } else {
                m
            }
        },
    )?;
    Ok(mesh)
}

pub fn build_square_mesh(n_per_side: usize, order: usize) -> Result<Mesh, MeshError> {
    check_order(order)?;
    if n_per_side < 2 {
        return Err(MeshError::TooCoarse {
            min: 2,
            got: n_per_side,
        });
    }
    let n = n_per_side;
    let mut verts = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            verts.push(Vector2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    assemble_from_triangles(
        verts,
        tris,
        order,
        DomainKind::Square,
        Some(Layout::SquareGrid(n)),
        |_, _, m| m,
    )
}

fn check_order(order: usize) -> Result<(), MeshError> {
    if order == 1 || order == 2 {
        Ok(())
    } else {
        Err(MeshError::UnsupportedOrder(order))
    }
}

fn assemble_from_triangles(
    mut nodes: Vec<Vector2<f64>>,
    mut tris: Vec<[usize; 3]>,
    order: usize,
    domain_kind: DomainKind,
    layout: Option<Layout>,
    place_midpoint: impl Fn(usize, usize, Vector2<f64>) -> Vector2<f64>,
) -> Result<Mesh, MeshError> {
    for t in tris.iter_mut() {
        let (a, b, c) = (nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        let cross = (b - a).perp(&(c - a));
        if cross < 0.0 {
            t.swap(1, 2);
        }
    }
    let mut elements: Vec<Vec<usize>> = Vec::with_capacity(tris.len());
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &tris {
        let mut e = t.to_vec();
        if order == 2 {
            for [la, lb] in basis::EDGE_VERTICES {
                let (p, q) = (t[la], t[lb]);
                let key = (p.min(q), p.max(q));
                let idx = *mid.entry(key).or_insert_with(|| {
                    let m = 0.5 * (nodes[p] + nodes[q]);
                    nodes.push(place_midpoint(p, q, m));
                    nodes.len() - 1
                });
                e.push(idx);
            }
        }
        elements.push(e);
    }
    // boundary faces are element edges owned by exactly one element
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &tris {
        for [la, lb] in basis::EDGE_VERTICES {
            let (p, q) = (t[la], t[lb]);
            *edge_count.entry((p.min(q), p.max(q))).or_default() += 1;
        }
    }
    let mut boundary_faces = Vec::new();
    for (ei, t) in tris.iter().enumerate() {
        for (le, [la, lb]) in basis::EDGE_VERTICES.iter().enumerate() {
            let (p, q) = (t[*la], t[*lb]);
            if edge_count[&(p.min(q), p.max(q))] == 1 {
                let mut f = vec![p, q];
                if order == 2 {
                    f.push(elements[ei][3 + le]);
                }
                boundary_faces.push(f);
            }
        }
    }
    Mesh::from_parts(nodes, elements, boundary_faces, order, domain_kind, layout)
}

impl Mesh {
    /// Builds the derived tables and validates the geometry.
    pub fn from_parts(
        nodes: Vec<Vector2<f64>>,
        elements: Vec<Vec<usize>>,
        boundary_faces: Vec<Vec<usize>>,
        order: usize,
        domain_kind: DomainKind,
        layout: Option<Layout>,
    ) -> Result<Mesh, MeshError> {
        check_order(order)?;
        let nloc = basis::nodes_per_triangle(order);
        let nn = nodes.len();
        for (ei, e) in elements.iter().enumerate() {
            if e.len() != nloc {
                return Err(MeshError::BadElementArity {
                    elem: ei,
                    got: e.len(),
                    want: nloc,
                    order,
                });
            }
            if let Some(&bad) = e.iter().find(|&&i| i >= nn) {
                return Err(MeshError::InvalidNode(bad));
            }
        }
        let mut node_elements = vec![Vec::new(); nn];
        for (ei, e) in elements.iter().enumerate() {
            for &i in e {
                node_elements[i].push(ei);
            }
        }
        let mut is_boundary = vec![false; nn];
        let mut face_owner = Vec::with_capacity(boundary_faces.len());
        let mut element_boundary_edge = vec![None; elements.len()];
        let mut node_faces = vec![Vec::new(); nn];
        for (fi, f) in boundary_faces.iter().enumerate() {
            if f.len() != order + 1 {
                return Err(MeshError::Document(format!("face {fi} has {} nodes", f.len())));
            }
            for &i in f {
                if i >= nn {
                    return Err(MeshError::InvalidNode(i));
                }
                is_boundary[i] = true;
                node_faces[i].push(fi);
            }
            let owner = node_elements[f[0]]
                .iter()
                .find_map(|&ei| {
                    let e = &elements[ei];
                    basis::EDGE_VERTICES.iter().enumerate().find_map(|(le, [a, b])| {
                        (e[*a] == f[0] && e[*b] == f[1]).then_some((ei, le))
                    })
                })
                .ok_or_else(|| MeshError::Document(format!("face {fi} has no owner")))?;
            element_boundary_edge[owner.0] = Some(owner.1);
            face_owner.push(owner);
        }
        let boundary_node_ids: Vec<usize> = (0..nn).filter(|&i| is_boundary[i]).collect();
        let interior_node_ids: Vec<usize> = (0..nn).filter(|&i| !is_boundary[i]).collect();
        let mut surface_index = vec![None; nn];
        for (s, &i) in boundary_node_ids.iter().enumerate() {
            surface_index[i] = Some(s);
        }
        let mut interior_index = vec![None; nn];
        for (s, &i) in interior_node_ids.iter().enumerate() {
            interior_index[i] = Some(s);
        }
        let mut mesh = Mesh {
            nodes,
            elements,
            boundary_faces,
            boundary_node_ids,
            interior_node_ids,
            order,
            h: 0.0,
            domain_kind,
            layout,
            face_owner,
            surface_index,
            interior_index,
            element_boundary_edge,
            node_elements,
            node_faces,
        };
        mesh.h = (0..mesh.n_elements())
            .map(|e| mesh.element_diameter(e))
            .fold(0.0, f64::max);
        let probe = crate::quadrature::triangle_rule(2 * order + 4).expect("default rule");
        for e in 0..mesh.n_elements() {
            for (xi, _) in probe.iter().chain(basis::reference_nodes(order).into_iter().map(|p| (p, 0.0))) {
                let (_, jac) = mesh.map_point(e, xi);
                let det = jac.determinant();
                if !(det > 0.0) {
                    return Err(MeshError::InvertedElement { elem: e, det });
                }
            }
        }
        Ok(mesh)
    }

    /// Copy with every node moved by `disp[i]`, keeping the connectivity.
    pub fn displaced(&self, disp: &[Vector2<f64>]) -> Result<Mesh, MeshError> {
        assert_eq!(disp.len(), self.nodes.len(), "one displacement per node");
        let nodes = self.nodes.iter().zip(disp).map(|(p, d)| p + d).collect();
        Mesh::from_parts(
            nodes,
            self.elements.clone(),
            self.boundary_faces.clone(),
            self.order,
            self.domain_kind,
            None,
        )
    }

    pub fn from_document(doc: &MeshDocument) -> Result<Mesh, MeshError> {
        let nodes = doc.nodes.iter().map(|p| Vector2::new(p[0], p[1])).collect();
        Mesh::from_parts(
            nodes,
            doc.elements.clone(),
            doc.boundary_faces.clone(),
            doc.order,
            doc.domain_kind,
            None,
        )
    }

    pub fn to_document(&self) -> MeshDocument {
        MeshDocument {
            nodes: self.nodes.iter().map(|p| [p.x, p.y]).collect(),
            elements: self.elements.clone(),
            boundary_faces: self.boundary_faces.clone(),
            order: self.order,
            domain_kind: self.domain_kind,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("mesh document serialises")
    }

    pub fn from_json(text: &str) -> Result<Mesh, MeshError> {
        let doc: MeshDocument =
            serde_json::from_str(text).map_err(|e| MeshError::Document(e.to_string()))?;
        Mesh::from_document(&doc)
    }

    /// Uniformly refined copy: ring or grid count multiplied by `2^levels`.
    pub fn refined(&self, levels: u32) -> Result<Mesh, MeshError> {
        let f = 1usize << levels;
        match self.layout {
            Some(Layout::DiskRings(n)) => build_disk_mesh_rings(n * f, self.order),
            Some(Layout::SquareGrid(n)) => build_square_mesh(n * f, self.order),
            None => Err(MeshError::NotRefinable),
        }
    }

    pub fn nodes(&self) -> &[Vector2<f64>] {
        &self.nodes
    }
    pub fn node(&self, i: usize) -> Vector2<f64> {
        self.nodes[i]
    }
    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }
    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e]
    }
    pub fn boundary_faces(&self) -> &[Vec<usize>] {
        &self.boundary_faces
    }
    pub fn boundary_node_ids(&self) -> &[usize] {
        &self.boundary_node_ids
    }
    pub fn interior_node_ids(&self) -> &[usize] {
        &self.interior_node_ids
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn domain_kind(&self) -> DomainKind {
        self.domain_kind
    }
    pub fn layout(&self) -> Option<Layout> {
        self.layout
    }
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }
    pub fn n_boundary_nodes(&self) -> usize {
        self.boundary_node_ids.len()
    }
    pub fn n_interior_nodes(&self) -> usize {
        self.interior_node_ids.len()
    }
    pub fn nodes_per_element(&self) -> usize {
        basis::nodes_per_triangle(self.order)
    }
    /// Position of node `i` in the surface numbering, if it is a boundary node.
    pub fn surface_index(&self, i: usize) -> Option<usize> {
        self.surface_index[i]
    }
    pub fn interior_index(&self, i: usize) -> Option<usize> {
        self.interior_index[i]
    }
    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.surface_index[i].is_some()
    }
    /// Element and local edge carrying boundary face `f`.
    pub fn face_owner(&self, f: usize) -> (usize, usize) {
        self.face_owner[f]
    }
    pub fn element_boundary_edge(&self, e: usize) -> Option<usize> {
        self.element_boundary_edge[e]
    }
    pub fn node_elements(&self, i: usize) -> &[usize] {
        &self.node_elements[i]
    }
    pub fn node_faces(&self, i: usize) -> &[usize] {
        &self.node_faces[i]
    }

    /// Physical point and Jacobian of the order-k map at `ref_pt`.
    pub fn geometry_map(
        &self,
        elem: usize,
        ref_pt: [f64; 2],
    ) -> Result<(Vector2<f64>, Matrix2<f64>), MeshError> {
        if elem >= self.elements.len() {
            return Err(MeshError::InvalidElement(elem));
        }
        Ok(self.map_point(elem, ref_pt))
    }

    /// Unchecked variant of [`Mesh::geometry_map`].
    pub fn map_point(&self, elem: usize, xi: [f64; 2]) -> (Vector2<f64>, Matrix2<f64>) {
        let e = &self.elements[elem];
        let mut v = [0.0; 6];
        let mut g = [[0.0; 2]; 6];
        basis::shape_values(self.order, xi, &mut v);
        basis::shape_gradients(self.order, xi, &mut g);
        let mut x = Vector2::zeros();
        let mut jac = Matrix2::zeros();
        for (a, &i) in e.iter().enumerate() {
            let p = self.nodes[i];
            x += p * v[a];
            jac[(0, 0)] += p.x * g[a][0];
            jac[(0, 1)] += p.x * g[a][1];
            jac[(1, 0)] += p.y * g[a][0];
            jac[(1, 1)] += p.y * g[a][1];
        }
        (x, jac)
    }

    /// Point and tangent `dx/dt` of boundary face `f` at `t ∈ [0,1]`.
    pub fn face_point(&self, f: usize, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        let face = &self.boundary_faces[f];
        let mut v = [0.0; 3];
        let mut d = [0.0; 3];
        basis::edge_values(self.order, t, &mut v);
        basis::edge_derivatives(self.order, t, &mut d);
        let mut x = Vector2::zeros();
        let mut tan = Vector2::zeros();
        for (a, &i) in face.iter().enumerate() {
            x += self.nodes[i] * v[a];
            tan += self.nodes[i] * d[a];
        }
        (x, tan)
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let ids = &self.elements[e];
        let mut d: f64 = 0.0;
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                d = d.max((self.nodes[ids[a]] - self.nodes[ids[b]]).norm());
            }
        }
        d
    }

    /// Diameter of the inscribed circle of the vertex triangle.
    pub fn inscribed_diameter(&self, e: usize) -> f64 {
        let ids = &self.elements[e];
        let (a, b, c) = (self.nodes[ids[0]], self.nodes[ids[1]], self.nodes[ids[2]]);
        let area = 0.5 * (b - a).perp(&(c - a)).abs();
        let perim = (b - a).norm() + (c - b).norm() + (a - c).norm();
        4.0 * area / perim
    }

    /// max element diameter over min inscribed diameter
    pub fn quasi_uniformity(&self) -> f64 {
        let min_in = (0..self.n_elements())
            .map(|e| self.inscribed_diameter(e))
            .fold(f64::INFINITY, f64::min);
        self.h / min_in
    }

    /// True when every element map is affine (straight edges).
    pub fn is_affine(&self) -> bool {
        if self.order == 1 {
            return true;
        }
        self.elements.iter().all(|e| {
            basis::EDGE_VERTICES.iter().enumerate().all(|(le, [a, b])| {
                let m = 0.5 * (self.nodes[e[*a]] + self.nodes[e[*b]]);
                (m - self.nodes[e[3 + le]]).norm() <= 1e-14 * (1.0 + m.norm())
            })
        })
    }

    /// Elements sharing at least one vertex with `e`, excluding `e`.
    pub fn vertex_neighbours(&self, e: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.elements[e][..3]
            .iter()
            .flat_map(|&v| self.node_elements[v].iter().copied())
            .filter(|&o| o != e)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Bucket grid over element bounding boxes for point location.
#[derive(Debug, Clone)]
pub struct Locator {
    origin: Vector2<f64>,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    pub fn new(mesh: &Mesh) -> Locator {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in mesh.nodes() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let cell = mesh.h().max(1e-12);
        let margin = 0.25 * cell;
        lo -= Vector2::repeat(margin);
        hi += Vector2::repeat(margin);
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for e in 0..mesh.n_elements() {
            let ids = mesh.element(e);
            let mut elo = Vector2::repeat(f64::INFINITY);
            let mut ehi = Vector2::repeat(f64::NEG_INFINITY);
            for &i in ids {
                elo = elo.inf(&mesh.node(i));
                ehi = ehi.sup(&mesh.node(i));
            }
            let pad = 0.1 * mesh.element_diameter(e);
            elo -= Vector2::repeat(pad);
            ehi += Vector2::repeat(pad);
            let (i0, j0) = Self::cell_of(lo, cell, nx, ny, elo);
            let (i1, j1) = Self::cell_of(lo, cell, nx, ny, ehi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(e);
                }
            }
        }
        Locator {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn cell_of(lo: Vector2<f64>, cell: f64, nx: usize, ny: usize, p: Vector2<f64>) -> (usize, usize) {
        let i = ((p.x - lo.x) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let j = ((p.y - lo.y) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (i, j)
    }

    pub fn candidates(&self, p: Vector2<f64>) -> &[usize] {
        let (i, j) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, p);
        &self.buckets[j * self.nx + i]
    }

    /// Finds `(elem, ξ)` with `map(elem, ξ) = target` and ξ in the reference
    /// triangle, by Newton iteration on every candidate element.
    pub fn locate<F>(&self, target: Vector2<f64>, map: F) -> Option<(usize, [f64; 2])>
    where
        F: Fn(usize, [f64; 2]) -> (Vector2<f64>, Matrix2<f64>),
    {
        let mut best: Option<(usize, [f64; 2], f64)> = None;
        for &e in self.candidates(target) {
            if let Some(xi) = invert_map(&map, e, target) {
                let out = outside_amount(xi);
                if out <= 1e-10 {
                    return Some((e, clamp_reference(xi)));
                }
                if out < 1e-7 && best.is_none_or(|b| out < b.2) {
                    best = Some((e, xi, out));
                }
            }
        }
        best.map(|(e, xi, _)| (e, clamp_reference(xi)))
    }
}

/// Newton inversion of an element map; `None` if it fails to converge.
pub fn invert_map<F>(map: &F, e: usize, target: Vector2<f64>) -> Option<[f64; 2]>
where
    F: Fn(usize, [f64; 2]) -> (Vector2<f64>, Matrix2<f64>),
{
    let mut xi = [1.0 / 3.0, 1.0 / 3.0];
    let (x0, j0) = map(e, xi);
    let scale = j0.norm().max(1e-300);
    let mut r = x0 - target;
    for _ in 0..40 {
        let (x, jac) = map(e, xi);
        r = x - target;
        if r.norm() <= 1e-14 * (1.0 + target.norm()) {
            return Some(xi);
        }
        let step = jac.try_inverse()? * r;
        xi[0] -= step.x;
        xi[1] -= step.y;
        if xi[0].abs() > 10.0 || xi[1].abs() > 10.0 {
            return None;
        }
    }
    (r.norm() <= 1e-11 * scale.max(1.0)).then_some(xi)
}

fn outside_amount(xi: [f64; 2]) -> f64 {
    let l = basis::barycentric(xi);
    l.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max)
}

fn clamp_reference(xi: [f64; 2]) -> [f64; 2] {
    let mut a = xi[0].max(0.0);
    let mut b = xi[1].max(0.0);
    let s = a + b;
    if s > 1.0 {
        a /= s;
        b /= s;
    }
    [a, b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::triangle_rule;

    fn area(mesh: &Mesh) -> f64 {
        let r = triangle_rule(2 * mesh.order() + 4).unwrap();
        (0..mesh.n_elements())
            .map(|e| {
                r.iter()
                    .map(|(xi, w)| w * mesh.map_point(e, xi).1.determinant())
                    .sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn square_n2_counts_and_area() {
        let m = build_square_mesh(2, 1).unwrap();
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.n_nodes(), 9);
        assert!((area(&m) - 1.0).abs() < 1e-14);
        assert_eq!(m.n_boundary_nodes(), 8);
        assert_eq!(m.n_interior_nodes(), 1);
    }

    #[test]
    fn square_n4_h() {
        let m = build_square_mesh(4, 1).unwrap();
        assert!((m.h() - 2f64.sqrt() / 4.0).abs() < 1e-15);
        let m2 = build_square_mesh(4, 2).unwrap();
        assert!((m2.h() - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(m2.is_affine());
    }

    #[test]
    fn square_jacobians_constant_positive() {
        for k in [1, 2] {
            let m = build_square_mesh(3, k).unwrap();
            for e in 0..m.n_elements() {
                let (_, j0) = m.map_point(e, [0.1, 0.2]);
                let (_, j1) = m.map_point(e, [0.6, 0.3]);
                assert!(j0.determinant() > 0.0);
                assert!((j0 - j1).norm() < 1e-14);
                assert!((j0.determinant() - 1.0 / 9.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn disk_boundary_on_circle() {
        for k in [1, 2] {
            let m = build_disk_mesh(0.5, k).unwrap();
            for &i in m.boundary_node_ids() {
                assert!((m.node(i).norm() - 1.0).abs() < 1e-12);
            }
            assert_eq!(m.n_boundary_nodes() + m.n_interior_nodes(), m.n_nodes());
        }
    }

    #[test]
    fn disk_p1_area_is_inscribed_polygon() {
        for n in [2, 3, 5, 8] {
            let m = build_disk_mesh_rings(n, 1).unwrap();
            let ng = m.n_boundary_nodes() as f64;
            let polygon = 0.5 * ng * (2.0 * PI / ng).sin();
            assert!((area(&m) - polygon).abs() < 1e-12);
        }
    }

    #[test]
    fn disk_area_converges_to_pi() {
        for k in [1usize, 2] {
            let errs: Vec<f64> = [4, 8, 16]
                .iter()
                .map(|&n| (area(&build_disk_mesh_rings(n, k).unwrap()) - PI).abs())
                .collect();
            for w in errs.windows(2) {
                // at least O(h^{k+1})
                assert!(w[1] < w[0] / 2f64.powi(k as i32 + 1) * 1.3, "{errs:?}");
            }
        }
    }

    #[test]
    fn disk_counts_and_refinement() {
        let m = build_disk_mesh_rings(4, 1).unwrap();
        assert_eq!(m.n_elements(), 6 * 16);
        assert_eq!(m.n_nodes(), 1 + 3 * 4 * 5);
        let f = m.refined(1).unwrap();
        assert_eq!(f.n_elements(), 4 * m.n_elements());
        let ratio = m.h() / f.h();
        assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5);
    }

    #[test]
    fn disk_quasi_uniform_across_levels() {
        for k in [1, 2] {
            for n in [2, 4, 8, 16] {
                let q = build_disk_mesh_rings(n, k).unwrap().quasi_uniformity();
                assert!(q < 8.0, "n={n} q={q}");
            }
        }
    }

    #[test]
    fn target_h_checks() {
        assert!(build_disk_mesh(0.6, 1).is_err());
        assert!(build_disk_mesh(0.0, 1).is_err());
        let m = build_disk_mesh(0.2, 2).unwrap();
        assert!(m.h() < 0.4 && m.h() > 0.1, "h={}", m.h());
        assert!(matches!(build_square_mesh(2, 3), Err(MeshError::UnsupportedOrder(3))));
    }

    #[test]
    fn p2_boundary_midpoint_on_circle() {
        let m = build_disk_mesh_rings(3, 2).unwrap();
        for f in 0..m.boundary_faces().len() {
            let (e, le) = m.face_owner(f);
            let (x, _) = m.geometry_map(e, basis::edge_point(le, 0.5)).unwrap();
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
        assert!(m.geometry_map(m.n_elements(), [0.0, 0.0]).is_err());
    }

    #[test]
    fn vertex_maps_to_first_node() {
        let m = build_disk_mesh_rings(3, 2).unwrap();
        for e in 0..m.n_elements() {
            let (x, _) = m.map_point(e, [0.0, 0.0]);
            assert!((x - m.node(m.element(e)[0])).norm() < 1e-15);
        }
    }

    #[test]
    fn json_round_trip() {
        let m = build_disk_mesh_rings(3, 2).unwrap();
        let back = Mesh::from_json(&m.to_json()).unwrap();
        assert_eq!(back.to_document(), m.to_document());
        assert_eq!(back.boundary_node_ids(), m.boundary_node_ids());
        assert!((back.h() - m.h()).abs() < 1e-15);
        assert!(back.refined(1).is_err());
    }

    #[test]
    fn hausdorff_distance_rate_k2() {
        let mut hs = Vec::new();
        let mut ds = Vec::new();
        for n in [2, 4, 8, 16] {
            let m = build_disk_mesh_rings(n, 2).unwrap();
            let mut d: f64 = 0.0;
            for f in 0..m.boundary_faces().len() {
                for s in 0..100 {
                    let (x, _) = m.face_point(f, (s as f64 + 0.5) / 100.0);
                    d = d.max((x.norm() - 1.0).abs());
                }
            }
            hs.push(m.h());
            ds.push(d);
        }
        let slope = crate::harness::fit_rate(&hs.iter().copied().zip(ds.iter().copied()).collect::<Vec<_>>())
            .unwrap()
            .0;
        assert!(slope >= 2.5, "slope {slope}");
    }

    #[test]
    fn locator_finds_points() {
        let m = build_disk_mesh_rings(4, 2).unwrap();
        let loc = Locator::new(&m);
        for e in (0..m.n_elements()).step_by(7) {
            let (x, _) = m.map_point(e, [0.2, 0.3]);
            let (f, xi) = loc.locate(x, |e, xi| m.map_point(e, xi)).unwrap();
            let (y, _) = m.map_point(f, xi);
            assert!((x - y).norm() < 1e-12);
        }
        assert!(loc.locate(Vector2::new(3.0, 0.0), |e, xi| m.map_point(e, xi)).is_none());
    }
}
