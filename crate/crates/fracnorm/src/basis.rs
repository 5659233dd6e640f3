//! Lagrange shape functions of order 1 and 2 on the reference triangle and
//! the reference edge.
//!
//! Local node order on the triangle: vertices `(0,0)`, `(1,0)`, `(0,1)`, then
//! the midpoints of edges 0–1, 1–2 and 2–0. On an edge: the two endpoints,
//! then the midpoint.

/// Reference vertex coordinates.
pub const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Local vertex pairs of the three triangle edges; edge `e` carries the
/// midpoint node `3 + e` for order 2.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

pub fn nodes_per_triangle(order: usize) -> usize {
    match order {
        1 => 3,
        2 => 6,
        _ => panic!("unsupported order {order}"),
    }
}

pub fn nodes_per_edge(order: usize) -> usize {
    order + 1
}

/// Reference coordinates of the local nodes.
pub fn reference_nodes(order: usize) -> Vec<[f64; 2]> {
    let mut out = REF_VERTICES.to_vec();
    if order == 2 {
        for [a, b] in EDGE_VERTICES {
            let p = REF_VERTICES[a];
            let q = REF_VERTICES[b];
            out.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
        }
    }
    out
}

pub fn barycentric(xi: [f64; 2]) -> [f64; 3] {
    [1.0 - xi[0] - xi[1], xi[0], xi[1]]
}

const BARY_GRAD: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

pub fn barycentric_gradients() -> [[f64; 2]; 3] {
    BARY_GRAD
}

/// Values of all local shape functions at `xi`.
pub fn shape_values(order: usize, xi: [f64; 2], out: &mut [f64]) {
    let l = barycentric(xi);
    match order {
        1 => out[..3].copy_from_slice(&l),
        2 => {
            for i in 0..3 {
                out[i] = l[i] * (2.0 * l[i] - 1.0);
            }
            for (e, [a, b]) in EDGE_VERTICES.iter().enumerate() {
                out[3 + e] = 4.0 * l[*a] * l[*b];
            }
        }
        _ => panic!("unsupported order {order}"),
    }
}

/// Reference gradients `∂/∂ξ, ∂/∂η` of all local shape functions at `xi`.
pub fn shape_gradients(order: usize, xi: [f64; 2], out: &mut [[f64; 2]]) {
    match order {
        1 => out[..3].copy_from_slice(&BARY_GRAD),
        2 => {
            let l = barycentric(xi);
            for i in 0..3 {
                let f = 4.0 * l[i] - 1.0;
                out[i] = [f * BARY_GRAD[i][0], f * BARY_GRAD[i][1]];
            }
            for (e, [a, b]) in EDGE_VERTICES.iter().enumerate() {
                let (a, b) = (*a, *b);
                out[3 + e] = [
                    4.0 * (BARY_GRAD[a][0] * l[b] + l[a] * BARY_GRAD[b][0]),
                    4.0 * (BARY_GRAD[a][1] * l[b] + l[a] * BARY_GRAD[b][1]),
                ];
            }
        }
        _ => panic!("unsupported order {order}"),
    }
}

/// Edge shape functions at `t ∈ [0,1]`, ordered start, end, midpoint.
pub fn edge_values(order: usize, t: f64, out: &mut [f64]) {
    match order {
        1 => {
            out[0] = 1.0 - t;
            out[1] = t;
        }
        2 => {
            out[0] = (1.0 - t) * (1.0 - 2.0 * t);
            out[1] = t * (2.0 * t - 1.0);
            out[2] = 4.0 * t * (1.0 - t);
        }
        _ => panic!("unsupported order {order}"),
    }
}

pub fn edge_derivatives(order: usize, t: f64, out: &mut [f64]) {
    match order {
        1 => {
            out[0] = -1.0;
            out[1] = 1.0;
        }
        2 => {
            out[0] = 4.0 * t - 3.0;
            out[1] = 4.0 * t - 1.0;
            out[2] = 4.0 - 8.0 * t;
        }
        _ => panic!("unsupported order {order}"),
    }
}

/// Local triangle node indices lying on local edge `e`, in edge order.
pub fn edge_local_nodes(order: usize, e: usize) -> Vec<usize> {
    let [a, b] = EDGE_VERTICES[e];
    if order == 2 {
        vec![a, b, 3 + e]
    } else {
        vec![a, b]
    }
}

/// Reference point at parameter `t` along local edge `e`.
pub fn edge_point(e: usize, t: f64) -> [f64; 2] {
    let [a, b] = EDGE_VERTICES[e];
    let p = REF_VERTICES[a];
    let q = REF_VERTICES[b];
    [(1.0 - t) * p[0] + t * q[0], (1.0 - t) * p[1] + t * q[1]]
}
