//! Plane-stress finite elements on structured triangular meshes.
//!
//! Linear (3-node) and quadratic (6-node) triangles with two displacement
//! DOF per node, ordered `[u_x(0), u_y(0), u_x(1), ...]`. Mass matrices are
//! consistent.

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SecondOrderModel;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material<T: Real> {
    /// Pa
    pub youngs_modulus: T,
    pub poisson_ratio: T,
    /// kg/m³
    pub density: T,
    /// m
    pub thickness: T,
}

impl<T: Real> Material<T> {
    pub fn new(youngs_modulus: T, poisson_ratio: T, density: T, thickness: T) -> Result<Self> {
        let m = Self {
            youngs_modulus,
            poisson_ratio,
            density,
            thickness,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.youngs_modulus > T::zero()
            && self.poisson_ratio >= T::zero()
            && self.poisson_ratio < T::lit(0.5)
            && self.density > T::zero()
            && self.thickness > T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMesh(format!(
                "material out of range: E={}, nu={}, rho={}, t={}",
                self.youngs_modulus.as_f64(),
                self.poisson_ratio.as_f64(),
                self.density.as_f64(),
                self.thickness.as_f64()
            )))
        }
    }

    /// Plane-stress constitutive matrix.
    pub fn plane_stress(&self) -> SMatrix<T, 3, 3> {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        let f = e / (T::one() - nu * nu);
        let half = (T::one() - nu) * T::lit(0.5);
        SMatrix::<T, 3, 3>::new(f, f * nu, T::zero(), f * nu, f, T::zero(), T::zero(), T::zero(), f * half)
    }
}

/// Triangular mesh. Quadratic elements list corners then the mid-side
/// nodes of edges (0,1), (1,2), (2,0).
#[derive(Debug, Clone)]
pub struct Mesh2D<T: Real> {
    pub nodes: Vec<[T; 2]>,
    pub elements: Vec<Vec<usize>>,
    pub order: u8,
}

impl<T: Real> Mesh2D<T> {
    pub fn validate(&self) -> Result<()> {
        let per = match self.order {
            1 => 3,
            2 => 6,
            o => return Err(Error::InvalidMesh(format!("unsupported element order {o}"))),
        };
        let scale = self
            .nodes
            .iter()
            .flat_map(|p| [p[0].abs(), p[1].abs()])
            .fold(T::one(), |a, b| if b > a { b } else { a });
        for (e, conn) in self.elements.iter().enumerate() {
            if conn.len() != per {
                return Err(Error::InvalidMesh(format!(
                    "element {e} has {} nodes, expected {per}",
                    conn.len()
                )));
            }
            if let Some(&bad) = conn.iter().find(|&&i| i >= self.nodes.len()) {
                return Err(Error::InvalidMesh(format!("element {e} references node {bad}")));
            }
            let a = self.element_area(e);
            if !(a > T::zero()) {
                return Err(Error::DegenerateElement {
                    element: e,
                    jacobian: (a * T::lit(2.0)).as_f64(),
                });
            }
            if per == 6 {
                for (mid, (i, j)) in [(3, (0, 1)), (4, (1, 2)), (5, (2, 0))] {
                    let (pi, pj, pm) = (self.nodes[conn[i]], self.nodes[conn[j]], self.nodes[conn[mid]]);
                    let dx = (pi[0] + pj[0]) * T::lit(0.5) - pm[0];
                    let dy = (pi[1] + pj[1]) * T::lit(0.5) - pm[1];
                    if dx.abs() + dy.abs() > T::lit(1e-9) * scale {
                        return Err(Error::InvalidMesh(format!(
                            "element {e}: mid-side node {} is off the edge midpoint",
                            conn[mid]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Signed area of the corner triangle (shoelace).
    pub fn element_area(&self, e: usize) -> T {
        let c = &self.elements[e];
        let (a, b, d) = (self.nodes[c[0]], self.nodes[c[1]], self.nodes[c[2]]);
        ((b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1])) * T::lit(0.5)
    }

    pub fn n_dof(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn translated(mut self, dx: T, dy: T) -> Self {
        for p in &mut self.nodes {
            p[0] += dx;
            p[1] += dy;
        }
        self
    }

    /// Reflects about the y axis, keeping counter-clockwise orientation.
    pub fn mirrored_x(mut self) -> Self {
        for p in &mut self.nodes {
            p[0] = -p[0];
        }
        for conn in &mut self.elements {
            *conn = if conn.len() == 6 {
                vec![conn[0], conn[2], conn[1], conn[5], conn[4], conn[3]]
            } else {
                vec![conn[0], conn[2], conn[1]]
            };
        }
        self
    }

    /// Index of the node closest to `point` (lowest index on ties).
    pub fn nearest_node(&self, point: [T; 2]) -> usize {
        let mut best = (0, T::max_value().unwrap());
        for (i, p) in self.nodes.iter().enumerate() {
            let d = (p[0] - point[0]) * (p[0] - point[0]) + (p[1] - point[1]) * (p[1] - point[1]);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Nodes inside the closed box `[xmin, ymin, xmax, ymax]`.
    pub fn nodes_in_box(&self, bbox: [T; 4]) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, p)| p[0] >= bbox[0] && p[0] <= bbox[2] && p[1] >= bbox[1] && p[1] <= bbox[3])
            .map(|(i, _)| i)
            .collect()
    }
}

fn check_order(order: u8) -> Result<usize> {
    match order {
        1 | 2 => Ok(order as usize),
        o => Err(Error::InvalidMesh(format!("unsupported element order {o}"))),
    }
}

/// Element connectivity from corner coordinates on a fine lattice where
/// corners sit on multiples of `sub`.
fn lattice_element(sub: usize, corners: [(usize, usize); 3], id: &dyn Fn(usize, usize) -> usize) -> Vec<usize> {
    let mut conn: Vec<usize> = corners.iter().map(|&(i, j)| id(i, j)).collect();
    if sub == 2 {
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let (pa, pb) = (corners[a], corners[b]);
            conn.push(id((pa.0 + pb.0) / 2, (pa.1 + pb.1) / 2));
        }
    }
    conn
}

/// Structured triangulation of `[0, width] × [0, height]`: every cell is cut
/// along its rising diagonal into two triangles.
pub fn mesh_rectangle<T: Real>(width: T, height: T, nx: usize, ny: usize, order: u8) -> Result<Mesh2D<T>> {
    let sub = check_order(order)?;
    if !(width > T::zero() && height > T::zero()) || nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh("rectangle needs positive size and divisions".into()));
    }
    let (gx, gy) = (sub * nx, sub * ny);
    let mut nodes = Vec::with_capacity((gx + 1) * (gy + 1));
    for j in 0..=gy {
        for i in 0..=gx {
            nodes.push([
                width * T::from_usize(i).unwrap() / T::from_usize(gx).unwrap(),
                height * T::from_usize(j).unwrap() / T::from_usize(gy).unwrap(),
            ]);
        }
    }
    let id = move |i: usize, j: usize| j * (gx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for cy in 0..ny {
        for cx in 0..nx {
            let (x0, y0, x1, y1) = (sub * cx, sub * cy, sub * (cx + 1), sub * (cy + 1));
            elements.push(lattice_element(sub, [(x0, y0), (x1, y0), (x1, y1)], &id));
            elements.push(lattice_element(sub, [(x0, y0), (x1, y1), (x0, y1)], &id));
        }
    }
    let mesh = Mesh2D { nodes, elements, order };
    mesh.validate()?;
    Ok(mesh)
}

/// Structured triangulation of the right triangle with legs `base` along
/// +x and `height` along +y, right angle at the origin; `n²` elements.
pub fn mesh_right_triangle<T: Real>(base: T, height: T, n: usize, order: u8) -> Result<Mesh2D<T>> {
    let sub = check_order(order)?;
    if !(base > T::zero() && height > T::zero()) || n == 0 {
        return Err(Error::InvalidMesh("triangle needs positive size and divisions".into()));
    }
    let g = sub * n;
    let gg = T::from_usize(g).unwrap();
    let mut index = vec![vec![usize::MAX; g + 1]; g + 1];
    let mut nodes = Vec::new();
    for j in 0..=g {
        for i in 0..=(g - j) {
            index[i][j] = nodes.len();
            nodes.push([
                base * T::from_usize(i).unwrap() / gg,
                height * T::from_usize(j).unwrap() / gg,
            ]);
        }
    }
    let id = move |i: usize, j: usize| index[i][j];
    let mut elements = Vec::with_capacity(n * n);
    for cy in 0..n {
        for cx in 0..(n - cy) {
            let (x0, y0, x1, y1) = (sub * cx, sub * cy, sub * (cx + 1), sub * (cy + 1));
            elements.push(lattice_element(sub, [(x0, y0), (x1, y0), (x0, y1)], &id));
            if cx + cy + 1 < n {
                elements.push(lattice_element(sub, [(x1, y0), (x1, y1), (x0, y1)], &id));
            }
        }
    }
    let mesh = Mesh2D { nodes, elements, order };
    mesh.validate()?;
    Ok(mesh)
}

/// Symmetric 3-point rule, exact for quadratics: (L1, L2, L3, weight).
const GAUSS3: [(f64, f64, f64, f64); 3] = [
    (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0),
    (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0),
    (1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0),
];

/// Symmetric 6-point rule, exact for quartics.
const GAUSS6: [(f64, f64, f64, f64); 6] = [
    (0.108_103_018_168_070, 0.445_948_490_915_965, 0.445_948_490_915_965, 0.223_381_589_678_011),
    (0.445_948_490_915_965, 0.108_103_018_168_070, 0.445_948_490_915_965, 0.223_381_589_678_011),
    (0.445_948_490_915_965, 0.445_948_490_915_965, 0.108_103_018_168_070, 0.223_381_589_678_011),
    (0.816_847_572_980_459, 0.091_576_213_509_771, 0.091_576_213_509_771, 0.109_951_743_655_322),
    (0.091_576_213_509_771, 0.816_847_572_980_459, 0.091_576_213_509_771, 0.109_951_743_655_322),
    (0.091_576_213_509_771, 0.091_576_213_509_771, 0.816_847_572_980_459, 0.109_951_743_655_322),
];

/// Quadratic shape functions and their area-coordinate derivatives.
fn t6_shape<T: Real>(l: [T; 3]) -> ([T; 6], [[T; 3]; 6]) {
    let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));
    let z = T::zero();
    let n = [
        l[0] * (two * l[0] - one),
        l[1] * (two * l[1] - one),
        l[2] * (two * l[2] - one),
        four * l[0] * l[1],
        four * l[1] * l[2],
        four * l[2] * l[0],
    ];
    let d = [
        [four * l[0] - one, z, z],
        [z, four * l[1] - one, z],
        [z, z, four * l[2] - one],
        [four * l[1], four * l[0], z],
        [z, four * l[2], four * l[1]],
        [four * l[2], z, four * l[0]],
    ];
    (n, d)
}

/// Element stiffness and consistent mass, `2·nodes` square each.
pub fn element_matrices<T: Real>(
    mesh: &Mesh2D<T>,
    element: usize,
    material: &Material<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let conn = &mesh.elements[element];
    let area = mesh.element_area(element);
    if !(area > T::zero()) {
        return Err(Error::DegenerateElement {
            element,
            jacobian: (area * T::lit(2.0)).as_f64(),
        });
    }
    let p: Vec<[T; 2]> = conn.iter().take(3).map(|&i| mesh.nodes[i]).collect();
    // ∂L_i/∂x = b_i / 2A, ∂L_i/∂y = c_i / 2A
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let two_a = area * T::lit(2.0);
    let d = material.plane_stress();
    let t = material.thickness;
    let rho_t = material.density * t;
    let nn = conn.len();
    let ndof = 2 * nn;
    let mut ke = DMatrix::zeros(ndof, ndof);
    let mut me = DMatrix::zeros(ndof, ndof);

    let strain_matrix = |dndx: &[T], dndy: &[T]| {
        let mut bm = DMatrix::zeros(3, ndof);
        for a in 0..nn {
            bm[(0, 2 * a)] = dndx[a];
            bm[(1, 2 * a + 1)] = dndy[a];
            bm[(2, 2 * a)] = dndy[a];
            bm[(2, 2 * a + 1)] = dndx[a];
        }
        bm
    };
    let dmat = DMatrix::from_fn(3, 3, |i, j| d[(i, j)]);

    if nn == 3 {
        let dndx: Vec<T> = b.iter().map(|v| *v / two_a).collect();
        let dndy: Vec<T> = c.iter().map(|v| *v / two_a).collect();
        let bm = strain_matrix(&dndx, &dndy);
        ke = bm.transpose() * &dmat * &bm * (t * area);
        let f = rho_t * area / T::lit(12.0);
        for a in 0..3 {
            for bb in 0..3 {
                let v = if a == bb { f * T::lit(2.0) } else { f };
                me[(2 * a, 2 * bb)] = v;
                me[(2 * a + 1, 2 * bb + 1)] = v;
            }
        }
        return Ok((ke, me));
    }

    for &(l1, l2, l3, w) in &GAUSS3 {
        let (_, dl) = t6_shape([T::lit(l1), T::lit(l2), T::lit(l3)]);
        let dndx: Vec<T> = dl
            .iter()
            .map(|g| (g[0] * b[0] + g[1] * b[1] + g[2] * b[2]) / two_a)
            .collect();
        let dndy: Vec<T> = dl
            .iter()
            .map(|g| (g[0] * c[0] + g[1] * c[1] + g[2] * c[2]) / two_a)
            .collect();
        let bm = strain_matrix(&dndx, &dndy);
        ke += bm.transpose() * &dmat * &bm * (t * area * T::lit(w));
    }
    for &(l1, l2, l3, w) in &GAUSS6 {
        let (n, _) = t6_shape([T::lit(l1), T::lit(l2), T::lit(l3)]);
        let f = rho_t * area * T::lit(w);
        for a in 0..6 {
            for bb in 0..6 {
                let v = f * n[a] * n[bb];
                me[(2 * a, 2 * bb)] += v;
                me[(2 * a + 1, 2 * bb + 1)] += v;
            }
        }
    }
    Ok((ke, me))
}

/// Global stiffness and consistent mass of an unconstrained plane-stress
/// body. Damping is zero; inputs and outputs are empty.
pub fn assemble_plane_stress<T: Real>(mesh: &Mesh2D<T>, material: &Material<T>) -> Result<SecondOrderModel<T>> {
    mesh.validate()?;
    material.validate()?;
    let n = mesh.n_dof();
    let mut k = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    for e in 0..mesh.elements.len() {
        let (ke, me) = element_matrices(mesh, e, material)?;
        let dofs: Vec<usize> = mesh.elements[e]
            .iter()
            .flat_map(|&node| [2 * node, 2 * node + 1])
            .collect();
        for (a, &ga) in dofs.iter().enumerate() {
            for (b, &gb) in dofs.iter().enumerate() {
                k[(ga, gb)] += ke[(a, b)];
                m[(ga, gb)] += me[(a, b)];
            }
        }
    }
    let k = crate::linalg::symmetrize(&k);
    let m = crate::linalg::symmetrize(&m);
    let labels = (0..mesh.nodes.len())
        .flat_map(|i| [format!("n{i}.x"), format!("n{i}.y")])
        .collect();
    SecondOrderModel::new(m, DMatrix::zeros(n, n), k, DMatrix::zeros(n, 0), DMatrix::zeros(0, n))?
        .with_labels(labels)
}

/// Indices kept after removing `fixed` from `0..n`.
pub fn free_dofs(n: usize, fixed: &[usize]) -> Vec<usize> {
    let mut is_fixed = vec![false; n];
    for &i in fixed {
        if i < n {
            is_fixed[i] = true;
        }
    }
    (0..n).filter(|&i| !is_fixed[i]).collect()
}

/// Removes the rows and columns of `fixed_dofs` from every matrix and map.
pub fn apply_dirichlet<T: Real>(model: &SecondOrderModel<T>, fixed_dofs: &[usize]) -> Result<SecondOrderModel<T>> {
    if let Some(&bad) = fixed_dofs.iter().find(|&&i| i >= model.n()) {
        return Err(Error::InvalidModel(format!("fixed DOF {bad} out of range")));
    }
    let keep = free_dofs(model.n(), fixed_dofs);
    let sub = |a: &DMatrix<T>| a.select_rows(&keep).select_columns(&keep);
    let labels = keep.iter().map(|&i| model.dof_labels()[i].clone()).collect();
    SecondOrderModel::new_unchecked(
        sub(model.mass()),
        sub(model.damping()),
        sub(model.stiffness()),
        model.input_map().select_rows(&keep),
        model.output_map().select_columns(&keep),
    )?
    .with_labels(labels)
}

/// Displacement direction at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    X,
    Y,
}

/// Picks a scalar measurement (and, reciprocally, a load) on a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DofSelector {
    /// Horizontal displacement of the node nearest to `at`.
    Ux { at: [f64; 2] },
    /// Vertical displacement of the node nearest to `at`.
    Uy { at: [f64; 2] },
    /// In-plane rotation from two marker nodes: `θ ≈ n·(u(P₂) − u(P₁))/d`
    /// with `n` the unit normal to `P₁→P₂`; its conjugate load is the
    /// equal-and-opposite force pair.
    Rot { from: [f64; 2], to: [f64; 2] },
    /// Raw DOF index of a matrix-defined component.
    Dof { index: usize },
}

/// Plane-stress component: mesh, material and Dirichlet constraints, with
/// the map from mesh DOF to constrained-model DOF.
#[derive(Debug, Clone)]
pub struct FeComponent<T: Real> {
    pub mesh: Mesh2D<T>,
    pub material: Material<T>,
    pub model: SecondOrderModel<T>,
    dof_map: Vec<Option<usize>>,
}

impl<T: Real> FeComponent<T> {
    /// Assembles and removes every DOF of the nodes listed in `fixed_nodes`.
    pub fn new(mesh: Mesh2D<T>, material: Material<T>, fixed_nodes: &[usize]) -> Result<Self> {
        let full = assemble_plane_stress(&mesh, &material)?;
        let fixed: Vec<usize> = fixed_nodes.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect();
        let model = apply_dirichlet(&full, &fixed)?;
        let keep = free_dofs(full.n(), &fixed);
        let mut dof_map = vec![None; full.n()];
        for (r, &i) in keep.iter().enumerate() {
            dof_map[i] = Some(r);
        }
        Ok(Self {
            mesh,
            material,
            model,
            dof_map,
        })
    }

    /// Constrained-model index of a nodal DOF, `None` if fixed.
    pub fn dof(&self, node: usize, dir: Direction) -> Option<usize> {
        let raw = 2 * node + usize::from(dir == Direction::Y);
        self.dof_map.get(raw).copied().flatten()
    }

    /// Selection vector `g` (length `n`): output `y = gᵀq`, load `B = g`.
    pub fn channel(&self, selector: &DofSelector) -> Result<DVector<T>> {
        let n = self.model.n();
        let mut g = DVector::zeros(n);
        let mut put = |node: usize, dir: Direction, w: T| -> Result<()> {
            let idx = self.dof(node, dir).ok_or_else(|| {
                Error::Config(format!("selector {selector:?} hits constrained node {node}"))
            })?;
            g[idx] += w;
            Ok(())
        };
        let lit2 = |p: [f64; 2]| [T::lit(p[0]), T::lit(p[1])];
        match selector {
            DofSelector::Ux { at } => put(self.mesh.nearest_node(lit2(*at)), Direction::X, T::one())?,
            DofSelector::Uy { at } => put(self.mesh.nearest_node(lit2(*at)), Direction::Y, T::one())?,
            DofSelector::Rot { from, to } => {
                let a = self.mesh.nearest_node(lit2(*from));
                let b = self.mesh.nearest_node(lit2(*to));
                if a == b {
                    return Err(Error::Config(format!("rotation markers of {selector:?} coincide")));
                }
                let (pa, pb) = (self.mesh.nodes[a], self.mesh.nodes[b]);
                let (ex, ey) = (pb[0] - pa[0], pb[1] - pa[1]);
                let d2 = ex * ex + ey * ey;
                // n = perp(e)/|e|, divided by d once more: n/d = perp(P₂−P₁)/d²
                let (nx, ny) = (-ey / d2, ex / d2);
                put(b, Direction::X, nx)?;
                put(b, Direction::Y, ny)?;
                put(a, Direction::X, -nx)?;
                put(a, Direction::Y, -ny)?;
            }
            DofSelector::Dof { index } => {
                if *index >= n {
                    return Err(Error::Config(format!("DOF index {index} out of range 0..{n}")));
                }
                g[*index] = T::one();
            }
        }
        Ok(g)
    }
}
