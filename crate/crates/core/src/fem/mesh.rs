use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Displacement component at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Structured grid of rectangular Q4 elements, possibly with inactive cells.
///
/// Cells are addressed by `(i, j)` with `i` counting columns from the left and `j`
/// rows from the bottom. Elements are numbered column by column from the leftmost
/// column, top to bottom within a column. Nodes sit on the `(nx+1) x (ny+1)` grid
/// and only nodes touched by an active cell exist.
#[derive(Debug, Clone)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    elem_w: f64,
    elem_h: f64,
    cells: Vec<(usize, usize)>,
    cell_elem: Vec<Option<usize>>,
    grid_node: Vec<Option<usize>>,
    node_grid: Vec<(usize, usize)>,
    node_dofs: Vec<[Option<usize>; 2]>,
    n_dofs: usize,
    connectivity: Vec<[usize; 4]>,
    elem_dofs: Vec<Vec<usize>>,
    elem_local: Vec<Vec<usize>>,
    elem_mask: Vec<u8>,
    neighbors: Vec<Vec<usize>>,
}

/// Builder for [`Mesh`].
#[derive(Debug, Clone)]
pub struct MeshBuilder {
    nx: usize,
    ny: usize,
    elem_w: f64,
    elem_h: f64,
    active: Vec<bool>,
    fixed: BTreeSet<((usize, usize), Axis)>,
}

impl MeshBuilder {
    pub fn new(nx: usize, ny: usize, elem_w: f64, elem_h: f64) -> Self {
        Self { nx, ny, elem_w, elem_h, active: vec![true; nx * ny], fixed: BTreeSet::new() }
    }

    /// Keeps only the cells for which `keep(i, j)` holds.
    pub fn active(mut self, keep: impl Fn(usize, usize) -> bool) -> Self {
        for i in 0..self.nx {
            for j in 0..self.ny {
                self.active[i * self.ny + j] = keep(i, j);
            }
        }
        self
    }

    /// Fixes one component of grid node `(i, j)`.
    pub fn fix(mut self, i: usize, j: usize, axis: Axis) -> Self {
        self.fixed.insert(((i, j), axis));
        self
    }

    pub fn fix_both(self, i: usize, j: usize) -> Self {
        self.fix(i, j, Axis::X).fix(i, j, Axis::Y)
    }

    pub fn build(self) -> Result<Mesh> {
        let MeshBuilder { nx, ny, elem_w, elem_h, active, fixed } = self;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput(format!("empty grid {nx}x{ny}")));
        }
        if !(elem_w > 0.0 && elem_h > 0.0 && elem_w.is_finite() && elem_h.is_finite()) {
            return Err(Error::InvalidInput(format!("element size must be positive, got {elem_w}x{elem_h}")));
        }
        let gn = |i: usize, j: usize| i * (ny + 1) + j;

        let mut cells = Vec::new();
        let mut cell_elem = vec![None; nx * ny];
        for i in 0..nx {
            for j in (0..ny).rev() {
                if active[i * ny + j] {
                    cell_elem[i * ny + j] = Some(cells.len());
                    cells.push((i, j));
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::InvalidInput("mesh has no active cells".into()));
        }

        let mut touched = vec![false; (nx + 1) * (ny + 1)];
        for &(i, j) in &cells {
            for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                touched[gn(a, b)] = true;
            }
        }
        let mut grid_node = vec![None; touched.len()];
        let mut node_grid = Vec::new();
        for i in 0..=nx {
            for j in 0..=ny {
                if touched[gn(i, j)] {
                    grid_node[gn(i, j)] = Some(node_grid.len());
                    node_grid.push((i, j));
                }
            }
        }

        let mut is_fixed = vec![[false; 2]; node_grid.len()];
        for &((i, j), axis) in &fixed {
            let node = (i <= nx && j <= ny)
                .then(|| grid_node[gn(i, j)])
                .flatten()
                .ok_or_else(|| Error::InvalidInput(format!("support on missing node ({i}, {j})")))?;
            is_fixed[node][axis.index()] = true;
        }
        let mut node_dofs = vec![[None; 2]; node_grid.len()];
        let mut n_dofs = 0;
        for (node, dofs) in node_dofs.iter_mut().enumerate() {
            for c in 0..2 {
                if !is_fixed[node][c] {
                    dofs[c] = Some(n_dofs);
                    n_dofs += 1;
                }
            }
        }
        if n_dofs == 0 {
            return Err(Error::InvalidInput("every degree of freedom is fixed".into()));
        }

        let mut connectivity = Vec::with_capacity(cells.len());
        let mut elem_dofs = Vec::with_capacity(cells.len());
        let mut elem_local = Vec::with_capacity(cells.len());
        let mut elem_mask = Vec::with_capacity(cells.len());
        for &(i, j) in &cells {
            let nodes = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)].map(|(a, b)| grid_node[gn(a, b)].unwrap());
            let mut dofs = Vec::with_capacity(8);
            let mut local = Vec::with_capacity(8);
            let mut mask = 0u8;
            for (a, &node) in nodes.iter().enumerate() {
                for c in 0..2 {
                    if let Some(d) = node_dofs[node][c] {
                        dofs.push(d);
                        local.push(2 * a + c);
                        mask |= 1 << (2 * a + c);
                    }
                }
            }
            connectivity.push(nodes);
            elem_dofs.push(dofs);
            elem_local.push(local);
            elem_mask.push(mask);
        }

        // Elements sharing at least one node.
        let mut node_elems = vec![Vec::new(); node_grid.len()];
        for (e, nodes) in connectivity.iter().enumerate() {
            for &n in nodes {
                node_elems[n].push(e);
            }
        }
        let neighbors = connectivity
            .iter()
            .enumerate()
            .map(|(e, nodes)| {
                let set: BTreeSet<usize> =
                    nodes.iter().flat_map(|&n| node_elems[n].iter().copied()).filter(|&o| o != e).collect();
                set.into_iter().collect()
            })
            .collect();

        Ok(Mesh {
            nx,
            ny,
            elem_w,
            elem_h,
            cells,
            cell_elem,
            grid_node,
            node_grid,
            node_dofs,
            n_dofs,
            connectivity,
            elem_dofs,
            elem_local,
            elem_mask,
            neighbors,
        })
    }
}

impl Mesh {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn elem_w(&self) -> f64 {
        self.elem_w
    }

    pub fn elem_h(&self) -> f64 {
        self.elem_h
    }

    pub fn n_elements(&self) -> usize {
        self.cells.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_grid.len()
    }

    /// Count of unconstrained DOFs.
    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn element_cell(&self, e: usize) -> (usize, usize) {
        self.cells[e]
    }

    pub fn element_at(&self, i: usize, j: usize) -> Option<usize> {
        if i < self.nx && j < self.ny {
            self.cell_elem[i * self.ny + j]
        } else {
            None
        }
    }

    pub fn node_at(&self, i: usize, j: usize) -> Option<usize> {
        if i <= self.nx && j <= self.ny {
            self.grid_node[i * (self.ny + 1) + j]
        } else {
            None
        }
    }

    pub fn node_grid(&self, node: usize) -> (usize, usize) {
        self.node_grid[node]
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.node_grid[node];
        (i as f64 * self.elem_w, j as f64 * self.elem_h)
    }

    /// Global DOF of a node component, `None` when fixed.
    pub fn dof(&self, node: usize, axis: Axis) -> Option<usize> {
        self.node_dofs[node][axis.index()]
    }

    /// Nodes of element `e`, counterclockwise from the lower-left corner.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        self.connectivity[e]
    }

    /// Free global DOFs of element `e`, in local order.
    pub fn element_dofs(&self, e: usize) -> &[usize] {
        &self.elem_dofs[e]
    }

    /// Local positions (0..8) matching [`Mesh::element_dofs`].
    pub fn element_local(&self, e: usize) -> &[usize] {
        &self.elem_local[e]
    }

    /// Bitmask of the free local positions.
    pub fn element_free_mask(&self, e: usize) -> u8 {
        self.elem_mask[e]
    }

    /// Elements sharing at least one node with `e`.
    pub fn neighbors(&self, e: usize) -> &[usize] {
        &self.neighbors[e]
    }

    pub fn centroid(&self, e: usize) -> (f64, f64) {
        let (i, j) = self.cells[e];
        ((i as f64 + 0.5) * self.elem_w, (j as f64 + 0.5) * self.elem_h)
    }

    /// Elements touching a node.
    pub fn node_elements(&self, node: usize) -> Vec<usize> {
        let (i, j) = self.node_grid[node];
        let mut out = Vec::with_capacity(4);
        for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            if i >= di && j >= dj {
                if let Some(e) = self.element_at(i - di, j - dj) {
                    out.push(e);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbering_is_column_major_top_down() {
        let m = MeshBuilder::new(2, 3, 1.0, 1.0).fix_both(0, 0).build().unwrap();
        assert_eq!(m.n_elements(), 6);
        assert_eq!(m.element_cell(0), (0, 2));
        assert_eq!(m.element_cell(2), (0, 0));
        assert_eq!(m.element_cell(3), (1, 2));
        assert_eq!(m.element_at(1, 0), Some(5));
    }

    #[test]
    fn fixed_dofs_are_removed() {
        let m = MeshBuilder::new(1, 1, 1.0, 1.0).fix_both(0, 0).fix_both(0, 1).build().unwrap();
        assert_eq!(m.n_dofs(), 4);
        assert_eq!(m.element_local(0), &[2, 3, 4, 5]);
        assert_eq!(m.element_free_mask(0), 0b0011_1100);
    }

    #[test]
    fn inactive_cells_drop_nodes() {
        let m = MeshBuilder::new(3, 2, 1.0, 1.0).active(|i, j| j == 0 || i == 1).fix_both(0, 0).build().unwrap();
        assert_eq!(m.n_elements(), 4);
        assert!(m.node_at(0, 2).is_none());
        assert!(m.node_at(1, 2).is_some());
        assert_eq!(m.n_nodes(), 8 + 2);
    }

    #[test]
    fn neighbors_share_nodes() {
        let m = MeshBuilder::new(3, 3, 1.0, 1.0).fix_both(0, 0).build().unwrap();
        let centre = m.element_at(1, 1).unwrap();
        assert_eq!(m.neighbors(centre).len(), 8);
        let corner = m.element_at(0, 0).unwrap();
        assert_eq!(m.neighbors(corner).len(), 3);
    }

    #[test]
    fn support_on_missing_node_is_an_error() {
        assert!(MeshBuilder::new(1, 1, 1.0, 1.0).fix(5, 5, Axis::X).build().is_err());
    }
}
