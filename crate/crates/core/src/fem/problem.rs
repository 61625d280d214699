use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::density::DensityVector;
use super::element::{element_sqrt, element_stiffness_q4, ElementMatrix, Material};
use super::mesh::{Axis, Mesh};
use crate::error::{Error, Result};
use crate::linalg::{SparseSymmetric, SparsityPattern};

/// Constrained element blocks shared by every element with the same free-DOF mask.
#[derive(Debug, Clone)]
struct ElementBlocks {
    k0: DMatrix<f64>,
    ki: DMatrix<f64>,
    sqrt_ki: DMatrix<f64>,
}

/// Mesh, material, soft-kill parameter and load vector of a compliance problem.
///
/// The global stiffness is `K(x) = eps_k * Σ K0_i + Σ x_i K_i` with
/// `K_i = (1 - eps_k) K0_i`.
#[derive(Debug, Clone)]
pub struct FemProblem {
    mesh: Mesh,
    material: Material,
    eps_k: f64,
    load: DVector<f64>,
    blocks: Vec<ElementBlocks>,
    block_of: Vec<usize>,
    pattern: Arc<SparsityPattern>,
    scatter: Vec<Vec<usize>>,
}

impl FemProblem {
    pub fn new(mesh: Mesh, material: Material, eps_k: f64, load: DVector<f64>) -> Result<Self> {
        if !(eps_k > 0.0 && eps_k < 1.0) {
            return Err(Error::InvalidInput(format!("soft-kill parameter must lie in (0, 1), got {eps_k}")));
        }
        if load.len() != mesh.n_dofs() {
            return Err(Error::InvalidInput(format!(
                "load has {} entries, mesh has {} free DOFs",
                load.len(),
                mesh.n_dofs()
            )));
        }
        if load.iter().any(|v| !v.is_finite()) || load.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput("load vector must be finite and nonzero".into()));
        }

        let ke = element_stiffness_q4(&material, mesh.elem_w(), mesh.elem_h())?;
        let mut by_mask: HashMap<u8, usize> = HashMap::new();
        let mut blocks = Vec::new();
        let mut block_of = Vec::with_capacity(mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let idx = match by_mask.get(&mesh.element_free_mask(e)) {
                Some(&b) => b,
                None => {
                    let local = mesh.element_local(e);
                    let k0 = DMatrix::from_fn(local.len(), local.len(), |a, b| ke.as_matrix()[(local[a], local[b])]);
                    let ki = &k0 * (1.0 - eps_k);
                    let sqrt_ki = element_sqrt(&ElementMatrix::new(ki.clone())?)?.into_inner();
                    blocks.push(ElementBlocks { k0, ki, sqrt_ki });
                    by_mask.insert(mesh.element_free_mask(e), blocks.len() - 1);
                    blocks.len() - 1
                }
            };
            block_of.push(idx);
        }

        let pattern = Arc::new(SparsityPattern::from_groups(
            mesh.n_dofs(),
            (0..mesh.n_elements()).map(|e| mesh.element_dofs(e)),
        )?);
        let scatter = (0..mesh.n_elements())
            .map(|e| {
                let d = mesh.element_dofs(e);
                d.iter()
                    .flat_map(|&r| d.iter().map(move |&c| (r, c)))
                    .map(|(r, c)| pattern.find(r, c).unwrap())
                    .collect()
            })
            .collect();

        Ok(Self { mesh, material, eps_k, load, blocks, block_of, pattern, scatter })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn eps_k(&self) -> f64 {
        self.eps_k
    }

    pub fn load(&self) -> &DVector<f64> {
        &self.load
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }

    /// Pattern of the fully solid assembly, shared by every `K(x)`.
    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Constrained element stiffness `K0_i`.
    pub fn k0(&self, e: usize) -> &DMatrix<f64> {
        &self.blocks[self.block_of[e]].k0
    }

    /// Element variation `K_i = (1 - eps_k) K0_i`.
    pub fn ki(&self, e: usize) -> &DMatrix<f64> {
        &self.blocks[self.block_of[e]].ki
    }

    /// PSD square root of `K_i`.
    pub fn sqrt_ki(&self, e: usize) -> &DMatrix<f64> {
        &self.blocks[self.block_of[e]].sqrt_ki
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        self.mesh.element_dofs(e)
    }

    /// Restriction of a global vector to element DOFs.
    pub fn gather(&self, e: usize, u: &DVector<f64>) -> DVector<f64> {
        let d = self.mesh.element_dofs(e);
        DVector::from_iterator(d.len(), d.iter().map(|&i| u[i]))
    }

    /// `½ uᵢᵀ K_i uᵢ`.
    pub fn element_energy(&self, e: usize, u: &DVector<f64>) -> f64 {
        let ue = self.gather(e, u);
        0.5 * ue.dot(&(self.ki(e) * &ue))
    }

    /// `Σ scale(e) K0_e` on the shared pattern.
    pub fn assemble_scaled(&self, scale: impl Fn(usize) -> f64) -> SparseSymmetric {
        let mut values = vec![0.0; self.pattern.nnz()];
        for e in 0..self.n_elements() {
            let s = scale(e);
            for (v, &slot) in self.k0(e).iter().zip(&self.scatter[e]) {
                // k0 is symmetric so column-major iteration matches the row-major scatter.
                values[slot] += s * v;
            }
        }
        SparseSymmetric::from_parts_unchecked(self.pattern.clone(), values)
    }

    pub fn assemble(&self, x: &DensityVector) -> Result<SparseSymmetric> {
        if x.len() != self.n_elements() {
            return Err(Error::InvalidInput(format!(
                "topology has {} entries, mesh has {} elements",
                x.len(),
                self.n_elements()
            )));
        }
        let eps = self.eps_k;
        Ok(self.assemble_scaled(|e| if x.is_solid(e) { 1.0 } else { eps }))
    }

    /// Global vector from element-level contributions.
    pub fn scatter_vector(&self, e: usize, local: &DVector<f64>, out: &mut DVector<f64>) {
        for (&d, v) in self.mesh.element_dofs(e).iter().zip(local.iter()) {
            out[d] += v;
        }
    }

    /// Whether every loaded node reaches a fixed node through solid elements sharing a node.
    pub fn load_path_connected(&self, x: &DensityVector) -> bool {
        let mesh = &self.mesh;
        let n_nodes = mesh.n_nodes();
        let mut parent: Vec<usize> = (0..n_nodes).collect();
        fn root(p: &mut [usize], mut a: usize) -> usize {
            while p[a] != a {
                p[a] = p[p[a]];
                a = p[a];
            }
            a
        }
        for e in (0..mesh.n_elements()).filter(|&e| x.is_solid(e)) {
            let nodes = mesh.element_nodes(e);
            for &n in &nodes[1..] {
                let (a, b) = (root(&mut parent, nodes[0]), root(&mut parent, n));
                parent[a] = b;
            }
        }
        let fixed: Vec<usize> =
            (0..n_nodes).filter(|&n| mesh.dof(n, Axis::X).is_none() || mesh.dof(n, Axis::Y).is_none()).collect();
        let solid_node = {
            let mut s = vec![false; n_nodes];
            for e in (0..mesh.n_elements()).filter(|&e| x.is_solid(e)) {
                for n in mesh.element_nodes(e) {
                    s[n] = true;
                }
            }
            s
        };
        let anchored: std::collections::HashSet<usize> =
            fixed.iter().filter(|&&n| solid_node[n]).map(|&n| root(&mut parent, n)).collect();
        (0..n_nodes)
            .filter(|&n| [Axis::X, Axis::Y].iter().any(|&a| mesh.dof(n, a).is_some_and(|d| self.load[d] != 0.0)))
            .all(|n| solid_node[n] && anchored.contains(&root(&mut parent, n)))
    }
}

/// Soft-kill global stiffness `K(x)`.
pub fn assemble_global(problem: &FemProblem, x: &DensityVector) -> Result<SparseSymmetric> {
    problem.assemble(x)
}

/// `½ fᵀu`.
pub fn compliance(u: &DVector<f64>, f: &DVector<f64>) -> f64 {
    0.5 * f.dot(u)
}

/// Accumulates nodal forces on the free DOFs of a mesh.
#[derive(Debug, Clone)]
pub struct LoadBuilder<'a> {
    mesh: &'a Mesh,
    f: DVector<f64>,
}

impl<'a> LoadBuilder<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        Self { mesh, f: DVector::zeros(mesh.n_dofs()) }
    }

    /// Point force at grid node `(i, j)`. Loading a fixed DOF is an error.
    pub fn point(mut self, i: usize, j: usize, axis: Axis, value: f64) -> Result<Self> {
        let node =
            self.mesh.node_at(i, j).ok_or_else(|| Error::InvalidInput(format!("load on missing node ({i}, {j})")))?;
        let dof = self
            .mesh
            .dof(node, axis)
            .ok_or_else(|| Error::InvalidInput(format!("load on fixed DOF {axis:?} of node ({i}, {j})")))?;
        self.f[dof] += value;
        Ok(self)
    }

    /// Distributed load along the horizontal grid line `j` from node column `i0` to `i1`.
    ///
    /// Each segment sends half its resultant to each end node.
    pub fn edge_horizontal(mut self, j: usize, i0: usize, i1: usize, axis: Axis, intensity: f64) -> Result<Self> {
        let half = 0.5 * intensity * self.mesh.elem_w();
        for i in i0..i1 {
            self = self.point(i, j, axis, half)?.point(i + 1, j, axis, half)?;
        }
        Ok(self)
    }

    /// Distributed load along the vertical grid line `i` from node row `j0` to `j1`.
    pub fn edge_vertical(mut self, i: usize, j0: usize, j1: usize, axis: Axis, intensity: f64) -> Result<Self> {
        let half = 0.5 * intensity * self.mesh.elem_h();
        for j in j0..j1 {
            self = self.point(i, j, axis, half)?.point(i, j + 1, axis, half)?;
        }
        Ok(self)
    }

    pub fn build(self) -> DVector<f64> {
        self.f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::MeshBuilder;
    use crate::linalg::Factorization;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cantilever(nx: usize, ny: usize) -> FemProblem {
        let mut b = MeshBuilder::new(nx, ny, 1.0, 1.0);
        for j in 0..=ny {
            b = b.fix_both(0, j);
        }
        let mesh = b.build().unwrap();
        let f = LoadBuilder::new(&mesh).point(nx, 0, Axis::Y, -1.0).unwrap().build();
        FemProblem::new(mesh, Material::plane(1.0, 0.3).unwrap(), 1e-3, f).unwrap()
    }

    // Dense accumulation straight from the unconstrained 8x8 matrix.
    fn dense_oracle(p: &FemProblem, x: &DensityVector) -> DMatrix<f64> {
        let ke = element_stiffness_q4(p.material(), p.mesh().elem_w(), p.mesh().elem_h()).unwrap();
        let mut k = DMatrix::zeros(p.n_dofs(), p.n_dofs());
        for e in 0..p.n_elements() {
            let s = if x.is_solid(e) { 1.0 } else { p.eps_k() };
            let nodes = p.mesh().element_nodes(e);
            let g: Vec<Option<usize>> =
                nodes.iter().flat_map(|&n| [p.mesh().dof(n, Axis::X), p.mesh().dof(n, Axis::Y)]).collect();
            for a in 0..8 {
                for b in 0..8 {
                    if let (Some(r), Some(c)) = (g[a], g[b]) {
                        k[(r, c)] += s * ke.as_matrix()[(a, b)];
                    }
                }
            }
        }
        k
    }

    #[test]
    fn solid_and_void_assemblies() {
        let p = cantilever(3, 2);
        let n = p.n_elements();
        let solid = p.assemble(&DensityVector::solid(n)).unwrap();
        let void = p.assemble(&DensityVector::void(n)).unwrap();
        let plain = p.assemble_scaled(|_| 1.0);
        assert_eq!(solid.values(), plain.values());
        for (a, b) in void.values().iter().zip(solid.values()) {
            assert!((a - p.eps_k() * b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn random_assembly_matches_dense_accumulation() {
        let p = cantilever(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let x = DensityVector::new((0..p.n_elements()).map(|_| rng.gen_bool(0.5)).collect());
            let k = p.assemble(&x).unwrap();
            assert_eq!(k.pattern(), p.pattern());
            let dense = dense_oracle(&p, &x);
            let u = DVector::from_fn(p.n_dofs(), |_, _| rng.gen_range(-1.0..1.0));
            assert!((k.mul(&u) - &dense * &u).norm() <= 1e-12 * (&dense * &u).norm());
        }
    }

    #[test]
    fn assembly_is_spd_for_every_topology() {
        let p = cantilever(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let x = DensityVector::new((0..p.n_elements()).map(|_| rng.gen_bool(0.5)).collect());
            let k = p.assemble(&x).unwrap().to_dense();
            assert!(k.symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn one_element_compliance_matches_dense_solve() {
        let p = cantilever(1, 1);
        let x = DensityVector::solid(1);
        let k = p.assemble(&x).unwrap();
        let u = Factorization::new(&k).unwrap().solve(p.load());
        let dense = k.to_dense().lu().solve(p.load()).unwrap();
        let c = compliance(&u, p.load());
        assert!((c - 0.5 * p.load().dot(&dense)).abs() <= 1e-12 * c);
        assert!((c - 0.5 * u.dot(&k.mul(&u))).abs() <= 1e-10 * c);
        assert_eq!(compliance(&u, &DVector::zeros(u.len())), 0.0);
    }

    #[test]
    fn trapezoidal_edge_lumping() {
        let mesh = MeshBuilder::new(2, 2, 1.0, 0.5).fix_both(0, 0).build().unwrap();
        let f = LoadBuilder::new(&mesh).edge_vertical(2, 0, 2, Axis::X, 2.0).unwrap().build();
        let val = |j| f[mesh.dof(mesh.node_at(2, j).unwrap(), Axis::X).unwrap()];
        assert_eq!((val(0), val(1), val(2)), (0.5, 1.0, 0.5));
        assert!(LoadBuilder::new(&mesh).point(0, 0, Axis::X, 1.0).is_err());
    }

    #[test]
    fn load_path_detection() {
        let p = cantilever(3, 1);
        assert!(p.load_path_connected(&DensityVector::solid(3)));
        assert!(!p.load_path_connected(&DensityVector::from_bits(&[1, 0, 1]).unwrap()));
    }
}
