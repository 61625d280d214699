//! Entries of `K⁻¹` restricted to the sparsity pattern of `K`, with low-rank updates.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::FemProblem;
use crate::linalg::{Factorization, SparsityPattern};

/// Below this reciprocal condition number the update core is treated as singular.
const CORE_RCOND: f64 = 1e-12;

/// `K⁻¹` on the pattern of `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveInverse {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

/// Symmetric change `ΔK` supported on a few DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankChange {
    pub dofs: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl LowRankChange {
    /// Aggregate change of switching elements: `+K_i` for each added, `-K_i` for each removed.
    pub fn from_switches(problem: &FemProblem, switches: impl IntoIterator<Item = (usize, i8)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (e, dir) in switches {
            let sign = f64::from(dir.signum());
            let dofs = problem.element_dofs(e);
            let ki = problem.ki(e);
            for (a, &r) in dofs.iter().enumerate() {
                for (b, &c) in dofs.iter().enumerate() {
                    *acc.entry((r, c)).or_default() += sign * ki[(a, b)];
                }
            }
        }
        let mut dofs: Vec<usize> = acc.keys().map(|&(r, _)| r).collect();
        dofs.dedup();
        let pos: BTreeMap<usize, usize> = dofs.iter().enumerate().map(|(i, &d)| (d, i)).collect();
        let mut matrix = DMatrix::zeros(dofs.len(), dofs.len());
        for ((r, c), v) in acc {
            matrix[(pos[&r], pos[&c])] = v;
        }
        Self { dofs, matrix }
    }

    pub fn rank_bound(&self) -> usize {
        self.dofs.len()
    }
}

/// Work done by one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateStats {
    /// Linear solves of full dimension.
    pub solves: usize,
}

impl SelectiveInverse {
    /// One solve per column, harvesting the patterned entries.
    pub fn from_column_solves(fact: &Factorization, pattern: Arc<SparsityPattern>) -> Result<Self> {
        check_dim(fact, &pattern)?;
        let n = pattern.dim();
        let mut values = vec![0.0; pattern.nnz()];
        let mut col = vec![0.0; n];
        for c in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[c] = 1.0;
            fact.solve_in_place(&mut col);
            // Column c and row c carry the same entries by symmetry.
            for k in pattern.row_range(c) {
                values[k] = col[pattern.row(c)[k - pattern.row_range(c).start]];
            }
        }
        let mut s = Self { pattern, values };
        s.symmetrize();
        Ok(s)
    }

    /// Takahashi recurrence on the factor envelope; no full-length solves.
    pub fn from_envelope(fact: &Factorization, pattern: Arc<SparsityPattern>) -> Result<Self> {
        check_dim(fact, &pattern)?;
        let z = fact.envelope_inverse();
        let values = pattern
            .entries()
            .map(|(r, c, _)| {
                z.get(r, c).ok_or_else(|| Error::Inconsistent(format!("entry ({r}, {c}) outside the factor envelope")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pattern, values })
    }

    fn symmetrize(&mut self) {
        for (r, c, k) in self.pattern.entries() {
            if c > r {
                let t = self.pattern.find(c, r).unwrap();
                let avg = 0.5 * (self.values[k] + self.values[t]);
                self.values[k] = avg;
                self.values[t] = avg;
            }
        }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.pattern.find(r, c).map(|k| self.values[k])
    }

    /// Dense block on `dofs`, which must be mutually adjacent in the pattern.
    pub fn block(&self, dofs: &[usize]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(dofs.len(), dofs.len());
        for (a, &r) in dofs.iter().enumerate() {
            for (b, &c) in dofs.iter().enumerate() {
                m[(a, b)] = self
                    .get(r, c)
                    .ok_or_else(|| Error::InvalidInput(format!("entry ({r}, {c}) is not in the pattern")))?;
            }
        }
        Ok(m)
    }

    /// Moves from `K⁻¹` to `(K + ΔK)⁻¹` on the pattern; `fact` must factor the current `K`.
    ///
    /// Solves one system per DOF of the change to get the rows `T` of `K⁻¹`, forms
    /// `Q = ΔK (I + T_Δ ΔK)⁻¹` and subtracts `t_rᵀ Q t_c` from every stored entry.
    pub fn update(&mut self, fact: &Factorization, change: &LowRankChange) -> Result<UpdateStats> {
        check_dim(fact, &self.pattern)?;
        let g = change.dofs.len();
        if change.matrix.nrows() != g || change.matrix.ncols() != g {
            return Err(Error::InvalidInput("change matrix does not match its DOF list".into()));
        }
        if g == 0 || change.matrix.iter().all(|&v| v == 0.0) {
            return Ok(UpdateStats { solves: 0 });
        }
        let n = self.pattern.dim();
        // t[a] = row of K⁻¹ for DOF change.dofs[a].
        let mut t = DMatrix::zeros(g, n);
        let mut col = vec![0.0; n];
        for (a, &d) in change.dofs.iter().enumerate() {
            if d >= n {
                return Err(Error::InvalidInput(format!("change DOF {d} out of range")));
            }
            col.iter_mut().for_each(|v| *v = 0.0);
            col[d] = 1.0;
            fact.solve_in_place(&mut col);
            t.row_mut(a).copy_from_slice(&col);
        }
        let z_dd = DMatrix::from_fn(g, g, |a, b| t[(a, change.dofs[b])]);
        let core = DMatrix::identity(g, g) + &z_dd * &change.matrix;
        let sv = core.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > CORE_RCOND * smax) {
            return Err(Error::Singular { row: change.dofs[0], pivot: smin / smax });
        }
        let core_inv = core.try_inverse().ok_or_else(|| Error::Singular { row: change.dofs[0], pivot: 0.0 })?;
        let q = &change.matrix * core_inv;
        let q = (&q + q.transpose()) * 0.5;
        // p = Q T, so entry (r, c) drops by t_rᵀ p_c.
        let p = &q * &t;
        for (r, c, k) in self.pattern.entries() {
            let mut acc = 0.0;
            for a in 0..g {
                acc += t[(a, r)] * p[(a, c)];
            }
            self.values[k] -= acc;
        }
        self.symmetrize();
        Ok(UpdateStats { solves: g })
    }

    /// Largest relative entry-wise gap to `other`, scaled by the largest magnitude.
    pub fn max_relative_difference(&self, other: &SelectiveInverse) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max)
    }
}

/// Selective inverse by exhaustive column solves.
pub fn selective_inverse_full(fact: &Factorization, pattern: Arc<SparsityPattern>) -> Result<SelectiveInverse> {
    SelectiveInverse::from_column_solves(fact, pattern)
}

fn check_dim(fact: &Factorization, pattern: &SparsityPattern) -> Result<()> {
    if fact.dim() != pattern.dim() {
        return Err(Error::InvalidInput(format!(
            "factorization has dimension {}, pattern {}",
            fact.dim(),
            pattern.dim()
        )));
    }
    Ok(())
}

/// Dense `K⁻¹` solution helper shared by tests and diagnostics.
pub(crate) fn solve_unit(fact: &Factorization, n: usize, d: usize) -> DVector<f64> {
    let mut col = DVector::zeros(n);
    col[d] = 1.0;
    fact.solve_in_place(col.as_mut_slice());
    col
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{Axis, DensityVector, LoadBuilder, Material, MeshBuilder};
    use crate::linalg::SparseSymmetric;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(nx: usize, ny: usize) -> FemProblem {
        let mut b = MeshBuilder::new(nx, ny, 1.0, 1.0);
        for j in 0..=ny {
            b = b.fix_both(0, j);
        }
        let mesh = b.build().unwrap();
        let f = LoadBuilder::new(&mesh).point(nx, 0, Axis::Y, -1.0).unwrap().build();
        FemProblem::new(mesh, Material::plane(1.0, 0.3).unwrap(), 1e-3, f).unwrap()
    }

    fn dense(m: &[f64], n: usize) -> SparseSymmetric {
        SparseSymmetric::from_dense(&DMatrix::from_row_slice(n, n, m), 0.0).unwrap()
    }

    #[test]
    fn diagonal_and_two_by_two() {
        let k = dense(&[2.0, 0.0, 0.0, 4.0], 2);
        let s = selective_inverse_full(&Factorization::new(&k).unwrap(), k.pattern().clone()).unwrap();
        assert_eq!(s.values(), &[0.5, 0.25]);
        let k = dense(&[2.0, 1.0, 1.0, 2.0], 2);
        let s = selective_inverse_full(&Factorization::new(&k).unwrap(), k.pattern().clone()).unwrap();
        for (v, e) in s.values().iter().zip([2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_dense_inverse_on_mesh() {
        let p = problem(4, 4);
        let k = p.assemble(&DensityVector::solid(16)).unwrap();
        let inv = k.to_dense().try_inverse().unwrap();
        let f = Factorization::new(&k).unwrap();
        let cols = selective_inverse_full(&f, p.pattern().clone()).unwrap();
        let env = SelectiveInverse::from_envelope(&f, p.pattern().clone()).unwrap();
        let scale = inv.amax();
        for (r, c, _) in p.pattern().entries() {
            assert!((cols.get(r, c).unwrap() - inv[(r, c)]).abs() <= 1e-9 * scale);
        }
        assert!(cols.max_relative_difference(&env) <= 1e-9);
    }

    #[test]
    fn element_blocks_are_inside_the_pattern() {
        let p = problem(3, 2);
        let k = p.assemble(&DensityVector::solid(6)).unwrap();
        let s = SelectiveInverse::from_envelope(&Factorization::new(&k).unwrap(), p.pattern().clone()).unwrap();
        for e in 0..6 {
            assert!(s.block(p.element_dofs(e)).is_ok());
        }
    }

    #[test]
    fn zero_change_is_a_no_op() {
        let p = problem(2, 2);
        let k = p.assemble(&DensityVector::solid(4)).unwrap();
        let f = Factorization::new(&k).unwrap();
        let mut s = selective_inverse_full(&f, p.pattern().clone()).unwrap();
        let before = s.clone();
        let change = LowRankChange { dofs: vec![0, 1], matrix: DMatrix::zeros(2, 2) };
        assert_eq!(s.update(&f, &change).unwrap().solves, 0);
        assert_eq!(s, before);
    }

    #[test]
    fn random_switch_matches_recompute_and_reverts() {
        let p = problem(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let x = DensityVector::new((0..12).map(|_| rng.gen_bool(0.6)).collect());
            let e = rng.gen_range(0..12);
            let k = p.assemble(&x).unwrap();
            let f = Factorization::new(&k).unwrap();
            let original = selective_inverse_full(&f, p.pattern().clone()).unwrap();
            let mut s = original.clone();
            let dir = if x.is_solid(e) { -1 } else { 1 };
            let change = LowRankChange::from_switches(&p, [(e, dir)]);
            let stats = s.update(&f, &change).unwrap();
            assert_eq!(stats.solves, p.element_dofs(e).len());

            let x2 = x.flipped(e);
            let f2 = Factorization::new(&p.assemble(&x2).unwrap()).unwrap();
            let fresh = selective_inverse_full(&f2, p.pattern().clone()).unwrap();
            assert!(s.max_relative_difference(&fresh) <= 1e-8);

            let back = LowRankChange::from_switches(&p, [(e, -dir)]);
            s.update(&f2, &back).unwrap();
            assert!(s.max_relative_difference(&original) <= 1e-8);
        }
    }

    #[test]
    fn singular_core_is_reported() {
        let k = dense(&[1.0, 0.0, 0.0, 1.0], 2);
        let f = Factorization::new(&k).unwrap();
        let mut s = selective_inverse_full(&f, k.pattern().clone()).unwrap();
        let change = LowRankChange { dofs: vec![0], matrix: DMatrix::from_element(1, 1, -1.0) };
        assert!(matches!(s.update(&f, &change), Err(Error::Singular { .. })));
    }

    #[test]
    fn unit_solve_is_a_column_of_the_inverse() {
        let k = dense(&[2.0, 1.0, 1.0, 2.0], 2);
        let col = solve_unit(&Factorization::new(&k).unwrap(), 2, 1);
        assert!((col[0] + 1.0 / 3.0).abs() < 1e-15 && (col[1] - 2.0 / 3.0).abs() < 1e-15);
    }
}
