use std::collections::VecDeque;

use nalgebra::DVector;

use super::sparse::{SparseSymmetric, SparsityPattern};
use crate::error::{Error, Result};

/// Relative pivot size below which a matrix is reported singular.
const SINGULAR_PIVOT: f64 = 1e-12;

/// Envelope (skyline) LDLᵀ factorization under a reverse Cuthill-McKee ordering.
///
/// Row `i` of the permuted factor stores columns `first[i]..=i`; the diagonal slot
/// holds `D[i]` and the rest hold the unit lower factor.
#[derive(Debug, Clone)]
pub struct Factorization {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl Factorization {
    pub fn new(k: &SparseSymmetric) -> Result<Self> {
        let n = k.dim();
        let pattern = k.pattern();
        let perm = reverse_cuthill_mckee(pattern);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &c in pattern.row(old) {
                first[new] = first[new].min(iperm[c]);
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for (r, c, slot) in pattern.entries() {
            let (i, j) = (iperm[r], iperm[c]);
            if j <= i {
                data[offset[i] + j - first[i]] = k.values()[slot];
            }
        }

        let mut f = Self { n, perm, iperm, first, offset, data };
        f.factor()?;
        Ok(f)
    }

    fn factor(&mut self) -> Result<()> {
        let (first, offset) = (&self.first, &self.offset);
        let data = &mut self.data;
        for i in 0..self.n {
            let fi = first[i];
            let row_i = offset[i];
            // Entries of row i become t_ij = L_ij * D_j, then are scaled.
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut acc = data[row_i + j - fi];
                let (head, tail) = data.split_at(row_i);
                let ri = &tail[lo - fi..j - fi];
                let rj = &head[offset[j] + lo - fj..offset[j] + j - fj];
                for (a, b) in ri.iter().zip(rj) {
                    acc -= a * b;
                }
                data[row_i + j - fi] = acc;
            }
            let aii = data[row_i + i - fi];
            let mut d = aii;
            for j in fi..i {
                let t = data[row_i + j - fi];
                let dj = data[offset[j] + j - first[j]];
                let l = t / dj;
                d -= t * l;
                data[row_i + j - fi] = l;
            }
            if !(d.abs() > SINGULAR_PIVOT * aii.abs()) || d == 0.0 {
                return Err(Error::Singular { row: self.perm[i], pivot: d });
            }
            if d < 0.0 {
                return Err(Error::NotPositiveDefinite { row: self.perm[i], pivot: d });
            }
            data[row_i + i - fi] = d;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i] + i - fi];
            let mut acc = y[i];
            for (l, yj) in row.iter().zip(&y[fi..i]) {
                acc -= l * yj;
            }
            y[i] = acc;
        }
        for i in 0..self.n {
            y[i] /= self.data[self.offset[i + 1] - 1];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let yi = y[i];
            let row = &self.data[self.offset[i]..self.offset[i] + i - fi];
            for (l, yj) in row.iter().zip(&mut y[fi..i]) {
                *yj -= l * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// Entries of the inverse inside the envelope, by the Takahashi recurrence.
    pub fn envelope_inverse(&self) -> EnvelopeInverse {
        let n = self.n;
        let (first, offset) = (&self.first, &self.offset);
        // Rows k > j whose envelope reaches column j.
        let mut col_count = vec![0usize; n + 1];
        for k in 0..n {
            for j in first[k]..k {
                col_count[j + 1] += 1;
            }
        }
        for j in 0..n {
            col_count[j + 1] += col_count[j];
        }
        let mut col_rows = vec![0usize; col_count[n]];
        let mut fill = col_count.clone();
        for k in 0..n {
            for j in first[k]..k {
                col_rows[fill[j]] = k;
                fill[j] += 1;
            }
        }

        let idx = |r: usize, c: usize| -> usize {
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            offset[r] + c - first[r]
        };
        let mut z = vec![0.0; self.data.len()];
        let mut lcol = Vec::new();
        let mut zcol = Vec::new();
        for j in (0..n).rev() {
            let rows = &col_rows[col_count[j]..col_count[j + 1]];
            lcol.clear();
            lcol.extend(rows.iter().map(|&k| self.data[offset[k] + j - first[k]]));
            zcol.clear();
            for &i in rows {
                let mut acc = 0.0;
                for (&k, &l) in rows.iter().zip(&lcol) {
                    acc -= z[idx(i, k)] * l;
                }
                zcol.push(acc);
            }
            let mut zjj = 1.0 / self.data[offset[j + 1] - 1];
            for (a, &i) in rows.iter().enumerate() {
                z[idx(i, j)] = zcol[a];
                zjj -= lcol[a] * zcol[a];
            }
            z[idx(j, j)] = zjj;
        }
        EnvelopeInverse { iperm: self.iperm.clone(), first: self.first.clone(), offset: self.offset.clone(), data: z }
    }
}

/// Inverse entries on the factor envelope, addressed in original indices.
#[derive(Debug, Clone)]
pub struct EnvelopeInverse {
    iperm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeInverse {
    /// `None` outside the envelope. The pattern of the factored matrix is always inside.
    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let (i, j) = (self.iperm[r], self.iperm[c]);
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        (j >= self.first[i]).then(|| self.data[self.offset[i] + j - self.first[i]])
    }
}

/// Reverse Cuthill-McKee ordering, returned as `perm[new] = old`.
pub fn reverse_cuthill_mckee(pattern: &SparsityPattern) -> Vec<usize> {
    let n = pattern.dim();
    let degree: Vec<usize> = (0..n).map(|r| pattern.row(r).len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&r| (degree[r], r));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(pattern, seed, &degree);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        let mut nbrs = Vec::new();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(pattern.row(v).iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(pattern: &SparsityPattern, start: usize, level: &mut [usize]) -> (usize, Vec<usize>) {
    level.iter_mut().for_each(|l| *l = usize::MAX);
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut reached = vec![start];
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        for &w in pattern.row(v) {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                depth = depth.max(level[w]);
                reached.push(w);
                queue.push_back(w);
            }
        }
    }
    (depth, reached)
}

fn pseudo_peripheral(pattern: &SparsityPattern, seed: usize, degree: &[usize]) -> usize {
    let mut level = vec![usize::MAX; pattern.dim()];
    let mut start = seed;
    let (mut depth, mut reached) = bfs_levels(pattern, start, &mut level);
    for _ in 0..8 {
        let candidate =
            reached.iter().copied().filter(|&v| level[v] == depth).min_by_key(|&v| (degree[v], v)).unwrap_or(start);
        let (d, r) = bfs_levels(pattern, candidate, &mut level);
        if d <= depth {
            break;
        }
        start = candidate;
        depth = d;
        reached = r;
        bfs_levels(pattern, start, &mut level);
    }
    start
}
