#![allow(dead_code)]

use std::time::Instant;

use fvsa_core::fem::{Axis, DensityVector, FemProblem, LoadBuilder, Material, MeshBuilder};
use rand::Rng;

/// Cantilever on an `nx × ny` unit grid, clamped on the left, with a downward load at a
/// random right-edge node and a small horizontal one at another.
pub fn random_problem(rng: &mut impl Rng, max_nx: usize, max_ny: usize, eps_k: f64) -> FemProblem {
    let nx = rng.gen_range(2..=max_nx);
    let ny = rng.gen_range(2..=max_ny);
    grid_problem(rng, nx, ny, eps_k)
}

/// [`random_problem`] on a fixed grid.
pub fn grid_problem(rng: &mut impl Rng, nx: usize, ny: usize, eps_k: f64) -> FemProblem {
    let mut b = MeshBuilder::new(nx, ny, 1.0, rng.gen_range(0.5..2.0));
    for j in 0..=ny {
        b = b.fix_both(0, j);
    }
    let mesh = b.build().unwrap();
    let f = LoadBuilder::new(&mesh)
        .point(nx, rng.gen_range(0..=ny), Axis::Y, -1.0)
        .unwrap()
        .point(nx, rng.gen_range(0..=ny), Axis::X, rng.gen_range(-0.5..0.5))
        .unwrap()
        .build();
    FemProblem::new(mesh, Material::plane(1.0, rng.gen_range(0.0..0.45)).unwrap(), eps_k, f).unwrap()
}

/// Random topology with roughly `solid` fraction of solids and at least one solid.
pub fn random_topology(rng: &mut impl Rng, n: usize, solid: f64) -> DensityVector {
    let mut x = DensityVector::new((0..n).map(|_| rng.gen_bool(solid)).collect());
    if x.volume() == 0 {
        x.set(rng.gen_range(0..n), true);
    }
    x
}

/// Random problem and topology in which every loaded node reaches a support through
/// solid elements. A cut load path makes the compliance scale with `1/ε_k`, and
/// differences of such compliances lose the digits the comparisons need.
pub fn random_instance(
    rng: &mut impl Rng,
    max_nx: usize,
    max_ny: usize,
    eps_k: f64,
    solid: f64,
) -> (FemProblem, DensityVector) {
    let p = random_problem(rng, max_nx, max_ny, eps_k);
    connected_topology(rng, p, solid)
}

pub fn connected_topology(rng: &mut impl Rng, p: FemProblem, solid: f64) -> (FemProblem, DensityVector) {
    loop {
        let x = random_topology(rng, p.n_elements(), solid);
        if load_path_intact(&p, &x) {
            return (p, x);
        }
    }
}

/// Breadth-first search over nodes linked by solid elements, starting at the supports.
pub fn load_path_intact(problem: &FemProblem, x: &DensityVector) -> bool {
    let mesh = problem.mesh();
    let f = problem.load();
    let dofs = |n: usize| [Axis::X, Axis::Y].map(|a| mesh.dof(n, a));
    let mut reached: Vec<bool> = (0..mesh.n_nodes()).map(|n| dofs(n).contains(&None)).collect();
    let mut queue: std::collections::VecDeque<usize> = (0..mesh.n_nodes()).filter(|&n| reached[n]).collect();
    while let Some(n) = queue.pop_front() {
        for e in mesh.node_elements(n).into_iter().filter(|&e| x.is_solid(e)) {
            for m in mesh.element_nodes(e) {
                if !reached[m] {
                    reached[m] = true;
                    queue.push_back(m);
                }
            }
        }
    }
    (0..mesh.n_nodes()).all(|n| reached[n] || dofs(n).iter().flatten().all(|&d| f[d] == 0.0))
}

/// `C(x with e flipped) − C(x)` turned into the sensitivity sign convention
/// `C(x_e = 1) − C(x_e = 0)`, by refactoring from scratch.
pub fn flip_oracle(problem: &FemProblem, x: &DensityVector, e: usize) -> f64 {
    let c0 = direct_compliance(problem, x);
    let c1 = direct_compliance(problem, &x.flipped(e));
    if x.is_solid(e) {
        c0 - c1
    } else {
        c1 - c0
    }
}

/// Dense solve, independent of the sparse factorization.
pub fn direct_compliance(problem: &FemProblem, x: &DensityVector) -> f64 {
    let k = problem.assemble(x).unwrap().to_dense();
    let u = k.cholesky().expect("stiffness is SPD").solve(problem.load());
    0.5 * u.dot(problem.load())
}

/// Number of node-connected components among the solid elements.
pub fn solid_components(problem: &FemProblem, x: &DensityVector) -> usize {
    let mesh = problem.mesh();
    let mut seen = vec![false; x.len()];
    let mut count = 0;
    for start in 0..x.len() {
        if !x.is_solid(start) || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(e) = stack.pop() {
            for &o in mesh.neighbors(e) {
                if x.is_solid(o) && !seen[o] {
                    seen[o] = true;
                    stack.push(o);
                }
            }
        }
    }
    count
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Collects sub-check failures and prints one line per acceptance criterion.
pub struct Criterion {
    id: &'static str,
    title: &'static str,
    start: Instant,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    pub fn new(id: &'static str, title: &'static str) -> Self {
        Self { id, title, start: Instant::now(), failures: Vec::new(), notes: Vec::new() }
    }

    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    pub fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    /// Prints the verdict; over the time budget counts as a failure.
    pub fn finish(mut self, budget_s: f64) -> bool {
        let t = self.start.elapsed().as_secs_f64();
        if t > budget_s {
            self.failures.push(format!("took {t:.1} s, budget {budget_s} s"));
        }
        let verdict = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let mut line = format!("[acceptance {:>2}] {verdict} {} ({t:.1} s)", self.id, self.title);
        if !self.notes.is_empty() {
            line.push_str(&format!(": {}", self.notes.join("; ")));
        }
        println!("{line}");
        for f in self.failures.iter().take(10) {
            println!("    fail: {f}");
        }
        if self.failures.len() > 10 {
            println!("    ... {} more", self.failures.len() - 10);
        }
        self.failures.is_empty()
    }
}
