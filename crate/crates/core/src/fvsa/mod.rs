//! Finite-variation sensitivity analysis.
//!
//! The sensitivity of element `i` is `α_i = C(x, x_i = 1) - C(x, x_i = 0)`, the
//! change of compliance when the element is switched. Every estimate here follows
//! that sign convention, so solid and void values are directly comparable.

mod cgm;
mod closed_form;
mod exact;

use nalgebra::DVector;

use crate::error::Result;
use crate::fem::{compliance, Axis, DensityVector, FemProblem, Mesh};
use crate::linalg::{Factorization, SparseSymmetric};

pub use cgm::{cgm_element_history, sensitivity_cgm, CgmCase, CgmConfig, CgmRoute, Estimator, PrecondKind};
pub use closed_form::cgm_closed_form;
pub use exact::{
    b_norm, element_operator, error_bounds, hoci_partial_sums, norm_map, sensitivity_foci, sensitivity_hoci,
    sensitivity_naive, sensitivity_woodbury, ElementOperator, ErrorBounds,
};

/// Solid elements with `1 - max eig(A_i)` below this are checked for connectivity.
pub const CONNECTIVE_TOL: f64 = 1e-9;

/// A mechanism left by a removal keeps only soft-kill stiffness, so `1 - max eig(A_i)`
/// is of order `ε_k`. The screening band is widened to this many multiples of it.
const CONNECTIVE_EPS_FACTOR: f64 = 1e3;

/// Screening bound on `1 - ‖A_i‖₂` for connective candidates.
pub fn connective_tol(eps_k: f64) -> f64 {
    CONNECTIVE_TOL.max(CONNECTIVE_EPS_FACTOR * eps_k)
}

/// Whether a solid element is connective: close to singular on removal and its removal
/// leaves a loaded node with no path of solid elements to a support.
pub fn is_connective(problem: &FemProblem, x: &DensityVector, e: usize, norm: f64) -> bool {
    x.is_solid(e) && 1.0 - norm < connective_tol(problem.eps_k()) && disconnects_load(problem, x, e)
}

/// Whether removing element `e` cuts some loaded node off from every supported node.
/// Nodes are linked through solid elements other than `e`.
pub fn disconnects_load(problem: &FemProblem, x: &DensityVector, e: usize) -> bool {
    let mesh = problem.mesh();
    let f = problem.load();
    let free = |node: usize| [Axis::X, Axis::Y].map(|a| mesh.dof(node, a));
    let mut reached = vec![false; mesh.n_nodes()];
    let mut stack: Vec<usize> = (0..mesh.n_nodes()).filter(|&n| free(n).iter().any(Option::is_none)).collect();
    for &n in &stack {
        reached[n] = true;
    }
    while let Some(n) = stack.pop() {
        for o in mesh.node_elements(n) {
            if o == e || !x.is_solid(o) {
                continue;
            }
            for m in mesh.element_nodes(o) {
                if !reached[m] {
                    reached[m] = true;
                    stack.push(m);
                }
            }
        }
    }
    (0..mesh.n_nodes()).any(|n| !reached[n] && free(n).iter().flatten().any(|&d| f[d] != 0.0))
}

/// How an entry of a [`SensitivityVector`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Computed,
    /// Void without solid neighbours; the value is exactly zero.
    ForcedZeroDisconnected,
    /// Solid whose removal nearly disconnects a load; never removed, never filtered.
    MaskedConnective,
    /// Void whose value was set to zero by configuration.
    ZeroedVoid,
}

/// Non-fatal numerical conditions met while computing an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Warning {
    /// Series on a void element with `‖A_i‖ ≥ 1`.
    SeriesDivergent,
    /// `I - A_i` is within 1e-12 of singular.
    NearSingular,
    /// Conjugate gradients met non-positive curvature; the last good iterate was used.
    CgBreakdown,
    /// A closed form hit a vanishing denominator.
    DegenerateKrylov,
}

/// Per-element sensitivities with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityVector {
    pub alpha: Vec<f64>,
    pub status: Vec<Status>,
    pub warnings: Vec<(usize, Warning)>,
}

impl SensitivityVector {
    pub fn computed(alpha: Vec<f64>) -> Self {
        let status = vec![Status::Computed; alpha.len()];
        Self { alpha, status, warnings: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn is_masked(&self, e: usize) -> bool {
        self.status[e] == Status::MaskedConnective
    }

    pub(crate) fn from_entries(entries: Vec<(f64, Status, Option<Warning>)>) -> Self {
        let mut out = Self {
            alpha: Vec::with_capacity(entries.len()),
            status: Vec::with_capacity(entries.len()),
            warnings: Vec::new(),
        };
        for (e, (a, s, w)) in entries.into_iter().enumerate() {
            out.alpha.push(a);
            out.status.push(s);
            if let Some(w) = w {
                out.warnings.push((e, w));
            }
        }
        out
    }
}

/// Equilibrium of the current topology: `K̄`, its factorization, `ū` and `C̄`.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub x: DensityVector,
    pub stiffness: SparseSymmetric,
    pub factorization: Factorization,
    pub u: DVector<f64>,
    pub compliance: f64,
}

impl Equilibrium {
    pub fn new(problem: &FemProblem, x: &DensityVector) -> Result<Self> {
        let stiffness = problem.assemble(x)?;
        let factorization = Factorization::new(&stiffness)?;
        let u = factorization.solve(problem.load());
        let c = compliance(&u, problem.load());
        Ok(Self { x: x.clone(), stiffness, factorization, u, compliance: c })
    }
}

/// Whether a void element has no solid element sharing a node with it.
pub fn is_disconnected(mesh: &Mesh, x: &DensityVector, e: usize) -> bool {
    !x.is_solid(e) && mesh.neighbors(e).iter().all(|&o| !x.is_solid(o))
}

/// Sets computed void entries without solid neighbours to exactly zero.
pub fn zero_disconnected_voids(mesh: &Mesh, x: &DensityVector, s: &mut SensitivityVector) {
    for e in 0..s.len() {
        if s.status[e] == Status::Computed && is_disconnected(mesh, x, e) {
            s.alpha[e] = 0.0;
            s.status[e] = Status::ForcedZeroDisconnected;
        }
    }
}

/// Relative l2 distance over the selected elements: `‖est - exact‖ / ‖exact‖`.
pub fn relative_l2_error(estimate: &[f64], exact: &[f64], select: impl Fn(usize) -> bool) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (e, (a, b)) in estimate.iter().zip(exact).enumerate() {
        if select(e) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}
