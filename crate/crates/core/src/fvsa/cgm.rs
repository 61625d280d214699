use std::collections::hash_map::Entry;
use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;

use super::{Equilibrium, SensitivityVector, Status, Warning};
use crate::error::{Error, Result};
use crate::fem::FemProblem;
use crate::linalg::{LinearOperator, Pcg, Perturbed, Preconditioner, SparseSymmetric};

/// Initial condition of the perturbed conjugate gradient run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CgmCase {
    /// `u0 = 0`, `d0 = M⁻¹f`.
    FromZero,
    /// `u0 = ū`, `d0 = -M⁻¹ΔKū`.
    FromEquilibrium,
    /// `u0 = 0`, `d0 = ū`.
    AlongDisplacement,
}

impl CgmCase {
    pub fn id(self) -> u8 {
        match self {
            CgmCase::FromZero => 1,
            CgmCase::FromEquilibrium => 2,
            CgmCase::AlongDisplacement => 3,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(CgmCase::FromZero),
            2 => Ok(CgmCase::FromEquilibrium),
            3 => Ok(CgmCase::AlongDisplacement),
            _ => Err(Error::InvalidInput(format!("CGM case must be 1, 2 or 3, got {id}"))),
        }
    }

    /// Estimator used when none is requested.
    pub fn default_estimator(self) -> Estimator {
        match self {
            CgmCase::FromEquilibrium => Estimator::ElementWork,
            _ => Estimator::LoadWork,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecondKind {
    Identity,
    /// Diagonal of the perturbed matrix.
    Jacobi,
    /// Direct solve with the unperturbed `K̄`.
    ExactKbar,
}

/// How `α_i` is read off the iterate `u_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// `±½ fᵀ(u_m - ū)`, `+` when adding the element.
    LoadWork,
    /// `-½ ūᵀK_i u_m`.
    ElementWork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CgmRoute {
    /// Restricted subsystem when the case and preconditioner allow it.
    Auto,
    /// Always run on full-length vectors.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgmConfig {
    pub case: CgmCase,
    pub precond: PrecondKind,
    pub steps: usize,
    pub estimator: Option<Estimator>,
    pub zero_voids: bool,
    pub tau: f64,
    pub route: CgmRoute,
}

impl Default for CgmConfig {
    fn default() -> Self {
        Self {
            case: CgmCase::FromEquilibrium,
            precond: PrecondKind::Jacobi,
            steps: 2,
            estimator: None,
            zero_voids: true,
            tau: 0.0,
            route: CgmRoute::Auto,
        }
    }
}

impl CgmConfig {
    pub fn new(case: CgmCase, precond: PrecondKind, steps: usize) -> Self {
        Self { case, precond, steps, zero_voids: false, ..Self::default() }
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator.unwrap_or_else(|| self.case.default_estimator())
    }

    fn local(&self) -> bool {
        self.route == CgmRoute::Auto && self.case == CgmCase::FromEquilibrium && self.precond != PrecondKind::ExactKbar
    }
}

/// Sensitivities from `steps` conjugate gradient steps on `K̄ ± K_i`.
pub fn sensitivity_cgm(problem: &FemProblem, eq: &Equilibrium, cfg: &CgmConfig) -> Result<SensitivityVector> {
    if cfg.steps == 0 {
        return Err(Error::InvalidInput("CGM needs at least one step".into()));
    }
    let base_diag = eq.stiffness.diagonal();
    let entries = (0..problem.n_elements())
        .into_par_iter()
        .map(|e| {
            if cfg.zero_voids && !eq.x.is_solid(e) {
                return Ok((0.0, Status::ZeroedVoid, None));
            }
            let mut last = 0.0;
            let warn = run_element(problem, eq, e, cfg, cfg.steps, &base_diag, &mut |_, a| last = a)?;
            Ok((last, Status::Computed, warn))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityVector::from_entries(entries))
}

/// Estimates after each of `1..=max_steps` steps for one element.
///
/// After an early return or a breakdown the last estimate is repeated.
pub fn cgm_element_history(
    problem: &FemProblem,
    eq: &Equilibrium,
    e: usize,
    cfg: &CgmConfig,
    max_steps: usize,
) -> Result<(Vec<f64>, Option<Warning>)> {
    let base_diag = eq.stiffness.diagonal();
    let mut out = Vec::with_capacity(max_steps);
    let warn = run_element(problem, eq, e, cfg, max_steps, &base_diag, &mut |_, a| out.push(a))?;
    Ok((out, warn))
}

fn run_element(
    problem: &FemProblem,
    eq: &Equilibrium,
    e: usize,
    cfg: &CgmConfig,
    steps: usize,
    base_diag: &DVector<f64>,
    record: &mut dyn FnMut(usize, f64),
) -> Result<Option<Warning>> {
    let solid = eq.x.is_solid(e);
    let sign = if solid { -1.0 } else { 1.0 };
    let delta = problem.ki(e) * sign;
    let dofs = problem.element_dofs(e);
    let ki = problem.ki(e);
    let u_e = problem.gather(e, &eq.u);
    let ki_u = ki * &u_e;
    let estimator = cfg.estimator();
    let f = problem.load();

    if cfg.local() {
        let local = LocalSystem::new(&eq.stiffness, dofs, steps);
        let ldofs: Vec<usize> = dofs.iter().map(|d| local.index[d]).collect();
        let op = Perturbed { base: &local.matrix, dofs: &ldofs, delta: &delta };
        let n = local.global.len();
        let precond = match cfg.precond {
            PrecondKind::Identity => Preconditioner::Identity,
            _ => {
                let mut diag: Vec<f64> = local.global.iter().map(|&g| base_diag[g]).collect();
                for (a, &l) in ldofs.iter().enumerate() {
                    diag[l] += delta[(a, a)];
                }
                Preconditioner::jacobi_from_diagonal(&diag)?
            }
        };
        // Shifted problem: K̄̄ δ = -ΔKū with δ0 = 0, so u_m = ū + δ_m.
        let mut g0 = DVector::zeros(n);
        for (a, &l) in ldofs.iter().enumerate() {
            g0[l] = sign * ki_u[a];
        }
        let b = -&g0;
        let mut d0 = DVector::zeros(n);
        precond.apply_inverse(b.as_slice(), d0.as_mut_slice());
        let f_local = DVector::from_iterator(n, local.global.iter().map(|&g| f[g]));
        let estimate = |delta_u: &DVector<f64>| match estimator {
            Estimator::LoadWork => sign * 0.5 * f_local.dot(delta_u),
            Estimator::ElementWork => {
                let um =
                    DVector::from_iterator(ldofs.len(), ldofs.iter().zip(u_e.iter()).map(|(&l, u)| u + delta_u[l]));
                -0.5 * ki_u.dot(&um)
            }
        };
        let pcg = Pcg::from_residual(&op, DVector::zeros(n), d0, g0, &precond);
        return Ok(drive(pcg, steps, cfg.tau, &estimate, record));
    }

    let op = Perturbed { base: &eq.stiffness, dofs, delta: &delta };
    let precond = match cfg.precond {
        PrecondKind::Identity => Preconditioner::Identity,
        PrecondKind::Jacobi => {
            let mut diag = base_diag.clone();
            for (a, &d) in dofs.iter().enumerate() {
                diag[d] += delta[(a, a)];
            }
            Preconditioner::jacobi_from_diagonal(diag.as_slice())?
        }
        PrecondKind::ExactKbar => Preconditioner::Exact(&eq.factorization),
    };
    let n = problem.n_dofs();
    let apply_m = |r: &DVector<f64>| {
        let mut z = DVector::zeros(n);
        precond.apply_inverse(r.as_slice(), z.as_mut_slice());
        z
    };
    let (u0, d0) = match cfg.case {
        CgmCase::FromZero => (DVector::zeros(n), apply_m(f)),
        CgmCase::FromEquilibrium => {
            let mut b = DVector::zeros(n);
            for (a, &d) in dofs.iter().enumerate() {
                b[d] = -sign * ki_u[a];
            }
            (eq.u.clone(), apply_m(&b))
        }
        CgmCase::AlongDisplacement => (DVector::zeros(n), eq.u.clone()),
    };
    let fu = f.dot(&eq.u);
    let estimate = |u: &DVector<f64>| match estimator {
        Estimator::LoadWork => sign * 0.5 * (f.dot(u) - fu),
        Estimator::ElementWork => -0.5 * ki_u.dot(&problem.gather(e, u)),
    };
    let pcg = Pcg::new(&op, f, u0, d0, &precond)?;
    Ok(drive(pcg, steps, cfg.tau, &estimate, record))
}

fn drive<O: LinearOperator + ?Sized>(
    mut pcg: Pcg<'_, O>,
    steps: usize,
    tau: f64,
    estimate: &dyn Fn(&DVector<f64>) -> f64,
    record: &mut dyn FnMut(usize, f64),
) -> Option<Warning> {
    let mut warning = None;
    let mut done = false;
    for m in 1..=steps {
        if !done && !pcg.converged(tau) && pcg.step().is_err() {
            warning = Some(Warning::CgBreakdown);
            done = true;
        }
        record(m, estimate(&pcg.state().u));
    }
    warning
}

/// `K̄` restricted to the DOFs within `depth` graph rings of a seed set.
struct LocalSystem {
    global: Vec<usize>,
    index: HashMap<usize, usize>,
    matrix: SparseSymmetric,
}

impl LocalSystem {
    fn new(k: &SparseSymmetric, seed: &[usize], depth: usize) -> Self {
        let pattern = k.pattern();
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut global = Vec::new();
        let mut frontier = Vec::new();
        for &d in seed {
            if let Entry::Vacant(slot) = index.entry(d) {
                slot.insert(global.len());
                global.push(d);
                frontier.push(d);
            }
        }
        for _ in 0..depth {
            let mut next = Vec::new();
            for &v in &frontier {
                for &w in pattern.row(v) {
                    if let std::collections::hash_map::Entry::Vacant(slot) = index.entry(w) {
                        slot.insert(global.len());
                        global.push(w);
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        let entries = global.iter().enumerate().flat_map(|(lr, &r)| {
            let index = &index;
            pattern.row(r).iter().filter_map(move |c| index.get(c).map(|&lc| (lr, lc)))
        });
        let mut dense_free = Vec::new();
        let local_pattern = crate::linalg::SparsityPattern::from_entries(global.len(), entries).unwrap();
        for (lr, lc, _) in local_pattern.entries() {
            dense_free.push(k.get(global[lr], global[lc]));
        }
        let matrix = SparseSymmetric::from_parts_unchecked(std::sync::Arc::new(local_pattern), dense_free);
        Self { global, index, matrix }
    }
}
