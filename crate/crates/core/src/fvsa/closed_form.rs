use nalgebra::DVector;
use rayon::prelude::*;

use super::{CgmCase, Equilibrium, PrecondKind, SensitivityVector, Status, Warning};
use crate::error::{Error, Result};
use crate::fem::FemProblem;
use crate::linalg::{LinearOperator, Perturbed, Preconditioner};

/// Relative size under which a Krylov denominator counts as zero.
const DEGENERATE: f64 = 1e-14;

/// One- and two-step conjugate gradient estimates unrolled into inner products.
///
/// Case 1 and case 3 read the estimate through the load work, case 2 through the
/// element work, matching the defaults of [`super::sensitivity_cgm`].
pub fn cgm_closed_form(
    problem: &FemProblem,
    eq: &Equilibrium,
    case: CgmCase,
    steps: usize,
    precond: PrecondKind,
) -> Result<SensitivityVector> {
    if !(1..=2).contains(&steps) {
        return Err(Error::InvalidInput(format!("closed forms exist for 1 or 2 steps, got {steps}")));
    }
    let base_diag = eq.stiffness.diagonal();
    let entries = (0..problem.n_elements())
        .into_par_iter()
        .map(|e| element(problem, eq, e, case, steps, precond, &base_diag))
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityVector::from_entries(entries))
}

fn element(
    problem: &FemProblem,
    eq: &Equilibrium,
    e: usize,
    case: CgmCase,
    steps: usize,
    precond: PrecondKind,
    base_diag: &DVector<f64>,
) -> Result<(f64, Status, Option<Warning>)> {
    let solid = eq.x.is_solid(e);
    let sign = if solid { -1.0 } else { 1.0 };
    let dofs = problem.element_dofs(e);
    let delta = problem.ki(e) * sign;
    let op = Perturbed { base: &eq.stiffness, dofs, delta: &delta };
    let m = match precond {
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
    let minv = |r: &DVector<f64>| {
        let mut z = DVector::zeros(n);
        m.apply_inverse(r.as_slice(), z.as_mut_slice());
        z
    };
    let kbb = |v: &DVector<f64>| {
        let mut y = DVector::zeros(n);
        op.apply(v.as_slice(), y.as_mut_slice());
        y
    };

    let f = problem.load();
    let cbar = eq.compliance;
    let ci = problem.element_energy(e, &eq.u);
    let ct = cbar + sign * ci;
    let mut b = DVector::zeros(n);
    let ki_u = problem.ki(e) * problem.gather(e, &eq.u);
    for (a, &d) in dofs.iter().enumerate() {
        b[d] = -sign * ki_u[a];
    }

    // ⟨r⟩0..3 for the Krylov space started at r.
    let moments = |r: &DVector<f64>| {
        let vm = minv(r);
        let vk = kbb(&vm);
        let r0 = r.dot(&vm);
        let r1 = vk.dot(&vm);
        let vl = minv(&vk);
        let vr = kbb(&vl);
        (r0, r1, vk.dot(&vl), vr.dot(&vl))
    };
    // ½ rᵀ(step iterate) after one and two steps from zero.
    let projected = |r0: f64, r1: f64, r2: f64, r3: f64| -> (f64, Option<f64>) {
        let one = if r0 == 0.0 { 0.0 } else { r0 * r0 / (2.0 * r1) };
        let den = r1 * r3 - r2 * r2;
        let two = (den.abs() > DEGENERATE * (r1 * r3).abs())
            .then(|| (r0 * r0 * r3 - 2.0 * r0 * r1 * r2 + r1 * r1 * r1) / (2.0 * den));
        (one, two)
    };

    let mut warning = None;
    let alpha = match case {
        CgmCase::FromZero => {
            let (f0, f1, f2, f3) = moments(f);
            if f1 == 0.0 {
                return Err(Error::DegenerateKrylov(format!("element {e}: fᵀM⁻¹K M⁻¹f vanishes")).at_element(e));
            }
            let (one, two) = projected(f0, f1, f2, f3);
            let t = if steps == 1 {
                one
            } else {
                two.unwrap_or_else(|| {
                    warning = Some(Warning::DegenerateKrylov);
                    one
                })
            };
            sign * (t - cbar)
        }
        CgmCase::FromEquilibrium => {
            let (b0, b1, b2, b3) = moments(&b);
            let (one, two) = projected(b0, b1, b2, b3);
            let t = if steps == 1 || b0 == 0.0 {
                one
            } else {
                two.unwrap_or_else(|| {
                    warning = Some(Warning::DegenerateKrylov);
                    one
                })
            };
            -(ci - sign * t)
        }
        CgmCase::AlongDisplacement => {
            let first = -(cbar / ct) * ci;
            if steps == 1 {
                first
            } else {
                let z = f - &b;
                let g = &z * (cbar / ct) - f;
                let vm = minv(&g);
                let vk = kbb(&vm);
                let (zg0, g0, g1) = (vm.dot(&z), vm.dot(&g), vm.dot(&vk));
                let den = 2.0 * ct * g1 - zg0 * zg0;
                if g0 == 0.0 {
                    first
                } else if den.abs() <= DEGENERATE * (2.0 * ct * g1).abs() {
                    warning = Some(Warning::DegenerateKrylov);
                    first
                } else {
                    first + sign * ct * g0 * g0 / den
                }
            }
        }
    };
    Ok((alpha, Status::Computed, warning))
}
