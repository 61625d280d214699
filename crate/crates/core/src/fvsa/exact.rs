use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{is_connective, Equilibrium, SensitivityVector, Status, Warning};
use crate::error::{Error, Result};
use crate::fem::{compliance, DensityVector, FemProblem};
use crate::linalg::Factorization;
use crate::selective_inverse::{solve_unit, SelectiveInverse};

/// `I - A_i` closer than this to singular raises a warning.
const NEAR_SINGULAR: f64 = 1e-12;

/// Reference sensitivities from one perturbed factorization per element.
pub fn sensitivity_naive(problem: &FemProblem, eq: &Equilibrium) -> Result<SensitivityVector> {
    let f = problem.load();
    let entries = (0..problem.n_elements())
        .into_par_iter()
        .map(|e| {
            let solid = eq.x.is_solid(e);
            let delta = if solid { -problem.ki(e) } else { problem.ki(e).clone() };
            let perturbed = eq.stiffness.with_block_added(problem.element_dofs(e), &delta)?;
            let fact = Factorization::new(&perturbed).map_err(|err| err.at_element(e))?;
            let c = compliance(&fact.solve(f), f);
            let alpha = if solid { eq.compliance - c } else { c - eq.compliance };
            Ok((alpha, Status::Computed, None))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityVector::from_entries(entries))
}

/// First-order estimate `-½ ūᵀK_iū`, scaled by `eps_v` on voids.
pub fn sensitivity_foci(
    problem: &FemProblem,
    x: &DensityVector,
    u: &DVector<f64>,
    eps_v: f64,
) -> Result<SensitivityVector> {
    if !(0.0..=1.0).contains(&eps_v) {
        return Err(Error::InvalidInput(format!("void penalization must lie in [0, 1], got {eps_v}")));
    }
    let alpha = (0..problem.n_elements())
        .map(|e| {
            let ci = problem.element_energy(e, u);
            if x.is_solid(e) {
                -ci
            } else {
                -eps_v * ci
            }
        })
        .collect();
    Ok(SensitivityVector::computed(alpha))
}

/// `A_i = √K_i K̄⁻¹ √K_i` and `v_i = √K_i ū` with the eigen form of `A_i`.
#[derive(Debug, Clone)]
pub struct ElementOperator {
    pub a: DMatrix<f64>,
    pub v: DVector<f64>,
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// `Φᵀ v`.
    pub w: DVector<f64>,
}

impl ElementOperator {
    /// Spectral norm, i.e. the largest eigenvalue.
    pub fn norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m: f64, &l| m.max(l))
    }

    /// `C_i = ½ vᵀv = ½ ūᵀK_iū`.
    pub fn energy(&self) -> f64 {
        0.5 * self.v.norm_squared()
    }
}

pub fn element_operator(
    problem: &FemProblem,
    e: usize,
    s: &SelectiveInverse,
    u: &DVector<f64>,
) -> Result<ElementOperator> {
    let z = s.block(problem.element_dofs(e))?;
    let sq = problem.sqrt_ki(e);
    let a = sq * z * sq;
    let a = (&a + a.transpose()) * 0.5;
    let v = sq * problem.gather(e, u);
    let eig = a.clone().symmetric_eigen();
    let w = eig.eigenvectors.transpose() * &v;
    Ok(ElementOperator { a, v, eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors, w })
}

/// Partial sums `-½ Σ_{a=1..q} vᵀ(±A)^{a-1} v`: `+` for removal, `-` for addition.
pub fn hoci_partial_sums(op: &ElementOperator, solid: bool, q: usize) -> Vec<f64> {
    let sign = if solid { 1.0 } else { -1.0 };
    let mut s = op.v.clone();
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(q);
    for _ in 0..q {
        sum -= 0.5 * op.v.dot(&s);
        out.push(sum);
        s = &op.a * s * sign;
    }
    out
}

/// Truncated series estimate. Voids are either zeroed or summed with a divergence flag.
pub fn sensitivity_hoci(
    problem: &FemProblem,
    x: &DensityVector,
    u: &DVector<f64>,
    s: &SelectiveInverse,
    q: usize,
    zero_voids: bool,
) -> Result<SensitivityVector> {
    if q == 0 {
        return Err(Error::InvalidInput("series order must be at least 1".into()));
    }
    let entries = (0..problem.n_elements())
        .into_par_iter()
        .map(|e| {
            let solid = x.is_solid(e);
            if !solid && zero_voids {
                return Ok((0.0, Status::ZeroedVoid, None));
            }
            let op = element_operator(problem, e, s, u)?;
            let alpha = *hoci_partial_sums(&op, solid, q).last().unwrap();
            let n = op.norm();
            Ok(match solid {
                true if is_connective(problem, x, e, n) => (alpha, Status::MaskedConnective, None),
                true => (alpha, Status::Computed, None),
                false => (alpha, Status::Computed, (n >= 1.0).then_some(Warning::SeriesDivergent)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityVector::from_entries(entries))
}

/// Exact sensitivities `-½ vᵀ(I ± A)⁻¹ v` from the selective inverse.
pub fn sensitivity_woodbury(
    problem: &FemProblem,
    x: &DensityVector,
    u: &DVector<f64>,
    s: &SelectiveInverse,
) -> Result<SensitivityVector> {
    let entries = (0..problem.n_elements())
        .into_par_iter()
        .map(|e| {
            let solid = x.is_solid(e);
            let op = element_operator(problem, e, s, u)?;
            let g = op.a.nrows();
            let m = if solid { DMatrix::identity(g, g) - &op.a } else { DMatrix::identity(g, g) + &op.a };
            let n = op.norm();
            let mut warning = (solid && 1.0 - n < NEAR_SINGULAR).then_some(Warning::NearSingular);
            let alpha = match m.cholesky() {
                Some(ch) => -0.5 * op.v.dot(&ch.solve(&op.v)),
                None => {
                    // Fall back on the eigen form when the small solve is not definite.
                    warning = Some(Warning::NearSingular);
                    let sign = if solid { -1.0 } else { 1.0 };
                    -0.5 * op.w.iter().zip(op.eigenvalues.iter()).map(|(w, l)| w * w / (1.0 + sign * l)).sum::<f64>()
                }
            };
            let status = if is_connective(problem, x, e, n) { Status::MaskedConnective } else { Status::Computed };
            Ok((alpha, status, warning))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityVector::from_entries(entries))
}

/// Bounds on the first-order and series truncation errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds {
    /// Void: `C_i n/(1+n)`; solid: `C_i n/(1-n)`.
    pub foci: f64,
    /// Solid only: `C_i nᵠ/(1-n)`.
    pub hoci: Option<f64>,
}

/// `n = ‖A_i‖₂`. A solid element with `n ≥ 1` contradicts theory and is an error.
pub fn error_bounds(op: &ElementOperator, solid: bool, q: usize) -> Result<ErrorBounds> {
    let n = op.norm();
    let ci = op.energy();
    if !solid {
        return Ok(ErrorBounds { foci: ci * n / (1.0 + n), hoci: None });
    }
    if n >= 1.0 {
        return Err(Error::Inconsistent(format!("solid element with operator norm {n} ≥ 1")));
    }
    let exp = i32::try_from(q).map_err(|_| Error::InvalidInput(format!("series order {q} too large")))?;
    Ok(ErrorBounds { foci: ci * n / (1.0 - n), hoci: Some(ci * n.powi(exp) / (1.0 - n)) })
}

/// `‖A_i‖₂` for every element.
pub fn norm_map(problem: &FemProblem, s: &SelectiveInverse) -> Result<Vec<f64>> {
    let zero = DVector::zeros(problem.n_dofs());
    (0..problem.n_elements())
        .into_par_iter()
        .map(|e| element_operator(problem, e, s, &zero).map(|op| op.norm()))
        .collect()
}

/// `‖√K_i R⁻¹ √K_i‖₂` with `R = K̄ + K_i` for voids and `K̄ - K_i` for solids.
pub fn b_norm(problem: &FemProblem, eq: &Equilibrium, e: usize) -> Result<f64> {
    let solid = eq.x.is_solid(e);
    let delta = if solid { -problem.ki(e) } else { problem.ki(e).clone() };
    let dofs = problem.element_dofs(e);
    let r = eq.stiffness.with_block_added(dofs, &delta)?;
    let fact = Factorization::new(&r)?;
    let mut z = DMatrix::zeros(dofs.len(), dofs.len());
    for (b, &c) in dofs.iter().enumerate() {
        let col = solve_unit(&fact, problem.n_dofs(), c);
        for (a, &rr) in dofs.iter().enumerate() {
            z[(a, b)] = col[rr];
        }
    }
    let sq = problem.sqrt_ki(e);
    let b = sq * z * sq;
    Ok(((&b + b.transpose()) * 0.5).symmetric_eigenvalues().max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{Axis, LoadBuilder, Material, MeshBuilder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cantilever(nx: usize, ny: usize, eps_k: f64) -> FemProblem {
        let mut b = MeshBuilder::new(nx, ny, 1.0, 1.0);
        for j in 0..=ny {
            b = b.fix_both(0, j);
        }
        let mesh = b.build().unwrap();
        let f = LoadBuilder::new(&mesh).point(nx, ny / 2, Axis::Y, -1.0).unwrap().build();
        FemProblem::new(mesh, Material::plane(1.0, 0.3).unwrap(), eps_k, f).unwrap()
    }

    fn setup(p: &FemProblem, x: &DensityVector) -> (Equilibrium, SelectiveInverse) {
        let eq = Equilibrium::new(p, x).unwrap();
        let s = SelectiveInverse::from_envelope(&eq.factorization, p.pattern().clone()).unwrap();
        (eq, s)
    }

    #[test]
    fn naive_matches_two_full_solves() {
        let p = cantilever(2, 1, 1e-3);
        let x = DensityVector::solid(2);
        let eq = Equilibrium::new(&p, &x).unwrap();
        let s = sensitivity_naive(&p, &eq).unwrap();
        let far = 1;
        let c_removed = Equilibrium::new(&p, &x.flipped(far)).unwrap().compliance;
        assert!((s.alpha[far] - (eq.compliance - c_removed)).abs() <= 1e-10 * c_removed);
    }

    #[test]
    fn foci_void_scaling() {
        let p = cantilever(3, 2, 1e-3);
        let x = DensityVector::from_bits(&[1, 1, 0, 1, 0, 1]).unwrap();
        let eq = Equilibrium::new(&p, &x).unwrap();
        let zero = sensitivity_foci(&p, &x, &eq.u, 0.0).unwrap();
        let half = sensitivity_foci(&p, &x, &eq.u, 0.5).unwrap();
        for e in 0..6 {
            if x.is_solid(e) {
                assert_eq!(zero.alpha[e], half.alpha[e]);
            } else {
                assert_eq!(zero.alpha[e], 0.0);
            }
            // Dense quadratic form oracle.
            let ue = p.gather(e, &eq.u);
            let q = -0.5 * (ue.transpose() * p.ki(e) * &ue)[(0, 0)];
            let expect = if x.is_solid(e) { q } else { 0.5 * q };
            assert!((half.alpha[e] - expect).abs() <= 1e-12 * q.abs().max(1e-300));
        }
        assert!(sensitivity_foci(&p, &x, &eq.u, 1.5).is_err());
    }

    #[test]
    fn woodbury_matches_naive() {
        let p = cantilever(4, 3, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let x = DensityVector::new((0..12).map(|_| rng.gen_bool(0.7)).collect());
            let (eq, s) = setup(&p, &x);
            let w = sensitivity_woodbury(&p, &x, &eq.u, &s).unwrap();
            let n = sensitivity_naive(&p, &eq).unwrap();
            for e in 0..12 {
                assert!((w.alpha[e] - n.alpha[e]).abs() <= 1e-8 * n.alpha[e].abs().max(1e-12));
            }
        }
    }

    #[test]
    fn first_series_term_is_foci() {
        let p = cantilever(3, 2, 1e-3);
        let x = DensityVector::from_bits(&[1, 0, 1, 1, 1, 0]).unwrap();
        let (eq, s) = setup(&p, &x);
        let h = sensitivity_hoci(&p, &x, &eq.u, &s, 1, false).unwrap();
        let f = sensitivity_foci(&p, &x, &eq.u, 1.0).unwrap();
        for e in 0..6 {
            assert!((h.alpha[e] - f.alpha[e]).abs() <= 1e-10 * f.alpha[e].abs());
        }
    }

    #[test]
    fn scalar_geometric_series() {
        let op = ElementOperator {
            a: DMatrix::from_element(1, 1, 0.5),
            v: DVector::from_element(1, 1.0),
            eigenvalues: DVector::from_element(1, 0.5),
            eigenvectors: DMatrix::identity(1, 1),
            w: DVector::from_element(1, 1.0),
        };
        let sums = hoci_partial_sums(&op, true, 60);
        assert_eq!(sums[0], -0.5);
        assert_eq!(sums[1], -0.75);
        assert!((sums[59] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn bounds_on_trivial_norms() {
        let mut op = ElementOperator {
            a: DMatrix::zeros(1, 1),
            v: DVector::from_element(1, 2.0),
            eigenvalues: DVector::zeros(1),
            eigenvectors: DMatrix::identity(1, 1),
            w: DVector::from_element(1, 2.0),
        };
        let b = error_bounds(&op, true, 3).unwrap();
        assert_eq!((b.foci, b.hoci), (0.0, Some(0.0)));
        op.eigenvalues[0] = 1.0;
        let b = error_bounds(&op, false, 3).unwrap();
        assert_eq!(b.foci / op.energy(), 0.5);
        assert!(error_bounds(&op, true, 3).is_err());
    }
}
