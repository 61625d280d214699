use nalgebra::{DMatrix, DVector};

use super::factor::Factorization;
use super::sparse::SparseSymmetric;
use crate::error::{Error, Result};

/// Symmetric linear operator `y = A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseSymmetric {
    fn dim(&self) -> usize {
        SparseSymmetric::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_into(x, y)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// `base + P delta Pᵀ` where `P` selects `dofs`; the delta is never assembled.
#[derive(Debug, Clone, Copy)]
pub struct Perturbed<'a, O: ?Sized> {
    pub base: &'a O,
    pub dofs: &'a [usize],
    pub delta: &'a DMatrix<f64>,
}

impl<O: LinearOperator + ?Sized> LinearOperator for Perturbed<'_, O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply(x, y);
        for (a, &r) in self.dofs.iter().enumerate() {
            let mut acc = 0.0;
            for (b, &c) in self.dofs.iter().enumerate() {
                acc += self.delta[(a, b)] * x[c];
            }
            y[r] += acc;
        }
    }
}

/// Preconditioner `M`, applied as `M⁻¹ r`.
#[derive(Debug, Clone)]
pub enum Preconditioner<'a> {
    Identity,
    /// Reciprocal diagonal.
    Jacobi(Vec<f64>),
    /// Direct solve with a stored factorization.
    Exact(&'a Factorization),
}

impl Preconditioner<'_> {
    /// Jacobi preconditioner `M = diag(K)`.
    pub fn jacobi(k: &SparseSymmetric) -> Result<Self> {
        Self::jacobi_from_diagonal(k.diagonal().as_slice())
    }

    pub fn jacobi_from_diagonal(diag: &[f64]) -> Result<Self> {
        diag.iter()
            .enumerate()
            .map(|(r, &d)| {
                if d > 0.0 && d.is_finite() {
                    Ok(1.0 / d)
                } else {
                    Err(Error::InvalidInput(format!("Jacobi preconditioner: diagonal entry {r} is {d}")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Preconditioner::Jacobi)
    }

    pub fn apply_inverse(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Preconditioner::Exact(f) => {
                z.copy_from_slice(r);
                f.solve_in_place(z);
            }
        }
    }

    /// True when `M⁻¹` does not couple DOFs.
    pub fn is_diagonal(&self) -> bool {
        !matches!(self, Preconditioner::Exact(_))
    }
}

/// Iterate of the preconditioned conjugate gradient loop.
#[derive(Debug, Clone, PartialEq)]
pub struct CgmState {
    pub u: DVector<f64>,
    pub d: DVector<f64>,
    /// Residual `K u - f`, updated recursively.
    pub g: DVector<f64>,
    pub steps: usize,
}

/// Stepwise preconditioned conjugate gradients with caller-chosen `u0` and `d0`.
pub struct Pcg<'a, O: LinearOperator + ?Sized> {
    op: &'a O,
    precond: &'a Preconditioner<'a>,
    state: CgmState,
    e: DVector<f64>,
    q: DVector<f64>,
}

impl<'a, O: LinearOperator + ?Sized> Pcg<'a, O> {
    pub fn new(
        op: &'a O,
        f: &DVector<f64>,
        u0: DVector<f64>,
        d0: DVector<f64>,
        precond: &'a Preconditioner<'a>,
    ) -> Result<Self> {
        let n = op.dim();
        if f.len() != n || u0.len() != n || d0.len() != n {
            return Err(Error::InvalidInput(format!(
                "pcg: operator dimension {n}, got f {}, u0 {}, d0 {}",
                f.len(),
                u0.len(),
                d0.len()
            )));
        }
        let mut g = DVector::zeros(n);
        op.apply(u0.as_slice(), g.as_mut_slice());
        g -= f;
        Ok(Self::from_residual(op, u0, d0, g, precond))
    }

    /// Starts from a known residual `g0 = K u0 - f`.
    pub fn from_residual(
        op: &'a O,
        u0: DVector<f64>,
        d0: DVector<f64>,
        g0: DVector<f64>,
        precond: &'a Preconditioner<'a>,
    ) -> Self {
        let n = op.dim();
        Self {
            op,
            precond,
            state: CgmState { u: u0, d: d0, g: g0, steps: 0 },
            e: DVector::zeros(n),
            q: DVector::zeros(n),
        }
    }

    pub fn state(&self) -> &CgmState {
        &self.state
    }

    pub fn into_state(self) -> CgmState {
        self.state
    }

    /// Whether the loop would return before the next step.
    pub fn converged(&self, tau: f64) -> bool {
        let gn = self.state.g.norm();
        gn < tau || gn == 0.0
    }

    /// One pass of the loop body.
    pub fn step(&mut self) -> Result<()> {
        let s = &mut self.state;
        self.op.apply(s.d.as_slice(), self.e.as_mut_slice());
        let de = s.d.dot(&self.e);
        if !(de > 0.0) {
            return Err(Error::CgBreakdown { step: s.steps, curvature: de });
        }
        let mu = -s.d.dot(&s.g) / de;
        s.u.axpy(mu, &s.d, 1.0);
        s.g.axpy(mu, &self.e, 1.0);
        self.precond.apply_inverse(s.g.as_slice(), self.q.as_mut_slice());
        let beta = self.e.dot(&self.q) / de;
        s.d *= beta;
        s.d -= &self.q;
        s.steps += 1;
        Ok(())
    }
}

/// Runs at most `m` steps, returning early once `‖g‖ < tau` (or `g` vanishes exactly).
pub fn pcg<O: LinearOperator + ?Sized>(
    op: &O,
    f: &DVector<f64>,
    u0: DVector<f64>,
    d0: DVector<f64>,
    precond: &Preconditioner<'_>,
    m: usize,
    tau: f64,
) -> Result<CgmState> {
    let mut it = Pcg::new(op, f, u0, d0, precond)?;
    for _ in 0..m {
        if it.converged(tau) {
            break;
        }
        it.step()?;
    }
    Ok(it.into_state())
}
