use std::fmt;

use super::moves::{schedule, solve_subproblem, VolumeSchedule};
use super::smoothing::{ConicFilter, Momentum};
use crate::error::{Error, Result};
use crate::fem::{DensityVector, FemProblem};
use crate::fvsa::{
    sensitivity_cgm, sensitivity_foci, sensitivity_hoci, sensitivity_naive, sensitivity_woodbury,
    zero_disconnected_voids, CgmConfig, Equilibrium, PrecondKind, SensitivityVector,
};
use crate::selective_inverse::{LowRankChange, SelectiveInverse};

/// How raw sensitivities are computed each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensitivityMethod {
    /// One perturbed factorization per element.
    Naive,
    /// First order, void values scaled by `eps_v` (zero gives the solid-only variant).
    Foci {
        eps_v: f64,
    },
    /// Series truncated at order `q`.
    Hoci {
        q: usize,
        zero_voids: bool,
    },
    Woodbury,
    Cgm(CgmConfig),
}

impl SensitivityMethod {
    /// Raw sensitivities of the analysed topology, building the selective inverse if needed.
    pub fn evaluate(&self, problem: &FemProblem, eq: &Equilibrium) -> Result<SensitivityVector> {
        let s = match self.needs_selective_inverse() {
            true => Some(SelectiveInverse::from_envelope(&eq.factorization, problem.pattern().clone())?),
            false => None,
        };
        self.evaluate_with(problem, eq, s.as_ref())
    }

    fn evaluate_with(
        &self,
        problem: &FemProblem,
        eq: &Equilibrium,
        s: Option<&SelectiveInverse>,
    ) -> Result<SensitivityVector> {
        let s = || s.ok_or_else(|| Error::Inconsistent("selective inverse missing".into()));
        match *self {
            Self::Naive => sensitivity_naive(problem, eq),
            Self::Foci { eps_v } => sensitivity_foci(problem, &eq.x, &eq.u, eps_v),
            Self::Hoci { q, zero_voids } => sensitivity_hoci(problem, &eq.x, &eq.u, s()?, q, zero_voids),
            Self::Woodbury => sensitivity_woodbury(problem, &eq.x, &eq.u, s()?),
            Self::Cgm(c) => sensitivity_cgm(problem, eq, &c),
        }
    }

    fn needs_selective_inverse(&self) -> bool {
        matches!(self, Self::Hoci { .. } | Self::Woodbury)
    }

    /// Whether void values come out of the method at all (as opposed to being zeroed).
    fn computes_voids(&self) -> bool {
        match *self {
            Self::Foci { eps_v } => eps_v > 0.0,
            Self::Hoci { zero_voids, .. } => !zero_voids,
            Self::Cgm(c) => !c.zero_voids,
            Self::Naive | Self::Woodbury => true,
        }
    }
}

impl fmt::Display for SensitivityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Naive => write!(f, "naive"),
            Self::Foci { eps_v } if *eps_v == 0.0 => write!(f, "foci_s"),
            Self::Foci { eps_v } => write!(f, "foci(eps_v={eps_v:e})"),
            Self::Hoci { q, zero_voids } => write!(f, "hoci({q}{})", if *zero_voids { ",zero" } else { "" }),
            Self::Woodbury => write!(f, "woodbury"),
            Self::Cgm(c) => write!(
                f,
                "cgm({},{},{},{})",
                c.case.id(),
                c.steps,
                match c.precond {
                    PrecondKind::Identity => "none",
                    PrecondKind::Jacobi => "jacobi",
                    PrecondKind::ExactKbar => "exact",
                },
                if c.zero_voids { "zero" } else { "all" }
            ),
        }
    }
}

/// Optimizer settings. Rates are fractions of the element count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub er: f64,
    pub ar_max: f64,
    pub target_fraction: f64,
    /// Conic filter radius in length units; zero disables filtering.
    pub filter_radius: f64,
    pub method: SensitivityMethod,
    pub momentum: bool,
    pub patience: usize,
    pub max_iterations: usize,
    /// Recompute the selective inverse from scratch every this many iterations.
    pub refresh_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            er: 0.01,
            ar_max: 0.02,
            target_fraction: 0.5,
            filter_radius: 0.0,
            method: SensitivityMethod::Foci { eps_v: 1e-6 },
            momentum: true,
            patience: 10,
            max_iterations: 1000,
            refresh_every: 50,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| (0.0..=1.0).contains(&v);
        if !frac(self.er) {
            return Err(Error::Config(format!("er must lie in [0, 1], got {}", self.er)));
        }
        if !frac(self.ar_max) {
            return Err(Error::Config(format!("ar_max must lie in [0, 1], got {}", self.ar_max)));
        }
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return Err(Error::Config(format!("target_fraction must lie in (0, 1], got {}", self.target_fraction)));
        }
        if !(self.filter_radius >= 0.0) {
            return Err(Error::Config(format!("filter_radius must be non-negative, got {}", self.filter_radius)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.refresh_every == 0 {
            return Err(Error::Config("refresh_every must be at least 1".into()));
        }
        if let SensitivityMethod::Foci { eps_v } = self.method {
            if !frac(eps_v) {
                return Err(Error::Config(format!("eps_v must lie in [0, 1], got {eps_v}")));
            }
        }
        Ok(())
    }

    /// Target volume in elements.
    pub fn target_volume(&self, n: usize) -> usize {
        ((n as f64 * self.target_fraction).round() as usize).clamp(1, n)
    }
}

/// One row of the optimization history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub volume_fraction: f64,
    pub compliance: f64,
    /// Switches applied after this iteration's analysis: `(element, ±1)`.
    pub switches: Vec<(usize, i8)>,
    pub vv: i64,
    pub tv_max: usize,
    pub warnings: usize,
}

/// State of a run; `best` is tracked once the target volume is reached.
#[derive(Debug, Clone)]
struct OptimizerState {
    x: DensityVector,
    compliance: f64,
    best: Option<(DensityVector, f64, usize)>,
    history: Vec<IterationRecord>,
    stale: usize,
    momentum: Momentum,
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxIterations,
}

/// Final result of [`optimize`].
#[derive(Debug, Clone)]
pub struct Optimized {
    pub x: DensityVector,
    pub compliance: f64,
    /// Iteration at which `x` was analysed.
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
}

/// Runs the heuristic loop from `x0` and returns the best topology at the target volume.
///
/// Each iteration analyses the current topology, smooths the sensitivities, solves the
/// ranking subproblem and applies the move. Once the target volume is reached the best
/// compliance is tracked and the run stops after `patience` iterations without improvement.
pub fn optimize(problem: &FemProblem, cfg: &OptimizerConfig, x0: &DensityVector) -> Result<Optimized> {
    optimize_with(problem, cfg, x0, |_, _| {})
}

/// [`optimize`] with a callback on each analysed iteration.
pub fn optimize_with(
    problem: &FemProblem,
    cfg: &OptimizerConfig,
    x0: &DensityVector,
    mut observe: impl FnMut(&IterationRecord, &SensitivityVector),
) -> Result<Optimized> {
    cfg.validate()?;
    let n = problem.n_elements();
    if x0.len() != n {
        return Err(Error::InvalidInput(format!("initial topology has {} entries for {n} elements", x0.len())));
    }
    let target = cfg.target_volume(n);
    let vs = VolumeSchedule { er: cfg.er, ar_max: cfg.ar_max, target };
    let filter = ConicFilter::new(problem.mesh(), cfg.filter_radius);
    let mut state = OptimizerState {
        x: x0.clone(),
        compliance: f64::NAN,
        best: None,
        history: Vec::new(),
        stale: 0,
        momentum: Momentum::new(),
    };
    let mut sinv: Option<SelectiveInverse> = None;
    let mut since_refresh = 0;

    for it in 0..cfg.max_iterations {
        let step = (|| -> Result<bool> {
            let eq = Equilibrium::new(problem, &state.x)?;
            state.compliance = eq.compliance;
            if !eq.compliance.is_finite() {
                return Err(Error::Inconsistent(format!("compliance is {}", eq.compliance)));
            }
            let volume = state.x.volume();

            if volume == target {
                match &state.best {
                    Some((_, c, _)) if eq.compliance >= *c => state.stale += 1,
                    _ => {
                        state.best = Some((state.x.clone(), eq.compliance, it));
                        state.stale = 0;
                    }
                }
                if state.stale >= cfg.patience {
                    state.history.push(record(it, &state.x, eq.compliance, Vec::new(), 0, 0, 0));
                    return Ok(true);
                }
            }

            if cfg.method.needs_selective_inverse() && (sinv.is_none() || since_refresh >= cfg.refresh_every) {
                sinv = Some(SelectiveInverse::from_envelope(&eq.factorization, problem.pattern().clone())?);
                since_refresh = 0;
            }
            let mut raw = cfg.method.evaluate_with(problem, &eq, sinv.as_ref())?;
            if cfg.method.computes_voids() {
                zero_disconnected_voids(problem.mesh(), &state.x, &mut raw);
            }
            let filtered = filter.apply(&raw);
            let smoothed = if cfg.momentum { state.momentum.blend(&filtered) } else { filtered };

            let mc = schedule(n, &vs, volume);
            let y = solve_subproblem(&smoothed, &state.x, &mc)?;
            let switches: Vec<(usize, i8)> = y.switches().collect();
            let rec = record(it, &state.x, eq.compliance, switches, mc.vv, mc.tv_max, raw.warnings.len());
            observe(&rec, &smoothed);
            state.history.push(rec);

            if let Some(s) = sinv.as_mut() {
                if !y.as_slice().iter().all(|&v| v == 0) {
                    let change = LowRankChange::from_switches(problem, y.switches());
                    match s.update(&eq.factorization, &change) {
                        Ok(_) => since_refresh += 1,
                        // Ill-conditioned move (typically a cut-off region): rebuild next iteration.
                        Err(Error::Singular { .. }) => sinv = None,
                        Err(e) => return Err(e),
                    }
                }
            }
            state.x = y.apply(&state.x);
            Ok(false)
        })();
        match step {
            Ok(true) => return finish(state, StopReason::Patience),
            Ok(false) => {}
            Err(e) => return Err(e.at_iteration(it)),
        }
    }
    finish(state, StopReason::MaxIterations)
}

fn record(
    iteration: usize,
    x: &DensityVector,
    compliance: f64,
    switches: Vec<(usize, i8)>,
    vv: i64,
    tv_max: usize,
    warnings: usize,
) -> IterationRecord {
    IterationRecord { iteration, volume_fraction: x.volume_fraction(), compliance, switches, vv, tv_max, warnings }
}

fn finish(state: OptimizerState, stop: StopReason) -> Result<Optimized> {
    match state.best {
        Some((x, compliance, iteration)) => Ok(Optimized { x, compliance, iteration, history: state.history, stop }),
        // Target never reached: return the last analysed topology.
        None => {
            let mut x = state.x;
            let last = state.history.last().map_or(0, |r| {
                // Undo the move that followed the last analysis.
                for &(e, y) in &r.switches {
                    x.set(e, y < 0);
                }
                r.iteration
            });
            Ok(Optimized { x, compliance: state.compliance, iteration: last, history: state.history, stop })
        }
    }
}
