use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{Axis, DensityVector, FemProblem, LoadBuilder, Material, MeshBuilder};

/// Soft-kill parameter of every benchmark except the 4×4 norm study.
pub const EPS_K: f64 = 1e-9;

/// MBB half-beam material and load: steel in N/mm², 10 mm thick, 1 kN on the half-beam.
pub const MBB_YOUNGS: f64 = 210_000.0;
pub const MBB_THICKNESS: f64 = 10.0;
pub const MBB_LOAD: f64 = 1000.0;

/// Benchmark problems known to the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemId {
    /// 100-element tie-beam.
    TieBeamCoarse,
    /// Tie-beam with every element split into `scale × scale`.
    TieBeamRefined(usize),
    /// 32×20 cantilever at fixed half volume.
    Cantilever32x20,
    /// MBB half-beam on an `nx × ny` mesh.
    Mbb(usize, usize),
    /// 4×4 cantilever with topology 1 to 4 of the void-norm counterexample.
    Counterexample(u8),
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TieBeamCoarse => write!(f, "tie_beam_coarse"),
            Self::TieBeamRefined(s) => write!(f, "tie_beam_refined({s})"),
            Self::Cantilever32x20 => write!(f, "cantilever_32x20"),
            Self::Mbb(nx, ny) => write!(f, "mbb({nx},{ny})"),
            Self::Counterexample(t) => write!(f, "appendix_b_4x4({t})"),
        }
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_call(s)?;
        let nums = |k: usize| -> Result<Vec<usize>> {
            let v = args
                .iter()
                .map(|a| a.parse::<usize>().map_err(|_| Error::Config(format!("problem: `{a}` is not a count"))))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != k {
                return Err(Error::Config(format!("problem: `{name}` takes {k} argument(s)")));
            }
            Ok(v)
        };
        let id = match name {
            "tie_beam_coarse" => {
                nums(0)?;
                Self::TieBeamCoarse
            }
            "tie_beam_refined" => Self::TieBeamRefined(nums(1)?[0]),
            "cantilever_32x20" => {
                nums(0)?;
                Self::Cantilever32x20
            }
            "mbb" => {
                let v = nums(2)?;
                Self::Mbb(v[0], v[1])
            }
            "appendix_b_4x4" => {
                let t = nums(1)?[0];
                Self::Counterexample(u8::try_from(t).unwrap_or(0))
            }
            _ => return Err(Error::Config(format!("problem: unknown id `{name}`"))),
        };
        id.validate()?;
        Ok(id)
    }
}

/// `name(a, b)` into the name and trimmed arguments; a bare name has none.
pub(crate) fn split_call(s: &str) -> Result<(&str, Vec<&str>)> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, Vec::new())),
        Some(open) => {
            let inner = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Config(format!("unbalanced parentheses in `{s}`")))?;
            let args = if inner.trim().is_empty() { Vec::new() } else { inner.split(',').map(str::trim).collect() };
            Ok((s[..open].trim(), args))
        }
    }
}

/// A benchmark ready to analyse: the finite element problem and its initial topology.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub id: ProblemId,
    pub problem: FemProblem,
    pub initial: DensityVector,
}

impl ProblemId {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::TieBeamRefined(0) => Err(Error::Config("problem: refinement scale must be at least 1".into())),
            Self::Mbb(nx, ny) if nx == 0 || ny == 0 => Err(Error::Config("problem: mbb needs a non-empty mesh".into())),
            Self::Counterexample(t) if !(1..=4).contains(&t) => {
                Err(Error::Config(format!("problem: appendix_b_4x4 topology must be 1 to 4, got {t}")))
            }
            _ => Ok(()),
        }
    }

    /// Element count without building the problem.
    pub fn n_elements(&self) -> usize {
        match *self {
            Self::TieBeamCoarse => 100,
            Self::TieBeamRefined(s) => 100 * s * s,
            Self::Cantilever32x20 => 640,
            Self::Mbb(nx, ny) => nx * ny,
            Self::Counterexample(_) => 16,
        }
    }

    /// Builds the problem with the default soft-kill parameter of the benchmark.
    pub fn build(&self) -> Result<Benchmark> {
        self.build_with(None)
    }

    pub fn build_with(&self, eps_k: Option<f64>) -> Result<Benchmark> {
        self.validate()?;
        let (problem, initial) = match *self {
            Self::TieBeamCoarse => tie_beam(1, eps_k.unwrap_or(EPS_K))?,
            Self::TieBeamRefined(s) => tie_beam(s, eps_k.unwrap_or(EPS_K))?,
            Self::Cantilever32x20 => cantilever(eps_k.unwrap_or(EPS_K))?,
            Self::Mbb(nx, ny) => mbb(nx, ny, eps_k.unwrap_or(EPS_K))?,
            Self::Counterexample(t) => counterexample(t, eps_k.unwrap_or(0.1))?,
        };
        Ok(Benchmark { id: *self, problem, initial })
    }
}

/// Column of the vertical tie on the coarse grid.
pub const TIE_COLUMN: usize = 16;

/// Elements of the vertical tie (above the beam) in a tie-beam problem.
pub fn tie_elements(b: &Benchmark) -> Vec<usize> {
    let s = match b.id {
        ProblemId::TieBeamCoarse => 1,
        ProblemId::TieBeamRefined(s) => s,
        _ => return Vec::new(),
    };
    let mesh = b.problem.mesh();
    (0..mesh.n_elements()).filter(|&e| mesh.element_cell(e).1 >= 3 * s).collect()
}

/// 32×3 beam clamped on the left with a 1×4 tie standing on it; the tie top slides horizontally.
///
/// A horizontal load of 2 per unit length acts on the right edge and a vertical load
/// of 1 per unit length on the bottom edge under the tie. Unit material, zero Poisson ratio.
fn tie_beam(s: usize, eps_k: f64) -> Result<(FemProblem, DensityVector)> {
    let (len, depth, tie) = (32 * s, 3 * s, 4 * s);
    let p = TIE_COLUMN * s;
    let h = 1.0 / s as f64;
    let mut b = MeshBuilder::new(len, depth + tie, h, h).active(|i, j| j < depth || (i >= p && i < p + s));
    for j in 0..=depth {
        b = b.fix_both(0, j);
    }
    for i in p..=p + s {
        b = b.fix(i, depth + tie, Axis::Y);
    }
    let mesh = b.build()?;
    let f = LoadBuilder::new(&mesh)
        .edge_vertical(len, 0, depth, Axis::X, -2.0)?
        .edge_horizontal(0, p, p + s, Axis::Y, -1.0)?
        .build();
    let n = mesh.n_elements();
    Ok((FemProblem::new(mesh, Material::plane(1.0, 0.0)?, eps_k, f)?, DensityVector::solid(n)))
}

/// 80×50 mm cantilever clamped on the left, rows 5 to 14 solid initially, tip load at mid-height.
fn cantilever(eps_k: f64) -> Result<(FemProblem, DensityVector)> {
    let (nx, ny) = (32, 20);
    let mut b = MeshBuilder::new(nx, ny, 2.5, 2.5);
    for j in 0..=ny {
        b = b.fix_both(0, j);
    }
    let mesh = b.build()?;
    let f = LoadBuilder::new(&mesh).point(nx, ny / 2, Axis::Y, -1000.0)?.build();
    let x = DensityVector::new((0..mesh.n_elements()).map(|e| (5..15).contains(&mesh.element_cell(e).1)).collect());
    Ok((FemProblem::new(mesh, Material::plane(210_000.0, 0.3)?, eps_k, f)?, x))
}

/// Right half of an MBB beam, 1200×400 mm: symmetry on the left edge, roller at the
/// bottom-right corner, downward load at the top-left corner.
fn mbb(nx: usize, ny: usize, eps_k: f64) -> Result<(FemProblem, DensityVector)> {
    let mut b = MeshBuilder::new(nx, ny, 1200.0 / nx as f64, 400.0 / ny as f64);
    for j in 0..=ny {
        b = b.fix(0, j, Axis::X);
    }
    b = b.fix(nx, 0, Axis::Y);
    let mesh = b.build()?;
    let f = LoadBuilder::new(&mesh).point(0, ny, Axis::Y, -MBB_LOAD)?.build();
    let n = mesh.n_elements();
    Ok((FemProblem::new(mesh, Material::new(MBB_YOUNGS, 0.3, MBB_THICKNESS)?, eps_k, f)?, DensityVector::solid(n)))
}

/// Voids of the four counterexample topologies, numbered from 1 down each column from the left.
pub const COUNTEREXAMPLE_VOIDS: [&[usize]; 4] = [&[3], &[3, 7], &[3, 7, 2], &[3, 7, 2, 6]];

/// 4×4 cantilever of 20×12.5 mm elements clamped on the left, steel, tip load at the
/// bottom-right corner.
fn counterexample(topology: u8, eps_k: f64) -> Result<(FemProblem, DensityVector)> {
    let mut b = MeshBuilder::new(4, 4, 20.0, 12.5);
    for j in 0..=4 {
        b = b.fix_both(0, j);
    }
    let mesh = b.build()?;
    let f = LoadBuilder::new(&mesh).point(4, 0, Axis::Y, -1000.0)?.build();
    let mut x = DensityVector::solid(16);
    for &v in COUNTEREXAMPLE_VOIDS[usize::from(topology) - 1] {
        x.set(v - 1, false);
    }
    Ok((FemProblem::new(mesh, Material::plane(210_000.0, 0.3)?, eps_k, f)?, x))
}
