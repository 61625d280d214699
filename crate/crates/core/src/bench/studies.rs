use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::config::{MethodSpec, RunConfig, TopologySource};
use super::problems::Benchmark;
use crate::beso::{optimize, optimize_with, schedule, Optimized, StopReason, VolumeSchedule};
use crate::error::{Error, Result};
use crate::fem::{DensityVector, Mesh};
use crate::fvsa::{
    b_norm, cgm_element_history, disconnects_load, norm_map, relative_l2_error, CgmCase, CgmConfig, Equilibrium,
    PrecondKind,
};
use crate::selective_inverse::SelectiveInverse;

/// Version of every CSV layout written here; bumped when columns change.
pub const SCHEMA_VERSION: u32 = 1;

/// PGM gray levels.
const PGM_SOLID: u8 = 0;
const PGM_VOID: u8 = 200;
const PGM_OUTSIDE: u8 = 255;

fn csv_writer(path: &Path, study: &str, note: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "# fvsa {study} schema {SCHEMA_VERSION}{}",
        if note.is_empty() { String::new() } else { format!("; {note}") }
    )?;
    Ok(csv::Writer::from_writer(w))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

fn finish(w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

/// Builds the configured benchmark.
pub fn build(cfg: &RunConfig) -> Result<Benchmark> {
    cfg.problem.build_with(cfg.eps_k)
}

/// Resolves the configured topology for a benchmark.
pub fn topology(b: &Benchmark, source: &TopologySource) -> Result<DensityVector> {
    match source {
        TopologySource::Initial => Ok(b.initial.clone()),
        TopologySource::Solid => Ok(DensityVector::solid(b.problem.n_elements())),
        TopologySource::File(p) => read_topology(p, b.problem.n_elements()),
    }
}

/// Reads the `element,i,j,x` table written by [`write_topology_csv`].
pub fn read_topology(path: &Path, n: usize) -> Result<DensityVector> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
    let mut x = vec![None; n];
    for row in r.records() {
        let row = row.map_err(csv_err)?;
        let field = |k: usize| row.get(k).unwrap_or("").trim().to_owned();
        let e: usize = field(0)
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{}: bad element `{}`", path.display(), field(0))))?;
        let v = match field(3).as_str() {
            "1" => true,
            "0" => false,
            s => return Err(Error::InvalidInput(format!("{}: element {e} has value `{s}`", path.display()))),
        };
        *x.get_mut(e).ok_or_else(|| Error::InvalidInput(format!("{}: element {e} out of range", path.display())))? =
            Some(v);
    }
    let x = x
        .into_iter()
        .enumerate()
        .map(|(e, v)| v.ok_or_else(|| Error::InvalidInput(format!("{}: element {e} missing", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityVector::new(x))
}

pub fn write_topology_csv(path: &Path, mesh: &Mesh, x: &DensityVector) -> Result<()> {
    let mut w = csv_writer(path, "topology", "x = 1 solid, 0 void")?;
    w.write_record(["element", "i", "j", "x"]).map_err(csv_err)?;
    for e in 0..mesh.n_elements() {
        let (i, j) = mesh.element_cell(e);
        w.serialize((e, i, j, u8::from(x.is_solid(e)))).map_err(csv_err)?;
    }
    finish(w)
}

/// Plain PGM (P2), top row first: solid 0, void 200, cells outside the domain 255.
pub fn write_topology_pgm(path: &Path, mesh: &Mesh, x: &DensityVector) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P2")?;
    writeln!(w, "# solid {PGM_SOLID}, void {PGM_VOID}, outside the domain {PGM_OUTSIDE}")?;
    writeln!(w, "{} {}", mesh.nx(), mesh.ny())?;
    writeln!(w, "255")?;
    for j in (0..mesh.ny()).rev() {
        let row: Vec<String> = (0..mesh.nx())
            .map(|i| match mesh.element_at(i, j) {
                Some(e) if x.is_solid(e) => PGM_SOLID,
                Some(_) => PGM_VOID,
                None => PGM_OUTSIDE,
            })
            .map(|v| v.to_string())
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of `optimize` with the settings in force.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub result: Optimized,
    /// `(VV, TV_max)` while shrinking and at the target volume.
    pub shrinking: (i64, usize),
    pub constant: (i64, usize),
    /// Multiplier applied to reported compliances.
    pub compliance_scale: f64,
}

/// Runs the optimizer and writes `history.csv`, `topology.pgm`, `topology.csv` and `summary.txt`.
pub fn run_optimize(cfg: &RunConfig, out: &Path, allow_large: bool) -> Result<OptimizeReport> {
    cfg.check_guard(&[cfg.method], allow_large)?;
    let b = build(cfg)?;
    let x0 = topology(&b, &cfg.topology)?;
    let opt = cfg.optimizer();
    let n = b.problem.n_elements();
    let vs = VolumeSchedule { er: opt.er, ar_max: opt.ar_max, target: opt.target_volume(n) };
    let shrink = schedule(n, &vs, x0.volume());
    let hold = schedule(n, &vs, vs.target);
    let result = optimize(&b.problem, &opt, &x0)?;
    let scale = if cfg.full_beam { 2.0 } else { 1.0 };

    fs::create_dir_all(out)?;
    let mut w = csv_writer(&out.join("history.csv"), "history", "compliance of the analysed topology")?;
    w.write_record(["iteration", "volume_fraction", "compliance"]).map_err(csv_err)?;
    for r in &result.history {
        w.serialize((r.iteration, r.volume_fraction, r.compliance * scale)).map_err(csv_err)?;
    }
    finish(w)?;
    write_topology_pgm(&out.join("topology.pgm"), b.problem.mesh(), &result.x)?;
    write_topology_csv(&out.join("topology.csv"), b.problem.mesh(), &result.x)?;

    let mut s = BufWriter::new(File::create(out.join("summary.txt"))?);
    writeln!(s, "problem: {}", cfg.problem)?;
    writeln!(s, "method: {}", opt.method)?;
    writeln!(s, "elements: {n}")?;
    writeln!(s, "initial volume fraction: {}", x0.volume_fraction())?;
    writeln!(s, "target volume fraction: {}", vs.target as f64 / n as f64)?;
    writeln!(s, "VV: {} | {}", shrink.vv, hold.vv)?;
    writeln!(s, "TV_max: {} | {}", shrink.tv_max, hold.tv_max)?;
    writeln!(s, "filter radius: {}", opt.filter_radius)?;
    writeln!(s, "momentum: {}", opt.momentum)?;
    writeln!(s, "patience: {}", opt.patience)?;
    if cfg.full_beam {
        writeln!(s, "compliance reported for the full symmetric beam (twice the design domain)")?;
    }
    writeln!(s, "best compliance: {}", result.compliance * scale)?;
    writeln!(s, "iterations to best: {}", result.iteration)?;
    writeln!(s, "iterations run: {}", result.history.len())?;
    writeln!(s, "final volume fraction: {}", result.x.volume_fraction())?;
    writeln!(
        s,
        "stopped by: {}",
        match result.stop {
            StopReason::Patience => "patience",
            StopReason::MaxIterations => "iteration limit",
        }
    )?;
    s.flush()?;
    Ok(OptimizeReport {
        result,
        shrinking: (shrink.vv, shrink.tv_max),
        constant: (hold.vv, hold.tv_max),
        compliance_scale: scale,
    })
}

/// Relative errors of one estimate against the exact values.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodError {
    pub method: String,
    pub solids: f64,
    pub all: f64,
}

/// Compares every configured estimate with the exact sensitivities; writes `compare.csv`
/// and `compare_global.csv`.
pub fn run_compare(cfg: &RunConfig, out: &Path, allow_large: bool) -> Result<Vec<MethodError>> {
    let mut methods = cfg.compare.clone();
    methods.push(cfg.exact);
    cfg.check_guard(&methods, allow_large)?;
    let b = build(cfg)?;
    let x = topology(&b, &cfg.topology)?;
    let eq = Equilibrium::new(&b.problem, &x)?;
    let exact = cfg.exact.resolve(cfg.eps_v).evaluate(&b.problem, &eq)?;
    let estimates = cfg
        .compare
        .iter()
        .map(|m| {
            let m = m.resolve(cfg.eps_v);
            m.evaluate(&b.problem, &eq).map(|s| (m.to_string(), s))
        })
        .collect::<Result<Vec<_>>>()?;

    // Connective values scale with 1/ε_k and would swamp every norm.
    let connective: Vec<bool> =
        (0..x.len()).into_par_iter().map(|e| x.is_solid(e) && disconnects_load(&b.problem, &x, e)).collect();

    fs::create_dir_all(out)?;
    let mut w = csv_writer(&out.join("compare.csv"), "compare", "rel_err = |estimate - exact| / |exact|")?;
    let mut header = vec!["element".to_string(), "solid".into(), "connective".into(), "exact".into()];
    for (name, _) in &estimates {
        header.push(name.clone());
        header.push(format!("{name} rel_err"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for e in 0..x.len() {
        let mut row = vec![
            e.to_string(),
            u8::from(x.is_solid(e)).to_string(),
            u8::from(connective[e]).to_string(),
            exact.alpha[e].to_string(),
        ];
        for (_, s) in &estimates {
            row.push(s.alpha[e].to_string());
            row.push(((s.alpha[e] - exact.alpha[e]).abs() / exact.alpha[e].abs()).to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)?;

    let errors: Vec<MethodError> = estimates
        .iter()
        .map(|(name, s)| MethodError {
            method: name.clone(),
            solids: relative_l2_error(&s.alpha, &exact.alpha, |e| x.is_solid(e) && !connective[e]),
            all: relative_l2_error(&s.alpha, &exact.alpha, |e| !connective[e]),
        })
        .collect();
    let mut w = csv_writer(
        &out.join("compare_global.csv"),
        "compare_global",
        "relative l2 errors without connective elements",
    )?;
    w.write_record(["method", "rel_l2_error_solids", "rel_l2_error_all"]).map_err(csv_err)?;
    for m in &errors {
        w.serialize((&m.method, m.solids, m.all)).map_err(csv_err)?;
    }
    finish(w)?;
    Ok(errors)
}

/// Smallest step counts meeting each criterion for one topology and configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepCounts {
    pub below_10: Option<usize>,
    pub below_50: Option<usize>,
    pub classified: Option<usize>,
    pub searched: usize,
}

/// Step counts over non-connective solid elements for one topology, doubling the search limit until all
/// criteria are met or `limit` is reached.
pub fn cgm_step_counts(
    b: &Benchmark,
    eq: &Equilibrium,
    exact: &[f64],
    cgm: &CgmConfig,
    limit: usize,
) -> Result<StepCounts> {
    let solids: Vec<usize> = (0..eq.x.len())
        .into_par_iter()
        .filter(|&e| eq.x.is_solid(e) && !disconnects_load(&b.problem, &eq.x, e))
        .collect();
    if solids.is_empty() {
        return Err(Error::InvalidInput("topology has no solid elements".into()));
    }
    let limit = limit.max(1);
    let exact_sel: Vec<f64> = solids.iter().map(|&e| exact[e]).collect();
    // Symmetric structures have tied minima; any element attaining the minimum counts.
    let exact_min = exact_sel[argmin_abs(exact_sel.iter().copied())].abs();
    let is_lowest = |k: usize| exact_sel[k].abs() <= exact_min * (1.0 + 1e-9);
    let mut max = 16.min(limit);
    loop {
        let histories = solids
            .par_iter()
            .map(|&e| cgm_element_history(&b.problem, eq, e, cgm, max).map(|(h, _)| h))
            .collect::<Result<Vec<_>>>()?;
        let mut counts = StepCounts { below_10: None, below_50: None, classified: None, searched: max };
        for m in 1..=max {
            let est: Vec<f64> = histories.iter().map(|h| h[(m - 1).min(h.len() - 1)]).collect();
            let err = relative_l2_error(&est, &exact_sel, |_| true);
            if err < 0.1 && counts.below_10.is_none() {
                counts.below_10 = Some(m);
            }
            if err < 0.5 && counts.below_50.is_none() {
                counts.below_50 = Some(m);
            }
            if counts.classified.is_none() && is_lowest(argmin_abs(est.iter().copied())) {
                counts.classified = Some(m);
            }
        }
        let done = counts.below_10.is_some() && counts.below_50.is_some() && counts.classified.is_some();
        if done || max >= limit {
            return Ok(counts);
        }
        max = (max * 2).min(limit);
    }
}

fn argmin_abs(values: impl Iterator<Item = f64>) -> usize {
    values.enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v.abs() < bv { (i, v.abs()) } else { (bi, bv) }).0
}

/// For every topology visited by the configured optimization, the smallest number of CGM
/// steps reaching each criterion; writes `steps.csv`.
pub fn run_cgm_steps(
    cfg: &RunConfig,
    out: &Path,
    allow_large: bool,
) -> Result<Vec<(usize, CgmCase, PrecondKind, StepCounts)>> {
    cfg.check_guard(&[cfg.method, cfg.exact], allow_large)?;
    let b = build(cfg)?;
    let x0 = topology(&b, &cfg.topology)?;
    let mut visited = Vec::new();
    let mut x = x0.clone();
    optimize_with(&b.problem, &cfg.optimizer(), &x0, |r, _| {
        visited.push((r.iteration, x.clone()));
        for &(e, y) in &r.switches {
            x.set(e, y > 0);
        }
    })?;
    let limit = if cfg.max_steps == 0 { b.problem.n_dofs() } else { cfg.max_steps };
    let exact_method = cfg.exact.resolve(cfg.eps_v);
    let mut rows = Vec::new();
    for (it, x) in &visited {
        let eq = Equilibrium::new(&b.problem, x)?;
        let exact = exact_method.evaluate(&b.problem, &eq)?;
        for case in [CgmCase::FromEquilibrium, CgmCase::AlongDisplacement] {
            for precond in [PrecondKind::Identity, PrecondKind::Jacobi] {
                let counts = cgm_step_counts(&b, &eq, &exact.alpha, &CgmConfig::new(case, precond, 1), limit)?;
                rows.push((*it, case, precond, counts));
            }
        }
    }
    fs::create_dir_all(out)?;
    let mut w = csv_writer(
        &out.join("steps.csv"),
        "cgm-steps",
        "smallest m >= 1 over solid elements; empty when not reached within `searched` steps",
    )?;
    w.write_record([
        "iteration",
        "case",
        "precond",
        "m_err_below_10pct",
        "m_err_below_50pct",
        "m_lowest_solid_classified",
        "searched",
    ])
    .map_err(csv_err)?;
    for (it, case, precond, c) in &rows {
        let p = match precond {
            PrecondKind::Identity => "none",
            _ => "jacobi",
        };
        w.serialize((it, case.id(), p, c.below_10, c.below_50, c.classified, c.searched)).map_err(csv_err)?;
    }
    finish(w)?;
    Ok(rows)
}

/// Element operator norms of one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct NormTable {
    pub a: Vec<f64>,
    /// `‖B_i‖₂` for voids.
    pub b: Vec<Option<f64>>,
    pub mean_a: f64,
}

/// Computes the norms without writing anything.
pub fn norms(b: &Benchmark, x: &DensityVector) -> Result<NormTable> {
    let eq = Equilibrium::new(&b.problem, x)?;
    let s = SelectiveInverse::from_envelope(&eq.factorization, b.problem.pattern().clone())?;
    let a = norm_map(&b.problem, &s)?;
    let bn = (0..x.len())
        .into_par_iter()
        .map(|e| if x.is_solid(e) { Ok(None) } else { b_norm(&b.problem, &eq, e).map(Some) })
        .collect::<Result<Vec<_>>>()?;
    let mean_a = a.iter().sum::<f64>() / a.len() as f64;
    Ok(NormTable { a, b: bn, mean_a })
}

/// Writes `norms.csv`: per element `‖A_i‖₂`, `‖B_i‖₂` for voids, and a closing mean row.
pub fn run_norms(cfg: &RunConfig, out: &Path, allow_large: bool) -> Result<NormTable> {
    cfg.check_guard(&[MethodSpec::Woodbury], allow_large)?;
    let b = build(cfg)?;
    let x = topology(&b, &cfg.topology)?;
    let t = norms(&b, &x)?;
    fs::create_dir_all(out)?;
    let mut w = csv_writer(&out.join("norms.csv"), "norms", "norm_b only for void elements; last row holds the means")?;
    w.write_record(["element", "solid", "norm_a", "norm_b"]).map_err(csv_err)?;
    for e in 0..x.len() {
        w.serialize((e.to_string(), u8::from(x.is_solid(e)), t.a[e], t.b[e])).map_err(csv_err)?;
    }
    let voids: Vec<f64> = t.b.iter().flatten().copied().collect();
    let mean_b = (!voids.is_empty()).then(|| voids.iter().sum::<f64>() / voids.len() as f64);
    w.serialize(("mean", "", t.mean_a, mean_b)).map_err(csv_err)?;
    finish(w)?;
    Ok(t)
}
