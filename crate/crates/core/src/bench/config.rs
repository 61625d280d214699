use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::problems::{split_call, ProblemId};
use crate::beso::{OptimizerConfig, SensitivityMethod};
use crate::error::{Error, Result};
use crate::fvsa::{CgmCase, CgmConfig, PrecondKind};

/// Largest element count the exact methods accept without `--allow-large`.
pub const LARGE_GUARD: usize = 10_000;

/// Sensitivity method as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    Naive,
    /// Void penalization from the `eps_v` key.
    Foci,
    /// Voids zeroed.
    FociS,
    Hoci {
        q: usize,
        zero_voids: bool,
    },
    Woodbury,
    Cgm {
        case: CgmCase,
        steps: usize,
        precond: PrecondKind,
        zero_voids: bool,
    },
}

impl MethodSpec {
    pub fn resolve(&self, eps_v: f64) -> SensitivityMethod {
        match *self {
            Self::Naive => SensitivityMethod::Naive,
            Self::Foci => SensitivityMethod::Foci { eps_v },
            Self::FociS => SensitivityMethod::Foci { eps_v: 0.0 },
            Self::Hoci { q, zero_voids } => SensitivityMethod::Hoci { q, zero_voids },
            Self::Woodbury => SensitivityMethod::Woodbury,
            Self::Cgm { case, steps, precond, zero_voids } => {
                SensitivityMethod::Cgm(CgmConfig { zero_voids, ..CgmConfig::new(case, precond, steps) })
            }
        }
    }

    /// Methods that factor per element or need the selective inverse.
    pub fn is_exact_class(&self) -> bool {
        matches!(self, Self::Naive | Self::Woodbury | Self::Hoci { .. })
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_call(s)?;
        let bad = |msg: &str| Error::Config(format!("method: {msg} in `{s}`"));
        let count = |a: &str| a.parse::<usize>().map_err(|_| bad(&format!("`{a}` is not a count")));
        let void_mode = |a: &str| match a {
            "zero" => Ok(true),
            "all" | "skip" => Ok(false),
            _ => Err(bad(&format!("void mode `{a}` is not zero or all"))),
        };
        match (name, args.len()) {
            ("naive", 0) => Ok(Self::Naive),
            ("foci", 0) => Ok(Self::Foci),
            ("foci_s", 0) => Ok(Self::FociS),
            ("woodbury", 0) => Ok(Self::Woodbury),
            ("hoci", 1 | 2) => {
                let q = count(args[0])?;
                if q == 0 {
                    return Err(bad("series order must be at least 1"));
                }
                Ok(Self::Hoci { q, zero_voids: args.get(1).map(|a| void_mode(a)).transpose()?.unwrap_or(false) })
            }
            ("cgm", 1..=4) => {
                let id = u8::try_from(count(args[0])?).map_err(|_| bad("case out of range"))?;
                let case = CgmCase::from_id(id).map_err(|_| bad("case must be 1, 2 or 3"))?;
                let steps = args.get(1).map(|a| count(a)).transpose()?.unwrap_or(2);
                if steps == 0 {
                    return Err(bad("steps must be at least 1"));
                }
                let precond = match args.get(2).copied().unwrap_or("jacobi") {
                    "none" | "identity" => PrecondKind::Identity,
                    "jacobi" => PrecondKind::Jacobi,
                    "exact" => PrecondKind::ExactKbar,
                    p => return Err(bad(&format!("preconditioner `{p}` is not none, jacobi or exact"))),
                };
                let zero_voids = args.get(3).map(|a| void_mode(a)).transpose()?.unwrap_or(false);
                Ok(Self::Cgm { case, steps, precond, zero_voids })
            }
            _ => Err(bad("unknown method or wrong argument count")),
        }
    }
}

/// Where a study takes its topology from.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    /// The benchmark's own initial topology.
    Initial,
    Solid,
    /// A `topology.csv` written by a previous run.
    File(PathBuf),
}

impl FromStr for TopologySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "initial" => Self::Initial,
            "solid" => Self::Solid,
            "" => return Err(Error::Config("topology: empty value".into())),
            path => Self::File(PathBuf::from(path)),
        })
    }
}

/// Everything one CLI run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub method: MethodSpec,
    pub er: f64,
    pub ar_max: f64,
    pub v_f_target: f64,
    pub filter_radius: f64,
    pub eps_v: f64,
    pub patience: usize,
    pub momentum: bool,
    pub max_iterations: usize,
    pub refresh_every: usize,
    /// Overrides the benchmark's soft-kill parameter.
    pub eps_k: Option<f64>,
    /// Initial topology of `optimize`, analysed topology of `compare` and `norms`.
    pub topology: TopologySource,
    /// Estimates compared against the exact values by `compare`.
    pub compare: Vec<MethodSpec>,
    /// Exact reference of `compare` and `cgm-steps`: `naive` or `woodbury`.
    pub exact: MethodSpec,
    /// Upper limit on the steps searched by `cgm-steps`; zero means the DOF count.
    pub max_steps: usize,
    /// Report the compliance of the full symmetric beam (twice the half-domain value).
    pub full_beam: bool,
    pub output: PathBuf,
    /// Reserved; runs are deterministic.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemId::TieBeamCoarse,
            method: MethodSpec::Foci,
            er: 0.01,
            ar_max: 0.02,
            v_f_target: 0.5,
            filter_radius: 0.0,
            eps_v: 1e-6,
            patience: 10,
            momentum: true,
            max_iterations: 1000,
            refresh_every: 50,
            eps_k: None,
            topology: TopologySource::Initial,
            compare: vec![MethodSpec::Foci],
            exact: MethodSpec::Woodbury,
            max_steps: 0,
            full_beam: false,
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "problem",
    "method",
    "er",
    "ar_max",
    "v_f_target",
    "filter_radius",
    "eps_v",
    "patience",
    "momentum",
    "max_iterations",
    "refresh_every",
    "eps_k",
    "topology",
    "compare",
    "exact",
    "max_steps",
    "full_beam",
    "output",
    "seed",
];

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Every problem is reported at once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies `key = value` pairs over the defaults; later pairs win.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(pairs)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, pairs: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut map = BTreeMap::new();
        let mut errors = Vec::new();
        for (k, v) in pairs {
            if KEYS.contains(&k.as_str()) {
                map.insert(k, v);
            } else {
                errors.push(format!("unknown key `{k}`"));
            }
        }
        for (k, v) in &map {
            if let Err(e) = self.set(k, v) {
                errors.push(match e {
                    Error::Config(m) => m,
                    e => format!("{k}: {e}"),
                });
            }
        }
        if let Err(Error::Config(m)) = self.optimizer().validate() {
            errors.push(m);
        }
        if !matches!(self.exact, MethodSpec::Naive | MethodSpec::Woodbury) {
            errors.push("exact: must be naive or woodbury".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
        }
        match key {
            "problem" => self.problem = v.parse()?,
            "method" => self.method = v.parse()?,
            "er" => self.er = num(key, v)?,
            "ar_max" => self.ar_max = num(key, v)?,
            "v_f_target" => self.v_f_target = num(key, v)?,
            "filter_radius" => self.filter_radius = num(key, v)?,
            "eps_v" => self.eps_v = num(key, v)?,
            "patience" => self.patience = num(key, v)?,
            "momentum" => self.momentum = num(key, v)?,
            "max_iterations" => self.max_iterations = num(key, v)?,
            "refresh_every" => self.refresh_every = num(key, v)?,
            "eps_k" => {
                let e: f64 = num(key, v)?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::Config(format!("eps_k: must lie in (0, 1), got {e}")));
                }
                self.eps_k = Some(e);
            }
            "topology" => self.topology = v.parse()?,
            "compare" => self.compare = split_top_level(v).into_iter().map(str::parse).collect::<Result<_>>()?,
            "exact" => self.exact = v.parse()?,
            "max_steps" => self.max_steps = num(key, v)?,
            "full_beam" => self.full_beam = num(key, v)?,
            "output" => self.output = PathBuf::from(v),
            "seed" => self.seed = num(key, v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            er: self.er,
            ar_max: self.ar_max,
            target_fraction: self.v_f_target,
            filter_radius: self.filter_radius,
            method: self.method.resolve(self.eps_v),
            momentum: self.momentum,
            patience: self.patience,
            max_iterations: self.max_iterations,
            refresh_every: self.refresh_every,
        }
    }

    /// Rejects runs of the exact-class methods on large meshes unless allowed.
    pub fn check_guard(&self, methods: &[MethodSpec], allow_large: bool) -> Result<()> {
        let n = self.problem.n_elements();
        if allow_large || n <= LARGE_GUARD {
            return Ok(());
        }
        match methods.iter().find(|m| m.is_exact_class()) {
            Some(m) => Err(Error::Guard(format!(
                "{m:?} on {n} elements exceeds the limit of {LARGE_GUARD}; pass --allow-large to run anyway"
            ))),
            None => Ok(()),
        }
    }
}

/// Splits on commas outside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let (mut depth, mut start, mut out) = (0i32, 0, Vec::new());
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|p| !p.is_empty());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let cfg = RunConfig::parse(
            "# MBB
             problem = mbb(150, 50)
             method = cgm(2, 2, jacobi, zero)  # trailing comment
             er = 0.01
             ar_max = 0.02
             filter_radius = 40
             compare = foci, cgm(2,1,none,all), woodbury
             momentum = true",
        )
        .unwrap();
        assert_eq!(cfg.problem, ProblemId::Mbb(150, 50));
        assert_eq!(
            cfg.method,
            MethodSpec::Cgm {
                case: CgmCase::FromEquilibrium,
                steps: 2,
                precond: PrecondKind::Jacobi,
                zero_voids: true
            }
        );
        assert_eq!(cfg.compare.len(), 3);
        assert_eq!(cfg.filter_radius, 40.0);
    }

    #[test]
    fn errors_name_every_bad_key() {
        let err = RunConfig::parse("problme = mbb(3,1)\ner = 2\npatience = x").unwrap_err().to_string();
        assert!(err.contains("problme"), "{err}");
        assert!(err.contains("patience"), "{err}");
        assert!(err.contains("er must lie"), "{err}");
    }

    #[test]
    fn method_syntax() {
        assert_eq!("foci_s".parse::<MethodSpec>().unwrap(), MethodSpec::FociS);
        assert_eq!("hoci(5, zero)".parse::<MethodSpec>().unwrap(), MethodSpec::Hoci { q: 5, zero_voids: true });
        assert!("hoci(0)".parse::<MethodSpec>().is_err());
        assert!("cgm(4)".parse::<MethodSpec>().is_err());
        assert!("cgm(1,1,magic)".parse::<MethodSpec>().is_err());
        assert!(
            matches!("foci_s".parse::<MethodSpec>().unwrap().resolve(1e-6), SensitivityMethod::Foci { eps_v } if eps_v == 0.0)
        );
    }

    #[test]
    fn guard_blocks_large_exact_runs() {
        let cfg = RunConfig::parse("problem = mbb(300, 100)\nmethod = woodbury").unwrap();
        assert!(matches!(cfg.check_guard(&[cfg.method], false), Err(Error::Guard(_))));
        assert!(cfg.check_guard(&[cfg.method], true).is_ok());
        assert!(cfg.check_guard(&[MethodSpec::Foci], false).is_ok());
    }
}
