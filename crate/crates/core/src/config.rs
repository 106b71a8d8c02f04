//! Run configuration: a flat `key = value` text file with dotted sections.
//!
//! ```text
//! # comment
//! geometry.L = 8.68
//! discretization.h = 0.0078125
//! experiment.eps = 0.8, 0.4, 0.2
//! ```
//!
//! Every key is optional. An empty file yields the default configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fine_solver::SimConfig;
use crate::geometry::{CoefficientField, CryptGeometry, ReactionParams};
use crate::linalg::{Backend, SolverOptions};

/// Recognised keys, in the order used by [`RunConfig::to_text`].
pub const KEYS: [&str; 19] = [
    "geometry.preset",
    "geometry.a",
    "geometry.r",
    "geometry.R",
    "geometry.L",
    "reaction.tau_gamma",
    "reaction.tau_beta1",
    "reaction.beta2",
    "reaction.D",
    "discretization.h",
    "discretization.dt",
    "discretization.T",
    "discretization.n_ref",
    "discretization.output_times",
    "discretization.solver",
    "discretization.tol",
    "experiment.eps",
    "experiment.output_dir",
    "experiment.seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: CryptGeometry,
    pub reaction: ReactionParams,
    pub h: f64,
    pub dt: f64,
    pub t_final: f64,
    pub n_ref: usize,
    pub output_times: Vec<f64>,
    pub solver: SolverOptions,
    /// Scales of the fine-scale runs, strictly decreasing.
    pub eps: Vec<f64>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            geometry: CryptGeometry::default(),
            reaction: ReactionParams::default(),
            h: sim.h,
            dt: sim.dt,
            t_final: sim.t_final,
            n_ref: 32,
            output_times: sim.output_times,
            solver: SolverOptions::default(),
            // 0.0323 is the smallest three-digit scale with h ≤ εa/4 at h = 5e-3.
            eps: vec![0.8, 0.4, 0.05, 0.0323],
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Auto => "auto",
        Backend::Direct => "direct",
        Backend::Iterative => "iterative",
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn sim_config(&self, eps: f64) -> SimConfig {
        SimConfig {
            eps,
            h: self.h,
            dt: self.dt,
            t_final: self.t_final,
            output_times: self.output_times.clone(),
            solver: self.solver,
            ..Default::default()
        }
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField> {
        CoefficientField::new(self.geometry, self.reaction)
    }

    /// Every key with its value; parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let r = &self.reaction;
        let mut s = String::new();
        let values: [String; 19] = [
            "paper".into(),
            format!("{:?}", g.a),
            format!("{:?}", g.r),
            format!("{:?}", g.big_r),
            format!("{:?}", g.l),
            format!("{:?}", r.tau_gamma),
            format!("{:?}", r.tau_beta1),
            format!("{:?}", r.beta2),
            format!("{:?}", r.diffusion),
            format!("{:?}", self.h),
            format!("{:?}", self.dt),
            format!("{:?}", self.t_final),
            self.n_ref.to_string(),
            list(&self.output_times),
            backend_name(self.solver.backend).into(),
            format!("{:?}", self.solver.tol),
            list(&self.eps),
            self.output_dir.display().to_string(),
            self.seed.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

struct Entries<'a> {
    path: String,
    map: BTreeMap<&'static str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::ConfigLine {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Line of the first present key, 0 when all are defaulted.
    fn line_of(&self, keys: &[&str]) -> usize {
        keys.iter().find_map(|k| self.map.get(k).map(|e| e.0)).unwrap_or(0)
    }

    fn f64(&self, key: &'static str) -> Result<Option<f64>> {
        self.map
            .get(key)
            .map(|&(line, v)| v.parse::<f64>().map_err(|_| self.err(line, format!("{key}: `{v}` is not a number"))))
            .transpose()
    }

    fn u64(&self, key: &'static str) -> Result<Option<u64>> {
        self.map
            .get(key)
            .map(|&(line, v)| v.parse::<u64>().map_err(|_| self.err(line, format!("{key}: `{v}` is not a non-negative integer"))))
            .transpose()
    }

    fn list(&self, key: &'static str) -> Result<Option<Vec<f64>>> {
        let Some(&(line, v)) = self.map.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| self.err(line, format!("{key}: `{}` is not a number", x.trim()))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Parses configuration text; `path` is used in error messages only.
pub fn parse_config_str(text: &str, path: &str) -> Result<RunConfig> {
    let mut e = Entries {
        path: path.to_string(),
        map: BTreeMap::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(e.err(line, format!("expected `key = value`, got `{content}`")));
        };
        let k = k.trim();
        let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
            return Err(e.err(line, format!("unknown key `{k}`")));
        };
        if let Some(&(first, _)) = e.map.get(key) {
            return Err(e.err(line, format!("`{key}` already set on line {first}")));
        }
        e.map.insert(key, (line, v.trim()));
    }

    let mut cfg = RunConfig::default();
    if let Some(&(line, v)) = e.map.get("geometry.preset") {
        if v != "paper" {
            return Err(e.err(line, format!("unknown geometry preset `{v}` (only `paper`)")));
        }
    }
    let a = e.f64("geometry.a")?.unwrap_or(cfg.geometry.a);
    cfg.geometry = CryptGeometry {
        a,
        r: e.f64("geometry.r")?.unwrap_or(a / 4.0),
        big_r: e.f64("geometry.R")?.unwrap_or(a / 2.0),
        l: e.f64("geometry.L")?.unwrap_or(14.0 * a),
    };
    cfg.geometry
        .validate()
        .map_err(|err| e.err(e.line_of(&["geometry.r", "geometry.R", "geometry.a", "geometry.L"]), err.to_string()))?;

    let r = &mut cfg.reaction;
    r.tau_gamma = e.f64("reaction.tau_gamma")?.unwrap_or(r.tau_gamma);
    r.tau_beta1 = e.f64("reaction.tau_beta1")?.unwrap_or(r.tau_beta1);
    r.beta2 = e.f64("reaction.beta2")?.unwrap_or(r.beta2);
    r.diffusion = e.f64("reaction.D")?.unwrap_or(r.diffusion);
    cfg.reaction
        .validate()
        .map_err(|err| e.err(e.line_of(&["reaction.tau_gamma", "reaction.tau_beta1", "reaction.beta2", "reaction.D"]), err.to_string()))?;

    cfg.h = e.f64("discretization.h")?.unwrap_or(cfg.h);
    cfg.dt = e.f64("discretization.dt")?.unwrap_or(cfg.dt);
    cfg.t_final = e.f64("discretization.T")?.unwrap_or(cfg.t_final);
    if let Some(n) = e.u64("discretization.n_ref")? {
        if n == 0 {
            return Err(e.err(e.line_of(&["discretization.n_ref"]), "n_ref must be at least 1"));
        }
        cfg.n_ref = n as usize;
    }
    cfg.output_times = e.list("discretization.output_times")?.unwrap_or(cfg.output_times);
    if let Some(&(line, v)) = e.map.get("discretization.solver") {
        cfg.solver.backend = match v {
            "auto" => Backend::Auto,
            "direct" => Backend::Direct,
            "iterative" => Backend::Iterative,
            _ => return Err(e.err(line, format!("solver must be auto, direct or iterative, got `{v}`"))),
        };
    }
    cfg.solver.tol = e.f64("discretization.tol")?.unwrap_or(cfg.solver.tol);
    cfg.eps = e.list("experiment.eps")?.unwrap_or(cfg.eps);
    if let Some(&(_, v)) = e.map.get("experiment.output_dir") {
        cfg.output_dir = PathBuf::from(v);
    }
    cfg.seed = e.u64("experiment.seed")?.unwrap_or(cfg.seed);

    let eps_line = e.line_of(&["experiment.eps"]);
    if cfg.eps.is_empty() {
        return Err(e.err(eps_line, "the eps list is empty"));
    }
    if cfg.eps.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(e.err(eps_line, "the eps list must be sorted in strictly descending order"));
    }
    // The resolution rule is reported first: it is the informative error
    // when a coarse h also fails to divide the domain.
    for &eps in &cfg.eps {
        if let Err(err) = cfg.sim_config(eps).validate_fine(cfg.geometry.a) {
            if err.to_string().contains("eps*a/4") {
                return Err(e.err(e.line_of(&["discretization.h", "experiment.eps"]), err.to_string()));
            }
        }
    }
    let time_keys = ["discretization.dt", "discretization.T", "discretization.output_times", "discretization.tol", "discretization.h"];
    cfg.sim_config(cfg.eps[0])
        .validate_time()
        .map_err(|err| e.err(e.line_of(&time_keys), err.to_string()))?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|err| Error::ConfigLine {
        path: path.display().to_string(),
        line: 0,
        message: format!("cannot read configuration: {err}"),
    })?;
    parse_config_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(err: Error) -> (usize, String) {
        match err {
            Error::ConfigLine { line, message, .. } => (line, message),
            other => panic!("expected a line error, got {other}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config_str("", "x").unwrap();
        let a = 2f64.sqrt() / 3f64.powf(0.75);
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.geometry.r, a / 4.0);
        assert_eq!(cfg.geometry.big_r, a / 2.0);
        assert_eq!(cfg.geometry.l, 14.0 * a);
        assert_eq!(cfg.reaction.diffusion, 0.1);
        assert_eq!(cfg.reaction.tau_gamma, 0.01);
        assert_eq!(cfg.reaction.tau_beta1, 0.01);
        assert_eq!(cfg.reaction.beta2, 0.1);
        assert_eq!(cfg.dt, 5e-3);
    }

    #[test]
    fn coarse_h_is_rejected_with_its_line() {
        let text = "# coarse\nexperiment.eps = 0.8\ndiscretization.h = 0.3\n";
        let (line, msg) = line_of(parse_config_str(text, "c.txt").unwrap_err());
        assert_eq!(line, 3);
        assert!(msg.contains("eps*a/4 = 0.124081"), "{msg}");
    }

    #[test]
    fn r_must_stay_below_big_r() {
        let (line, msg) = line_of(parse_config_str("\ngeometry.r = 0.9", "c").unwrap_err());
        assert_eq!(line, 2);
        assert!(msg.contains("r < R"), "{msg}");
    }

    #[test]
    fn malformed_and_unknown_lines() {
        let (line, msg) = line_of(parse_config_str("geometry.L = 3\nbogus\n", "c").unwrap_err());
        assert_eq!((line, msg.contains("key = value")), (2, true));
        let (line, msg) = line_of(parse_config_str("reaction.tau = 1", "c").unwrap_err());
        assert_eq!((line, msg.contains("unknown key")), (1, true));
        let (line, _) = line_of(parse_config_str("reaction.D = x", "c").unwrap_err());
        assert_eq!(line, 1);
        let (line, msg) = line_of(parse_config_str("reaction.D = 1\nreaction.D = 2", "c").unwrap_err());
        assert_eq!((line, msg.contains("line 1")), (2, true));
    }

    #[test]
    fn eps_order_and_time_grid() {
        let (line, _) = line_of(parse_config_str("experiment.eps = 0.4, 0.8", "c").unwrap_err());
        assert_eq!(line, 1);
        let (line, msg) = line_of(parse_config_str("\n\ndiscretization.T = 0.0512", "c").unwrap_err());
        assert_eq!(line, 3);
        assert!(msg.contains("multiple"), "{msg}");
    }

    #[test]
    fn echo_round_trips() {
        let text = "geometry.L = 5\nreaction.D = 0.2\ndiscretization.h = 0.015625\ndiscretization.n_ref = 8\n\
                    discretization.output_times = 0.01, 0.02\ndiscretization.T = 0.02\ndiscretization.solver = iterative\n\
                    experiment.eps = 0.8, 0.4\nexperiment.output_dir = /tmp/x\nexperiment.seed = 7 # trailing comment\n";
        let cfg = parse_config_str(text, "c").unwrap();
        assert_eq!(cfg.geometry.l, 5.0);
        assert_eq!(cfg.solver.backend, Backend::Iterative);
        assert_eq!(cfg.seed, 7);
        assert_eq!(parse_config_str(&cfg.to_text(), "echo").unwrap(), cfg);
        assert_eq!(parse_config_str(&RunConfig::default().to_text(), "echo").unwrap(), RunConfig::default());
    }

    #[test]
    fn missing_file() {
        let err = parse_config(Path::new("/nonexistent/run.cfg")).unwrap_err();
        assert!(err.to_string().contains("cannot read"));
    }
}
