//! Experiment configuration files: flat `key = value` lines, `#` comments,
//! strict key checking.
//!
//! Floating-point values may carry a `pi` factor (`800pi`, `2.5*pi`, `pi`).
//! List values (the `sweep_*` keys) are comma separated; an empty list means
//! "use the base value".

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dynamics::{Formulation, InitialProfile};
use crate::error::{Error, Result};
use crate::run::RunConfig;

pub const DEFAULT_SEED: u64 = 20240611;

/// A run configuration plus the harness-level settings around it.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub run: RunConfig,
    /// Seed for the randomized verification suites.
    pub seed: u64,
    pub suite: String,
    /// Continue from this checkpoint instead of the initial profile.
    pub resume_from: Option<PathBuf>,
    pub sweep: SweepAxes,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepAxes {
    pub eps0: Vec<f64>,
    pub k0: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            label: "run".into(),
            run: RunConfig::default(),
            seed: DEFAULT_SEED,
            suite: "all".into(),
            resume_from: None,
            sweep: SweepAxes::default(),
        }
    }
}

/// Every key accepted in a config file, in the order [`ExperimentConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "label",
    "num_points",
    "box_length",
    "eps0",
    "sigma",
    "k0",
    "dt",
    "t_final",
    "formulation",
    "electric_field",
    "nonlinear",
    "diag_every",
    "n_sob",
    "n1_sob",
    "p0",
    "allow_wraparound",
    "profile_diagnostics",
    "checkpoint_every",
    "decay_fit_lo",
    "decay_fit_hi",
    "scatter_fit_lo",
    "scatter_fit_hi_fraction",
    "seed",
    "suite",
    "resume_from",
    "sweep_eps0",
    "sweep_k0",
    "sweep_sigma",
];

pub const SUITES: &[&str] = &["symbols", "identities", "scattering", "appendix", "all"];

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("key `{key}`: cannot parse {value:?} as {what}"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let t = v.trim();
    let x = if t == "pi" {
        pi
    } else if let Some(head) = t.strip_suffix("pi") {
        let head = head.trim_end().trim_end_matches('*').trim_end();
        head.parse::<f64>().map_err(|_| bad(key, v, "a number"))? * pi
    } else {
        t.parse::<f64>().map_err(|_| bad(key, v, "a number"))?
    };
    if !x.is_finite() {
        return Err(bad(key, v, "a finite number"));
    }
    Ok(x)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, "a non-negative integer"))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_f64(key, p)).collect()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Filesystem-safe: ASCII letters, digits, `-`, `_`, `.`, not starting with `.`.
pub fn label_is_safe(label: &str) -> bool {
    !label.is_empty()
        && !label.starts_with('.')
        && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let r = &mut self.run;
        match key {
            "label" => self.label = v.to_string(),
            "num_points" => r.num_points = parse_int(key, v)?,
            "box_length" => r.box_length = parse_f64(key, v)?,
            "eps0" => r.profile.eps0 = parse_f64(key, v)?,
            "sigma" => r.profile.sigma = parse_f64(key, v)?,
            "k0" => r.profile.k0 = parse_f64(key, v)?,
            "dt" => r.dt = parse_f64(key, v)?,
            "t_final" => r.t_final = parse_f64(key, v)?,
            "formulation" => r.formulation = Formulation::parse(v).map_err(|_| bad(key, v, "ru, h or nv"))?,
            "electric_field" => r.physics.electric_field = parse_bool(key, v)?,
            "nonlinear" => r.physics.nonlinear = parse_bool(key, v)?,
            "diag_every" => r.diag_every = parse_f64(key, v)?,
            "n_sob" => r.n_sob = parse_int(key, v)?,
            "n1_sob" => r.n1_sob = parse_int(key, v)?,
            "p0" => r.p0 = parse_f64(key, v)?,
            "allow_wraparound" => r.allow_wraparound = parse_bool(key, v)?,
            "profile_diagnostics" => r.profile_diagnostics = parse_bool(key, v)?,
            "checkpoint_every" => r.checkpoint_every = parse_f64(key, v)?,
            "decay_fit_lo" => r.decay_fit.0 = parse_f64(key, v)?,
            "decay_fit_hi" => r.decay_fit.1 = parse_f64(key, v)?,
            "scatter_fit_lo" => r.scatter_fit_lo = parse_f64(key, v)?,
            "scatter_fit_hi_fraction" => r.scatter_fit_hi_fraction = parse_f64(key, v)?,
            "seed" => self.seed = parse_int(key, v)?,
            "suite" => self.suite = v.to_string(),
            "resume_from" => self.resume_from = (!v.is_empty()).then(|| PathBuf::from(v)),
            "sweep_eps0" => self.sweep.eps0 = parse_list(key, v)?,
            "sweep_k0" => self.sweep.k0 = parse_list(key, v)?,
            "sweep_sigma" => self.sweep.sigma = parse_list(key, v)?,
            _ => unreachable!("key list and setter out of sync: {key}"),
        }
        Ok(())
    }

    /// Checks that do not need the grid (those live in [`RunConfig::validate`]).
    fn check(&self) -> Result<()> {
        if !label_is_safe(&self.label) {
            return Err(Error::Config(format!("key `label`: {:?} is not filesystem-safe", self.label)));
        }
        if !SUITES.contains(&self.suite.as_str()) {
            return Err(Error::Config(format!("key `suite`: {:?} is not one of {SUITES:?}", self.suite)));
        }
        let (lo, hi) = self.run.decay_fit;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("keys `decay_fit_lo`/`decay_fit_hi`: need 0 < {lo} < {hi}")));
        }
        let f = self.run.scatter_fit_hi_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("key `scatter_fit_hi_fraction`: {f} not in (0, 1]")));
        }
        Ok(())
    }

    /// Serializes every key; `parse(to_text(c)) == c` for any parsed `c`.
    pub fn to_text(&self) -> String {
        let r = &self.run;
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("label", self.label.clone());
        put("num_points", r.num_points.to_string());
        put("box_length", r.box_length.to_string());
        put("eps0", r.profile.eps0.to_string());
        put("sigma", r.profile.sigma.to_string());
        put("k0", r.profile.k0.to_string());
        put("dt", r.dt.to_string());
        put("t_final", r.t_final.to_string());
        put("formulation", r.formulation.name().to_string());
        put("electric_field", r.physics.electric_field.to_string());
        put("nonlinear", r.physics.nonlinear.to_string());
        put("diag_every", r.diag_every.to_string());
        put("n_sob", r.n_sob.to_string());
        put("n1_sob", r.n1_sob.to_string());
        put("p0", r.p0.to_string());
        put("allow_wraparound", r.allow_wraparound.to_string());
        put("profile_diagnostics", r.profile_diagnostics.to_string());
        put("checkpoint_every", r.checkpoint_every.to_string());
        put("decay_fit_lo", r.decay_fit.0.to_string());
        put("decay_fit_hi", r.decay_fit.1.to_string());
        put("scatter_fit_lo", r.scatter_fit_lo.to_string());
        put("scatter_fit_hi_fraction", r.scatter_fit_hi_fraction.to_string());
        put("seed", self.seed.to_string());
        put("suite", self.suite.clone());
        put(
            "resume_from",
            self.resume_from.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("sweep_eps0", fmt_list(&self.sweep.eps0));
        put("sweep_k0", fmt_list(&self.sweep.k0));
        put("sweep_sigma", fmt_list(&self.sweep.sigma));
        s
    }

    /// Sweep cells in row-major (eps0, k0, sigma) order; each axis falls back
    /// to the base value when its list is empty.
    pub fn sweep_cells(&self) -> Vec<InitialProfile> {
        let base = self.run.profile;
        let or_base = |v: &[f64], b: f64| if v.is_empty() { vec![b] } else { v.to_vec() };
        let mut cells = Vec::new();
        for &eps0 in &or_base(&self.sweep.eps0, base.eps0) {
            for &k0 in &or_base(&self.sweep.k0, base.k0) {
                for &sigma in &or_base(&self.sweep.sigma, base.sigma) {
                    cells.push(InitialProfile { eps0, sigma, k0 });
                }
            }
        }
        cells
    }
}
