//! Integration driver: steps a [`Solver`], emits [`DiagnosticsRecord`]s at a
//! fixed cadence, tracks the Shatah profile and its phase, watches for
//! shocks, and writes run artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::diagnostics::{
    gamma_field, rate_fit, spectral_tail_ratio, write_csv, DiagnosticsRecord, RateFit, ShockMonitor,
    ShockStatus,
};
use crate::dynamics::{
    convert, neutrality_residual, riemann_blowup_oracle, tendency_ru, valid_horizon, Formulation,
    InitialProfile, Kind, Physics, Solver, State, StateNV,
};
use crate::error::{Error, Result};
use crate::normal_form::NormalFormContext;
use crate::scattering::{
    profile_w_spec, scattering_analysis, PhaseAccumulator, ProfileSnapshot, ScatteringOptions,
    ScatteringReport,
};
use crate::spectral::{sup, sup_real, Grid, GridSpec, C64};

/// Everything that determines a single run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub num_points: usize,
    pub box_length: f64,
    pub profile: InitialProfile,
    pub dt: f64,
    pub t_final: f64,
    pub formulation: Formulation,
    pub physics: Physics,
    pub diag_every: f64,
    pub n_sob: u32,
    pub n1_sob: u32,
    pub p0: f64,
    pub allow_wraparound: bool,
    /// Compute `g`, `w` and `theta` at every record.
    pub profile_diagnostics: bool,
    /// Checkpoint cadence in time units; zero disables.
    pub checkpoint_every: f64,
    pub decay_fit: (f64, f64),
    pub scatter_fit_lo: f64,
    pub scatter_fit_hi_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_points: 8192,
            box_length: 800.0 * std::f64::consts::PI,
            profile: InitialProfile::default(),
            dt: 0.1,
            t_final: 300.0,
            formulation: Formulation::H,
            physics: Physics::default(),
            diag_every: 0.5,
            n_sob: 6,
            n1_sob: 2,
            p0: 0.01,
            allow_wraparound: false,
            profile_diagnostics: true,
            checkpoint_every: 0.0,
            decay_fit: (20.0, 300.0),
            scatter_fit_lo: 20.0,
            scatter_fit_hi_fraction: 0.5,
        }
    }
}

impl RunConfig {
    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.num_points, self.box_length)
    }

    pub fn t_valid(&self) -> Result<f64> {
        Ok(valid_horizon(&self.grid_spec()?, self.profile.support_radius()))
    }

    /// Records are emitted every `stride` steps.
    pub fn stride(&self) -> Result<u64> {
        let s = (self.diag_every / self.dt).round();
        if !(self.diag_every > 0.0) || s < 1.0 || (s * self.dt - self.diag_every).abs() > 1e-9 * self.diag_every {
            return Err(Error::Config(format!(
                "diag_every = {} must be a positive multiple of dt = {}",
                self.diag_every, self.dt
            )));
        }
        Ok(s as u64)
    }

    pub fn steps(&self) -> Result<u64> {
        let s = (self.t_final / self.dt).round();
        if !(self.t_final > 0.0) || (s * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::Config(format!("t_final = {} must be a positive multiple of dt", self.t_final)));
        }
        Ok(s as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.grid_spec()?;
        let limit = crate::dynamics::cfl_limit(&spec);
        if !(self.dt > 0.0 && self.dt <= limit) {
            return Err(Error::Cfl { dt: self.dt, limit });
        }
        self.stride()?;
        self.steps()?;
        let p = &self.profile;
        if !(p.eps0 >= 0.0 && p.sigma > 0.0 && p.k0.is_finite()) {
            return Err(Error::Config("profile needs eps0 >= 0 and sigma > 0".into()));
        }
        if !self.allow_wraparound && self.t_final > self.t_valid()? {
            return Err(Error::Config(format!(
                "t_final = {} exceeds the wraparound horizon {:.6}; set allow_wraparound = true to override",
                self.t_final,
                self.t_valid()?
            )));
        }
        if !self.physics.electric_field && self.formulation != Formulation::Nv {
            return Err(Error::Config("pure-Euler mode is only available in the nv formulation".into()));
        }
        Ok(())
    }

    /// Profile tracking needs the Klein-Gordon structure.
    fn tracks_profile(&self) -> bool {
        self.profile_diagnostics && self.physics.electric_field
    }

    /// Weight exponent `N1_sob + 10` of the scattering norm.
    pub fn scattering_m(&self) -> f64 {
        f64::from(self.n1_sob) + 10.0
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub status: ShockStatus,
    pub t_end: f64,
    pub t_valid: f64,
    pub oracle: Option<f64>,
    pub snapshots: Vec<ProfileSnapshot>,
    /// `|h^|` on the lattice at the first, middle and last record.
    pub spectra: Vec<(f64, Vec<f64>)>,
    pub final_state: State,
}

impl RunOutput {
    pub fn series(&self, f: impl Fn(&DiagnosticsRecord) -> f64) -> (Vec<f64>, Vec<f64>) {
        self.records.iter().map(|r| (r.t, f(r))).unzip()
    }

    /// Fit of `sup |h|` over the configured window.
    pub fn decay_fit(&self, cfg: &RunConfig) -> Result<RateFit> {
        let (t, y) = self.series(|r| r.sup_h);
        rate_fit(&t, &y, cfg.decay_fit.0, cfg.decay_fit.1)
    }

    pub fn scattering(&self, grid: &Grid, cfg: &RunConfig) -> Result<ScatteringReport> {
        let opts = ScatteringOptions {
            m: cfg.scattering_m(),
            fit_lo: cfg.scatter_fit_lo,
            fit_hi_fraction: cfg.scatter_fit_hi_fraction,
        };
        scattering_analysis(grid, &self.snapshots, opts)
    }
}

/// Where to write checkpoints, if anywhere.
#[derive(Clone, Debug, Default)]
pub struct RunHooks {
    pub checkpoint_dir: Option<PathBuf>,
}

pub fn initial_state(grid: &Grid, cfg: &RunConfig) -> State {
    State::EV(cfg.profile.ev(grid))
}

/// Run from the configured initial profile.
pub fn run(cfg: &RunConfig, hooks: &RunHooks) -> Result<RunOutput> {
    cfg.validate()?;
    let grid = Grid::new(cfg.grid_spec()?);
    let start = initial_state(&grid, cfg);
    run_from(cfg, grid, &start, hooks)
}

/// Run from an explicit state (e.g. a checkpoint) up to `cfg.t_final`.
pub fn run_from(cfg: &RunConfig, grid: Arc<Grid>, start: &State, hooks: &RunHooks) -> Result<RunOutput> {
    cfg.validate()?;
    let stride = cfg.stride()?;
    let total = ((cfg.t_final - start.t()) / cfg.dt).round();
    if total < 0.0 {
        return Err(Error::Config(format!("start time {} is past t_final {}", start.t(), cfg.t_final)));
    }
    let total = total as u64;
    let ck_stride = if cfg.checkpoint_every > 0.0 {
        Some(((cfg.checkpoint_every / cfg.dt).round() as u64).max(1))
    } else {
        None
    };
    if let Some(dir) = &hooks.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let nv0 = match convert(&grid, start, Kind::NV)? {
        State::NV(s) => s,
        _ => unreachable!(),
    };
    let oracle = riemann_blowup_oracle(&grid, &nv0.n, &nv0.v)?;
    let mut solver = Solver::new(grid.clone(), start, cfg.formulation, cfg.physics, cfg.dt)?;
    let t_valid = cfg.t_valid()?;
    let mut rec = Recorder::new(grid.clone(), cfg, t_valid);
    let mut monitor = ShockMonitor::default();

    let mut records = Vec::new();
    let mut spectra = Vec::new();
    let mut last_spectrum = None;
    let mid = total / 2;
    let mut status = ShockStatus::Clean;
    for step in 0..=total {
        if step > 0 {
            solver.step()?;
            if let (Some(dir), Some(k)) = (&hooks.checkpoint_dir, ck_stride) {
                if step % k == 0 {
                    solver.checkpoint(&dir.join(format!("checkpoint_{:010}.epkg", solver.steps())))?;
                }
            }
        }
        if step % stride != 0 && step != total {
            continue;
        }
        let (r, hs) = rec.record(&solver)?;
        status = monitor.update(r.t, r.max_dn, r.tail_ratio);
        let abs: Vec<f64> = hs.iter().map(|z| z.norm()).collect();
        if step == 0 || (step >= mid && spectra.len() == 1) {
            spectra.push((r.t, abs.clone()));
        }
        last_spectrum = Some((r.t, abs));
        records.push(r);
        if status != ShockStatus::Clean {
            break;
        }
    }
    if let Some(last) = last_spectrum {
        if spectra.last().map(|s| s.0) != Some(last.0) {
            spectra.push(last);
        }
    }
    if let Some(dir) = &hooks.checkpoint_dir {
        solver.checkpoint(&dir.join("final.epkg"))?;
    }
    Ok(RunOutput {
        records,
        status,
        t_end: solver.t(),
        t_valid,
        oracle,
        snapshots: rec.snapshots,
        spectra,
        final_state: solver.state(),
    })
}

/// Per-record computations and the profile state carried between records.
struct Recorder {
    grid: Arc<Grid>,
    cfg: RunConfig,
    t_valid: f64,
    ctx: Option<NormalFormContext>,
    theta: PhaseAccumulator,
    snapshots: Vec<ProfileSnapshot>,
    carrier: usize,
    window: Vec<bool>,
    weight: Vec<f64>,
}

impl Recorder {
    fn new(grid: Arc<Grid>, cfg: &RunConfig, t_valid: f64) -> Self {
        let ctx = cfg.tracks_profile().then(|| {
            if cfg.physics.nonlinear {
                NormalFormContext::new(grid.clone(), cfg.n_sob)
            } else {
                NormalFormContext::with_zero_shatah(grid.clone(), cfg.n_sob)
            }
        });
        let theta = if cfg.physics.nonlinear { PhaseAccumulator::new(&grid) } else { PhaseAccumulator::zero(&grid) };
        let k = (cfg.profile.k0 / grid.spec.dxi()).round() as i64;
        let carrier = grid.spec.index_of(k).unwrap_or(0);
        let half = 0.5 * grid.spec.xi_max();
        let window = grid.xi().iter().map(|xi| xi.abs() <= half).collect();
        let weight = grid.jb().iter().map(|j| j.powf(cfg.scattering_m())).collect();
        Recorder {
            grid,
            cfg: cfg.clone(),
            t_valid,
            ctx,
            theta,
            snapshots: Vec::new(),
            carrier,
            window,
            weight,
        }
    }

    fn record(&mut self, solver: &Solver) -> Result<(DiagnosticsRecord, Vec<C64>)> {
        let g = &self.grid;
        let cfg = &self.cfg;
        let t = solver.t();
        let state = solver.state();
        let h = match convert(g, &state, Kind::H)? {
            State::H(s) => s.h,
            _ => unreachable!(),
        };
        let hs = g.forward(&h)?;
        let ru = crate::dynamics::h_to_ru(&crate::dynamics::ComplexState { t, h: h.clone() });
        let rut = tendency_ru(g, &state, cfg.physics)?;
        let [gr, gu] = gamma_field(g, &ru, &rut, t)?;
        let n1 = f64::from(cfg.n1_sob);
        let gamma_u = g.sobolev_real(&gr, n1)?.hypot(g.sobolev_real(&gu, n1)?);
        let nv: StateNV = match convert(g, &state, Kind::NV)? {
            State::NV(s) => s,
            _ => unreachable!(),
        };
        let dn = g.apply_multiplier_real(&nv.n, |xi| C64::new(0.0, xi))?;
        let (x_w, w_weighted_sup, theta_carrier) = match &self.ctx {
            Some(ctx) => {
                let gs = ctx.shatah_g_spec(&hs)?;
                let w = profile_w_spec(g, &gs, t);
                self.theta.push(t, &w)?;
                let wx = g.times_x(&g.inverse(&w)?);
                let x_w = g.sobolev(&wx, n1 - 4.0)?;
                let ws = (0..w.len())
                    .filter(|&k| self.window[k])
                    .map(|k| self.weight[k] * w[k].norm())
                    .fold(0.0, f64::max);
                let th = self.theta.theta()[self.carrier];
                self.snapshots.push(ProfileSnapshot { t, w, theta: self.theta.theta().to_vec() });
                (x_w, ws, th)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let r = DiagnosticsRecord {
            t,
            sup_h: sup(&h),
            u_hn: g.sobolev_spec(&hs, f64::from(cfg.n_sob)),
            u_wk_inf: g.wk_inf(&h, cfg.n1_sob + 10)?,
            gamma_u,
            x_u: g.sobolev(&g.times_x(&h), n1)?,
            x_w,
            neutrality: neutrality_residual(&nv.n),
            tail_ratio: spectral_tail_ratio(g, &hs),
            max_dn: sup_real(&dn),
            w_weighted_sup,
            theta_carrier,
            wrap_valid: t <= self.t_valid && g.support_clean(&h),
            t_valid: self.t_valid,
        };
        Ok((r, hs))
    }
}

/// File names inside a run directory.
pub mod files {
    pub const DIAGNOSTICS: &str = "diagnostics.csv";
    pub const SPECTRA: &str = "spectra.csv";
    pub const SCATTERING_REPORT: &str = "scattering_report.txt";
    pub const SCATTERING_CURVE: &str = "scattering.csv";
    pub const SUMMARY: &str = "summary.txt";
    pub const CHECKPOINTS: &str = "checkpoints";
}

pub const SPECTRA_HEADER: &str = "t,xi,abs_h_hat";

/// Write the diagnostics CSV, spectrum snapshots, scattering report (when
/// available) and a key-value summary into `dir`.
pub fn write_artifacts(
    dir: &Path,
    grid: &Grid,
    cfg: &RunConfig,
    out: &RunOutput,
) -> Result<Option<ScatteringReport>> {
    use crate::diagnostics::fmt_f64;
    use std::fmt::Write as _;
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join(files::DIAGNOSTICS), &out.records)?;

    let mut s = format!("{SPECTRA_HEADER}\n");
    for (t, a) in &out.spectra {
        let mut order: Vec<usize> = (0..grid.n()).collect();
        order.sort_by_key(|&i| grid.spec.k_of(i));
        for i in order {
            let _ = writeln!(s, "{},{},{}", fmt_f64(*t), fmt_f64(grid.xi()[i]), fmt_f64(a[i]));
        }
    }
    std::fs::write(dir.join(files::SPECTRA), s)?;

    let report = if out.snapshots.is_empty() {
        Err("profile diagnostics off".to_string())
    } else {
        out.scattering(grid, cfg).map_err(|e| e.to_string())
    };
    if let Ok(rep) = &report {
        rep.write(&dir.join(files::SCATTERING_REPORT), &dir.join(files::SCATTERING_CURVE))?;
    }

    let mut sm = String::new();
    let _ = writeln!(sm, "status={}", out.status.name());
    let _ = writeln!(sm, "event_time={}", out.status.time().map_or("nan".into(), fmt_f64));
    let _ = writeln!(sm, "oracle_time={}", out.oracle.map_or("nan".into(), fmt_f64));
    let _ = writeln!(sm, "t_end={}", fmt_f64(out.t_end));
    let _ = writeln!(sm, "t_valid={}", fmt_f64(out.t_valid));
    let _ = writeln!(sm, "records={}", out.records.len());
    let fit = out.decay_fit(cfg).ok();
    let _ = writeln!(sm, "decay_slope={}", fit.map_or("nan".into(), |f| fmt_f64(f.slope)));
    let _ = writeln!(sm, "decay_band={}", fit.map_or("nan".into(), |f| fmt_f64(f.band)));
    let _ = writeln!(sm, "decay_fit_lo={}", fmt_f64(cfg.decay_fit.0));
    let _ = writeln!(sm, "decay_fit_hi={}", fmt_f64(cfg.decay_fit.1));
    match &report {
        Ok(rep) => {
            let _ = writeln!(sm, "scattering_delta={}", rep.delta_value().map_or("nan".into(), fmt_f64));
        }
        Err(why) => {
            let _ = writeln!(sm, "scattering_delta=nan");
            let _ = writeln!(sm, "scattering_note={}", why.replace('\n', " "));
        }
    }
    std::fs::write(dir.join(files::SUMMARY), sm)?;
    Ok(report.ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            num_points: 512,
            box_length: 80.0,
            profile: InitialProfile { eps0: 0.01, sigma: 3.0, k0: 1.0 },
            dt: 0.05,
            t_final: 10.0,
            diag_every: 0.5,
            decay_fit: (2.0, 10.0),
            scatter_fit_lo: 1.0,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_amplitude_stays_constant() {
        let cfg = RunConfig { profile: InitialProfile { eps0: 0.0, ..small().profile }, ..small() };
        let out = run(&cfg, &RunHooks::default()).unwrap();
        assert_eq!(out.status, ShockStatus::Clean);
        assert!(out.records.iter().all(|r| r.sup_h == 0.0));
        assert_eq!(out.records.len(), 21);
    }

    #[test]
    fn small_run_is_clean_and_finite() {
        let out = run(&small(), &RunHooks::default()).unwrap();
        assert_eq!(out.status, ShockStatus::Clean);
        for r in &out.records {
            assert!(r.is_finite() && r.wrap_valid, "{r:?}");
        }
        assert!(out.records.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(out.snapshots.len(), out.records.len());
        assert_eq!(out.spectra.len(), 3);
    }

    #[test]
    fn config_guards() {
        let cfg = RunConfig { t_final: 1e4, ..small() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig { diag_every: 0.07, ..small() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig { dt: 1.0, ..small() };
        assert!(matches!(cfg.validate(), Err(Error::Cfl { .. })));
    }

    #[test]
    fn linear_run_has_constant_profile() {
        let cfg = RunConfig { physics: Physics { nonlinear: false, ..Physics::default() }, ..small() };
        let out = run(&cfg, &RunHooks::default()).unwrap();
        let w0 = &out.snapshots[0].w;
        let scale = sup(w0);
        for s in &out.snapshots {
            let d = s.w.iter().zip(w0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(d < 1e-12 * scale.max(1.0), "{d}");
            assert!(s.theta.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn checkpoint_resume_matches_straight_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { checkpoint_every: 5.0, profile_diagnostics: false, ..small() };
        let hooks = RunHooks { checkpoint_dir: Some(dir.path().to_path_buf()) };
        let straight = run(&cfg, &hooks).unwrap();
        let path = dir.path().join("checkpoint_0000000100.epkg");
        let (spec, st) = crate::dynamics::read_checkpoint(&path).unwrap();
        assert!((st.t() - 5.0).abs() < 1e-12);
        let resumed = run_from(&cfg, Grid::new(spec), &st, &RunHooks::default()).unwrap();
        let (State::H(a), State::H(b)) = (&straight.final_state, &resumed.final_state) else { panic!() };
        let err = a.h.iter().zip(&b.h).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-12 * sup(&a.h), "{err}");
    }
}
