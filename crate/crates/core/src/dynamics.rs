//! Time evolution of the Euler-Poisson system (gamma = 3) in the (n, v),
//! (E, v), (r, u) and h formulations.
//!
//! ```text
//! n_t + (n v)_x = 0,   v_t + v v_x + n n_x = E,   E = d_x^{-1}(n - 1)
//! r = E/2,  u = -<D>^{-1} v / 2,  h = r + i u
//! r_t = <D>u + 2 (<D>u) r_x,   u_t = -<D>r + (d_x/<D>)[(<D>u)^2 + r_x^2]
//! ```
//!
//! Solvers keep physical samples between steps, so a checkpointed state
//! resumes bit-for-bit.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{Grid, GridSpec, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Formulation {
    Ru,
    H,
    Nv,
}

impl Formulation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ru" => Ok(Formulation::Ru),
            "h" => Ok(Formulation::H),
            "nv" => Ok(Formulation::Nv),
            _ => Err(Error::Config(format!("formulation must be ru, h or nv, got {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Formulation::Ru => "ru",
            Formulation::H => "h",
            Formulation::Nv => "nv",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateNV {
    pub t: f64,
    pub n: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateEV {
    pub t: f64,
    pub e: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateRU {
    pub t: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexState {
    pub t: f64,
    pub h: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum State {
    NV(StateNV),
    EV(StateEV),
    RU(StateRU),
    H(ComplexState),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    NV,
    EV,
    RU,
    H,
}

impl State {
    pub fn t(&self) -> f64 {
        match self {
            State::NV(s) => s.t,
            State::EV(s) => s.t,
            State::RU(s) => s.t,
            State::H(s) => s.t,
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            State::NV(_) => Kind::NV,
            State::EV(_) => Kind::EV,
            State::RU(_) => Kind::RU,
            State::H(_) => Kind::H,
        }
    }

    fn len(&self) -> usize {
        match self {
            State::NV(s) => s.n.len(),
            State::EV(s) => s.e.len(),
            State::RU(s) => s.r.len(),
            State::H(s) => s.h.len(),
        }
    }

    /// First non-finite sample, if any.
    pub fn check_finite(&self) -> Result<()> {
        let bad = |a: &[f64]| a.iter().position(|x| !x.is_finite());
        let idx = match self {
            State::NV(s) => bad(&s.n).or(bad(&s.v)),
            State::EV(s) => bad(&s.e).or(bad(&s.v)),
            State::RU(s) => bad(&s.r).or(bad(&s.u)),
            State::H(s) => s.h.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())),
        };
        match idx {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }
}

/// `mean(n - 1)`.
pub fn neutrality_residual(n: &[f64]) -> f64 {
    n.iter().map(|x| x - 1.0).sum::<f64>() / n.len() as f64
}

fn real(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

fn dx_sym(xi: f64) -> C64 {
    C64::new(0.0, xi)
}

fn jb_sym(xi: f64) -> C64 {
    C64::new((1.0 + xi * xi).sqrt(), 0.0)
}

fn inv_jb_sym(xi: f64) -> C64 {
    C64::new(1.0 / (1.0 + xi * xi).sqrt(), 0.0)
}

/// Convert between formulations. Neutrality of `n` is checked against
/// `1e-12` relative to `max(1, sup |n - 1|)`.
pub fn convert(grid: &Grid, state: &State, target: Kind) -> Result<State> {
    if state.len() != grid.n() {
        return Err(Error::Config(format!(
            "state length {} does not match grid size {}",
            state.len(),
            grid.n()
        )));
    }
    let ev = to_ev(grid, state)?;
    Ok(match target {
        Kind::EV => State::EV(ev),
        Kind::NV => State::NV(ev_to_nv(grid, &ev)?),
        Kind::RU => State::RU(ev_to_ru(grid, &ev)?),
        Kind::H => {
            let ru = ev_to_ru(grid, &ev)?;
            State::H(ru_to_h(&ru))
        }
    })
}

fn to_ev(grid: &Grid, state: &State) -> Result<StateEV> {
    match state {
        State::EV(s) => Ok(s.clone()),
        State::NV(s) => nv_to_ev(grid, s),
        State::RU(s) => ru_to_ev(grid, s),
        State::H(s) => ru_to_ev(grid, &h_to_ru(s)),
    }
}

pub fn nv_to_ev(grid: &Grid, s: &StateNV) -> Result<StateEV> {
    let m = neutrality_residual(&s.n);
    let scale = s.n.iter().map(|x| (x - 1.0).abs()).fold(1.0, f64::max);
    if m.abs() > 1e-12 * scale {
        return Err(Error::Neutrality(m));
    }
    let dn: Vec<f64> = s.n.iter().map(|x| x - 1.0).collect();
    let e = grid.apply_multiplier_gauged(&real(&dn), |xi| C64::new(0.0, -1.0 / xi), Some(ZERO))?;
    Ok(StateEV { t: s.t, e: e.into_iter().map(|z| z.re).collect(), v: s.v.clone() })
}

pub fn ev_to_nv(grid: &Grid, s: &StateEV) -> Result<StateNV> {
    let ex = grid.apply_multiplier_real(&s.e, dx_sym)?;
    Ok(StateNV { t: s.t, n: ex.into_iter().map(|x| 1.0 + x).collect(), v: s.v.clone() })
}

pub fn ev_to_ru(grid: &Grid, s: &StateEV) -> Result<StateRU> {
    let r = s.e.iter().map(|x| 0.5 * x).collect();
    let u = grid.apply_multiplier_real(&s.v, |xi| inv_jb_sym(xi) * -0.5)?;
    Ok(StateRU { t: s.t, r, u })
}

pub fn ru_to_ev(grid: &Grid, s: &StateRU) -> Result<StateEV> {
    let e = s.r.iter().map(|x| 2.0 * x).collect();
    let v = grid.apply_multiplier_real(&s.u, |xi| jb_sym(xi) * -2.0)?;
    Ok(StateEV { t: s.t, e, v })
}

pub fn ru_to_h(s: &StateRU) -> ComplexState {
    ComplexState { t: s.t, h: s.r.iter().zip(&s.u).map(|(&r, &u)| C64::new(r, u)).collect() }
}

pub fn h_to_ru(s: &ComplexState) -> StateRU {
    StateRU { t: s.t, r: s.h.iter().map(|z| z.re).collect(), u: s.h.iter().map(|z| z.im).collect() }
}

/// Which terms of the equations are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Physics {
    /// Electric field coupling; `false` gives pure Euler (nv only).
    pub electric_field: bool,
    pub nonlinear: bool,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { electric_field: true, nonlinear: true }
    }
}

/// Quadratic part of the (r, u) system from spectra: returns the spectra of
/// `2 (<D>u) r_x` and `(d_x/<D>)[(<D>u)^2 + r_x^2]`, both dealiased.
pub fn quadratic_ru_spec(grid: &Grid, r: &[C64], u: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
    let xi = grid.xi();
    let jb = grid.jb();
    let du: Vec<C64> = u.iter().zip(jb).map(|(z, j)| z * j).collect();
    let rx: Vec<C64> = r.iter().zip(xi).map(|(z, &x)| z * dx_sym(x)).collect();
    let a = grid.inverse_real(&du)?;
    let b = grid.inverse_real(&rx)?;
    let p1: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x * y).collect();
    let p2: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * x + y * y).collect();
    let mut s1 = grid.forward_real(&p1)?;
    let mut s2 = grid.forward_real(&p2)?;
    grid.dealias(&mut s1);
    grid.dealias(&mut s2);
    for (i, z) in s2.iter_mut().enumerate() {
        *z *= dx_sym(xi[i]) / jb[i];
    }
    let nyq = grid.spec.nyquist_index();
    s1[nyq] = ZERO;
    s2[nyq] = ZERO;
    Ok((s1, s2))
}

/// `h_t + i<D>h` (the quadratic part) from the spectrum of `h`.
pub fn quadratic_h_spec(grid: &Grid, h: &[C64]) -> Result<Vec<C64>> {
    let hc = grid.conj_spectrum(h);
    let r: Vec<C64> = h.iter().zip(&hc).map(|(a, b)| (a + b) * 0.5).collect();
    let u: Vec<C64> = h.iter().zip(&hc).map(|(a, b)| (a - b) * C64::new(0.0, -0.5)).collect();
    let (n1, n2) = quadratic_ru_spec(grid, &r, &u)?;
    Ok(n1.iter().zip(&n2).map(|(a, b)| a + I * b).collect())
}

/// Tendency of `state` in its own formulation. EV states are differentiated
/// through the NV equations.
pub fn rhs(grid: &Grid, state: &State, physics: Physics) -> Result<State> {
    state.check_finite()?;
    let t = state.t();
    match state {
        State::H(s) => {
            let hh = grid.forward(&s.h)?;
            let sp = rhs_h_spec(grid, &hh, physics)?;
            Ok(State::H(ComplexState { t, h: grid.inverse(&sp)? }))
        }
        State::RU(s) => {
            let r = grid.forward_real(&s.r)?;
            let u = grid.forward_real(&s.u)?;
            let [dr, du] = rhs_ru_spec(grid, &r, &u, physics)?;
            Ok(State::RU(StateRU { t, r: grid.inverse_real(&dr)?, u: grid.inverse_real(&du)? }))
        }
        State::NV(s) => {
            let n = grid.forward_real(&s.n)?;
            let v = grid.forward_real(&s.v)?;
            let [dn, dv] = rhs_nv_spec(grid, &n, &v, physics)?;
            Ok(State::NV(StateNV { t, n: grid.inverse_real(&dn)?, v: grid.inverse_real(&dv)? }))
        }
        State::EV(s) => {
            let nv = ev_to_nv(grid, s)?;
            let n = grid.forward_real(&nv.n)?;
            let v = grid.forward_real(&nv.v)?;
            let [dn, dv] = rhs_nv_spec(grid, &n, &v, physics)?;
            // E_t = d_x^{-1} n_t
            let mut de = dn;
            grid.multiply_spectrum(&mut de, |xi| C64::new(0.0, -1.0 / xi), Some(ZERO))?;
            Ok(State::EV(StateEV { t, e: grid.inverse_real(&de)?, v: grid.inverse_real(&dv)? }))
        }
    }
}

/// Tendency of `U = (r, u)` for a state in any formulation. For pure Euler
/// states this is the time derivative of `(E/2, -<D>^{-1} v / 2)`.
pub fn tendency_ru(grid: &Grid, state: &State, physics: Physics) -> Result<StateRU> {
    let t = state.t();
    Ok(match rhs(grid, state, physics)? {
        State::H(d) => h_to_ru(&d),
        State::RU(d) => d,
        State::NV(d) => {
            let et = grid.apply_multiplier_gauged(&real(&d.n), |xi| C64::new(0.0, -1.0 / xi), Some(ZERO))?;
            let u = grid.apply_multiplier_real(&d.v, |xi| inv_jb_sym(xi) * -0.5)?;
            StateRU { t, r: et.iter().map(|e| 0.5 * e.re).collect(), u }
        }
        State::EV(d) => {
            let u = grid.apply_multiplier_real(&d.v, |xi| inv_jb_sym(xi) * -0.5)?;
            StateRU { t, r: d.e.iter().map(|e| 0.5 * e).collect(), u }
        }
    })
}

fn require_ep(physics: Physics, what: &str) -> Result<()> {
    if !physics.electric_field {
        return Err(Error::Config(format!(
            "pure-Euler mode is only available in the nv formulation, not {what}"
        )));
    }
    Ok(())
}

fn rhs_h_spec(grid: &Grid, h: &[C64], physics: Physics) -> Result<Vec<C64>> {
    require_ep(physics, "h")?;
    let mut out: Vec<C64> = h.iter().zip(grid.jb()).map(|(z, &j)| -I * j * z).collect();
    if physics.nonlinear {
        for (o, q) in out.iter_mut().zip(quadratic_h_spec(grid, h)?) {
            *o += q;
        }
    }
    out[grid.spec.nyquist_index()] = ZERO;
    Ok(out)
}

fn rhs_ru_spec(grid: &Grid, r: &[C64], u: &[C64], physics: Physics) -> Result<[Vec<C64>; 2]> {
    require_ep(physics, "ru")?;
    let jb = grid.jb();
    let mut dr: Vec<C64> = u.iter().zip(jb).map(|(z, j)| z * j).collect();
    let mut du: Vec<C64> = r.iter().zip(jb).map(|(z, j)| -z * j).collect();
    if physics.nonlinear {
        let (n1, n2) = quadratic_ru_spec(grid, r, u)?;
        dr.iter_mut().zip(&n1).for_each(|(a, b)| *a += b);
        du.iter_mut().zip(&n2).for_each(|(a, b)| *a += b);
    }
    Ok([dr, du])
}

fn rhs_nv_spec(grid: &Grid, n: &[C64], v: &[C64], physics: Physics) -> Result<[Vec<C64>; 2]> {
    let xi = grid.xi();
    let nyq = grid.spec.nyquist_index();
    let (mut flux_n, mut flux_v);
    if physics.nonlinear {
        let np = grid.inverse_real(n)?;
        let vp = grid.inverse_real(v)?;
        let nvp: Vec<f64> = np.iter().zip(&vp).map(|(a, b)| a * b).collect();
        let pv: Vec<f64> = np.iter().zip(&vp).map(|(a, b)| 0.5 * (a * a + b * b)).collect();
        flux_n = grid.forward_real(&nvp)?;
        flux_v = grid.forward_real(&pv)?;
        grid.dealias(&mut flux_n);
        grid.dealias(&mut flux_v);
    } else {
        // linearization about n = 1, v = 0: fluxes v and n
        flux_n = v.to_vec();
        flux_v = n.to_vec();
    }
    let mut dn: Vec<C64> = flux_n.iter().zip(xi).map(|(z, &x)| -dx_sym(x) * z).collect();
    let mut dv: Vec<C64> = flux_v.iter().zip(xi).map(|(z, &x)| -dx_sym(x) * z).collect();
    if physics.electric_field {
        // E^ = (n - 1)^ / (i xi), mean mode gauged to zero
        for (i, z) in dv.iter_mut().enumerate() {
            if i != 0 {
                *z += n[i] / dx_sym(xi[i]);
            }
        }
    }
    dn[nyq] = ZERO;
    dv[nyq] = ZERO;
    Ok([dn, dv])
}

/// Default wave packet: `E = eps0 e cos(k0 x)`, `v = eps0 e sin(k0 x)` with
/// `e = exp(-(x/sigma)^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialProfile {
    pub eps0: f64,
    pub sigma: f64,
    pub k0: f64,
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile { eps0: 0.01, sigma: 20.0, k0: 1.0 }
    }
}

impl InitialProfile {
    pub fn ev(&self, grid: &Grid) -> StateEV {
        let (e, v) = grid
            .x()
            .iter()
            .map(|&x| {
                let env = self.eps0 * (-(x / self.sigma).powi(2)).exp();
                (env * (self.k0 * x).cos(), env * (self.k0 * x).sin())
            })
            .unzip();
        StateEV { t: 0.0, e, v }
    }

    /// Radius beyond which the data is below `1e-10` of its peak.
    pub fn support_radius(&self) -> f64 {
        self.sigma * (1e10f64).ln().sqrt()
    }
}

/// Wraparound horizon `(L/2 - R)/1` for group speeds below one.
pub fn valid_horizon(spec: &GridSpec, support_radius: f64) -> f64 {
    (0.5 * spec.box_length - support_radius).max(0.0)
}

/// `min over +/- of -1 / min_x d_x(v +/- n)`, when some slope is negative.
pub fn riemann_blowup_oracle(grid: &Grid, n0: &[f64], v0: &[f64]) -> Result<Option<f64>> {
    let nx = grid.apply_multiplier_real(n0, dx_sym)?;
    let vx = grid.apply_multiplier_real(v0, dx_sym)?;
    let min_slope = nx
        .iter()
        .zip(&vx)
        .flat_map(|(a, b)| [b + a, b - a])
        .fold(f64::INFINITY, f64::min);
    Ok((min_slope < 0.0).then(|| -1.0 / min_slope))
}

/// Largest stable step for the CFL guard.
pub fn cfl_limit(spec: &GridSpec) -> f64 {
    0.5 * spec.dx()
}

/// Fixed-step integrator for one formulation.
pub struct Solver {
    grid: Arc<Grid>,
    physics: Physics,
    formulation: Formulation,
    dt: f64,
    t0: f64,
    steps: u64,
    // physical samples: (h.re, h.im), (r, u) or (n, v)
    a: Vec<f64>,
    b: Vec<f64>,
    half: Vec<(f64, f64)>,
    full: Vec<(f64, f64)>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("formulation", &self.formulation)
            .field("t", &self.t())
            .field("dt", &self.dt)
            .finish()
    }
}

type Pair = [Vec<C64>; 2];

fn axpy(y: &Pair, a: f64, x: &Pair) -> Pair {
    let f = |u: &Vec<C64>, v: &Vec<C64>| u.iter().zip(v).map(|(p, q)| p + q * a).collect();
    [f(&y[0], &x[0]), f(&y[1], &x[1])]
}

impl Solver {
    /// Solver starting from `state`, which is converted to `formulation`
    /// and dealiased.
    pub fn new(
        grid: Arc<Grid>,
        state: &State,
        formulation: Formulation,
        physics: Physics,
        dt: f64,
    ) -> Result<Self> {
        let limit = cfl_limit(&grid.spec);
        if !(dt.is_finite() && dt != 0.0 && dt.abs() <= limit) {
            return Err(Error::Cfl { dt, limit });
        }
        if formulation != Formulation::Nv {
            require_ep(physics, formulation.name())?;
        }
        state.check_finite()?;
        let (a, b) = match convert(&grid, state, Self::kind_of(formulation))? {
            State::H(s) => s.h.iter().map(|z| (z.re, z.im)).unzip(),
            State::RU(s) => (s.r, s.u),
            State::NV(s) => (s.n, s.v),
            State::EV(_) => unreachable!(),
        };
        let phase = |tau: f64| -> Vec<(f64, f64)> {
            grid.jb().iter().map(|&w| ((w * tau).cos(), (w * tau).sin())).collect()
        };
        let (half, full) = (phase(0.5 * dt), phase(dt));
        let mut s = Solver { grid, physics, formulation, dt, t0: state.t(), steps: 0, a, b, half, full };
        let spec = s.spectra()?;
        s.store(spec)?;
        Ok(s)
    }

    fn kind_of(f: Formulation) -> Kind {
        match f {
            Formulation::H => Kind::H,
            Formulation::Ru => Kind::RU,
            Formulation::Nv => Kind::NV,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    pub fn physics(&self) -> Physics {
        self.physics
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Current state in the solver's own formulation.
    pub fn state(&self) -> State {
        let t = self.t();
        match self.formulation {
            Formulation::H => State::H(ComplexState {
                t,
                h: self.a.iter().zip(&self.b).map(|(&x, &y)| C64::new(x, y)).collect(),
            }),
            Formulation::Ru => State::RU(StateRU { t, r: self.a.clone(), u: self.b.clone() }),
            Formulation::Nv => State::NV(StateNV { t, n: self.a.clone(), v: self.b.clone() }),
        }
    }

    pub fn state_as(&self, kind: Kind) -> Result<State> {
        convert(&self.grid, &self.state(), kind)
    }

    pub fn h(&self) -> Result<ComplexState> {
        match self.state_as(Kind::H)? {
            State::H(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    pub fn nv(&self) -> Result<StateNV> {
        match self.state_as(Kind::NV)? {
            State::NV(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    /// Tendency in the solver's formulation.
    pub fn tendency(&self) -> Result<State> {
        rhs(&self.grid, &self.state(), self.physics)
    }

    fn spectra(&self) -> Result<Pair> {
        let g = &self.grid;
        Ok(match self.formulation {
            Formulation::H => {
                let h: Vec<C64> = self.a.iter().zip(&self.b).map(|(&x, &y)| C64::new(x, y)).collect();
                [g.forward(&h)?, vec![ZERO; g.n()]]
            }
            _ => [g.forward_real(&self.a)?, g.forward_real(&self.b)?],
        })
    }

    fn store(&mut self, mut s: Pair) -> Result<()> {
        let g = &self.grid;
        g.dealias(&mut s[0]);
        g.dealias(&mut s[1]);
        match self.formulation {
            Formulation::H => {
                let h = g.inverse(&s[0])?;
                self.a = h.iter().map(|z| z.re).collect();
                self.b = h.iter().map(|z| z.im).collect();
            }
            _ => {
                self.a = g.inverse_real(&s[0])?;
                self.b = g.inverse_real(&s[1])?;
            }
        }
        Ok(())
    }

    fn nonlinear(&self, y: &Pair) -> Result<Pair> {
        let g = &self.grid;
        let zero = || vec![ZERO; g.n()];
        if !self.physics.nonlinear {
            return Ok([zero(), zero()]);
        }
        Ok(match self.formulation {
            Formulation::H => [quadratic_h_spec(g, &y[0])?, zero()],
            Formulation::Ru => {
                let (n1, n2) = quadratic_ru_spec(g, &y[0], &y[1])?;
                [n1, n2]
            }
            Formulation::Nv => unreachable!(),
        })
    }

    /// Exact linear propagator over `dt/2` (`half`) or `dt`.
    fn propagate(&self, y: &Pair, half: bool) -> Pair {
        let tab = if half { &self.half } else { &self.full };
        match self.formulation {
            Formulation::H => {
                let p = y[0].iter().zip(tab).map(|(z, &(c, s))| z * C64::new(c, -s)).collect();
                [p, y[1].clone()]
            }
            Formulation::Ru => {
                let (r, u): (Vec<C64>, Vec<C64>) = y[0]
                    .iter()
                    .zip(&y[1])
                    .zip(tab)
                    .map(|((&r, &u), &(c, s))| (r * c + u * s, -r * s + u * c))
                    .unzip();
                [r, u]
            }
            Formulation::Nv => unreachable!(),
        }
    }

    /// One integrating-factor RK4 step (h, ru) or classical RK4 step (nv).
    pub fn step(&mut self) -> Result<()> {
        let y = self.spectra()?;
        let dt = self.dt;
        let next = match self.formulation {
            Formulation::Nv => {
                let f = |s: &Pair| rhs_nv_spec(&self.grid, &s[0], &s[1], self.physics);
                let k1 = f(&y)?;
                let k2 = f(&axpy(&y, 0.5 * dt, &k1))?;
                let k3 = f(&axpy(&y, 0.5 * dt, &k2))?;
                let k4 = f(&axpy(&y, dt, &k3))?;
                let mut out = axpy(&y, dt / 6.0, &k1);
                out = axpy(&out, dt / 3.0, &k2);
                out = axpy(&out, dt / 3.0, &k3);
                axpy(&out, dt / 6.0, &k4)
            }
            _ => {
                let k1 = self.nonlinear(&y)?;
                let k2 = self.nonlinear(&self.propagate(&axpy(&y, 0.5 * dt, &k1), true))?;
                let eh_y = self.propagate(&y, true);
                let k3 = self.nonlinear(&axpy(&eh_y, 0.5 * dt, &k2))?;
                let ef_y = self.propagate(&y, false);
                let k4 = self.nonlinear(&axpy(&ef_y, dt, &self.propagate(&k3, true)))?;
                let mid = self.propagate(&[add(&k2[0], &k3[0]), add(&k2[1], &k3[1])], true);
                let mut out = axpy(&ef_y, dt / 6.0, &self.propagate(&k1, false));
                out = axpy(&out, dt / 3.0, &mid);
                axpy(&out, dt / 6.0, &k4)
            }
        };
        self.store(next)?;
        self.steps += 1;
        let st = self.state();
        st.check_finite()
    }

    /// Checkpoint in the EPKG format.
    pub fn checkpoint(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.grid.spec, &self.state())
    }
}

fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

const MAGIC: &[u8; 4] = b"EPKG";
const VERSION: u32 = 1;

fn tag(kind: Kind) -> u8 {
    match kind {
        Kind::RU => 0,
        Kind::H => 1,
        Kind::NV => 2,
        Kind::EV => 3,
    }
}

/// Little-endian: magic, version u32, num_points u64, box_length f64, t f64,
/// formulation tag u8, then one `(a_j, b_j)` f64 pair per sample.
pub fn write_checkpoint(path: &Path, spec: &GridSpec, state: &State) -> Result<()> {
    let (a, b): (Vec<f64>, Vec<f64>) = match state {
        State::H(s) => s.h.iter().map(|z| (z.re, z.im)).unzip(),
        State::RU(s) => (s.r.clone(), s.u.clone()),
        State::NV(s) => (s.n.clone(), s.v.clone()),
        State::EV(s) => (s.e.clone(), s.v.clone()),
    };
    if a.len() != spec.num_points {
        return Err(Error::Checkpoint("state length does not match grid".into()));
    }
    let mut buf = Vec::with_capacity(33 + 16 * a.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.num_points as u64).to_le_bytes());
    buf.extend_from_slice(&spec.box_length.to_le_bytes());
    buf.extend_from_slice(&state.t().to_le_bytes());
    buf.push(tag(state.kind()));
    for (x, y) in a.iter().zip(&b) {
        buf.extend_from_slice(&x.to_le_bytes());
        buf.extend_from_slice(&y.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(GridSpec, State)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 33 || &buf[..4] != MAGIC {
        return Err(Error::Checkpoint("missing EPKG header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = u64_at(8) as usize;
    let spec = GridSpec::new(n, f64_at(16)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let t = f64_at(24);
    let kind = buf[32];
    if buf.len() != 33 + 16 * n {
        return Err(Error::Checkpoint(format!("expected {} bytes, found {}", 33 + 16 * n, buf.len())));
    }
    let (a, b): (Vec<f64>, Vec<f64>) =
        (0..n).map(|j| (f64_at(33 + 16 * j), f64_at(41 + 16 * j))).unzip();
    let state = match kind {
        0 => State::RU(StateRU { t, r: a, u: b }),
        1 => State::H(ComplexState { t, h: a.iter().zip(&b).map(|(&x, &y)| C64::new(x, y)).collect() }),
        2 => State::NV(StateNV { t, n: a, v: b }),
        3 => State::EV(StateEV { t, e: a, v: b }),
        other => return Err(Error::Checkpoint(format!("unknown formulation tag {other}"))),
    };
    Ok((spec, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den.max(1e-300)).sqrt()
    }

    fn relc(a: &[C64], b: &[C64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    /// Random band-limited real field with `|k| <= kmax` and amplitude `amp`.
    fn random_real(grid: &Grid, kmax: i64, amp: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = vec![ZERO; grid.n()];
        for k in 1..=kmax {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp * grid.length();
            s[grid.spec.index_of(k).unwrap()] = z;
            s[grid.spec.index_of(-k).unwrap()] = z.conj();
        }
        grid.inverse_real(&s).unwrap()
    }

    fn random_ev(grid: &Grid, amp: f64, seed: u64) -> StateEV {
        StateEV {
            t: 0.0,
            e: random_real(grid, 12, amp, seed),
            v: random_real(grid, 12, amp, seed + 1),
        }
    }

    #[test]
    fn equilibrium_converts_to_zero() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let nv = State::NV(StateNV { t: 0.0, n: vec![1.0; 64], v: vec![0.0; 64] });
        for kind in [Kind::EV, Kind::RU] {
            let s = convert(&g, &nv, kind).unwrap();
            let (a, b) = match s {
                State::EV(s) => (s.e, s.v),
                State::RU(s) => (s.r, s.u),
                _ => unreachable!(),
            };
            assert!(a.iter().chain(&b).all(|x| x.abs() < 1e-15));
        }
        let State::H(h) = convert(&g, &nv, Kind::H).unwrap() else { panic!() };
        assert!(h.h.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn single_mode_field_gives_real_h() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let eps = 0.01;
        let e: Vec<f64> = g.x().iter().map(|x| eps * x.cos()).collect();
        let st = State::EV(StateEV { t: 0.0, e: e.clone(), v: vec![0.0; 64] });
        let State::H(h) = convert(&g, &st, Kind::H).unwrap() else { panic!() };
        for (z, x) in h.h.iter().zip(g.x()) {
            assert!((z.re - 0.5 * eps * x.cos()).abs() < 1e-16);
            assert!(z.im.abs() < 1e-16);
        }
    }

    #[test]
    fn conversion_round_trip() {
        let g = Grid::with(128, 20.0).unwrap();
        let ev = random_ev(&g, 1e-2, 3);
        let mut s = State::NV(ev_to_nv(&g, &ev).unwrap());
        let start = s.clone();
        for kind in [Kind::EV, Kind::RU, Kind::H, Kind::RU, Kind::EV, Kind::NV] {
            s = convert(&g, &s, kind).unwrap();
        }
        let (State::NV(a), State::NV(b)) = (&s, &start) else { panic!() };
        let da: Vec<f64> = a.n.iter().map(|x| x - 1.0).collect();
        let db: Vec<f64> = b.n.iter().map(|x| x - 1.0).collect();
        assert!(rel(&da, &db) < 1e-12);
        assert!(rel(&a.v, &b.v) < 1e-12);
    }

    #[test]
    fn non_neutral_density_is_rejected() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let nv = State::NV(StateNV { t: 0.0, n: vec![1.01; 64], v: vec![0.0; 64] });
        assert!(matches!(convert(&g, &nv, Kind::EV), Err(Error::Neutrality(_))));
    }

    #[test]
    fn zero_state_has_zero_tendency() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let h = State::H(ComplexState { t: 0.0, h: vec![ZERO; 64] });
        let State::H(d) = rhs(&g, &h, Physics::default()).unwrap() else { panic!() };
        assert!(d.h.iter().all(|z| z.norm() == 0.0));
        let nv = State::NV(StateNV { t: 0.0, n: vec![1.0; 64], v: vec![0.0; 64] });
        let State::NV(d) = rhs(&g, &nv, Physics::default()).unwrap() else { panic!() };
        assert!(d.n.iter().chain(&d.v).all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn linear_single_mode_tendency() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let h: Vec<C64> = g.x().iter().map(|&x| C64::new(0.0, x).exp()).collect();
        let st = State::H(ComplexState { t: 0.0, h: h.clone() });
        let phys = Physics { nonlinear: false, ..Physics::default() };
        let State::H(d) = rhs(&g, &st, phys).unwrap() else { panic!() };
        let want: Vec<C64> = h.iter().map(|z| -I * 2f64.sqrt() * z).collect();
        assert!(relc(&d.h, &want) < 1e-13);
    }

    #[test]
    fn nan_is_reported_with_index() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let mut h = vec![ZERO; 64];
        h[7] = C64::new(f64::NAN, 0.0);
        let st = State::H(ComplexState { t: 0.0, h });
        assert!(matches!(rhs(&g, &st, Physics::default()), Err(Error::NonFinite { index: 7 })));
    }

    fn tendency_as_h(g: &Grid, s: &State) -> Vec<C64> {
        let phys = Physics::default();
        match rhs(g, s, phys).unwrap() {
            State::H(d) => d.h,
            State::RU(d) => d.r.iter().zip(&d.u).map(|(&a, &b)| C64::new(a, b)).collect(),
            State::NV(d) => {
                // r_t = E_t / 2 with E_t = d_x^{-1} n_t;  u_t = -<D>^{-1} v_t / 2
                let et = g
                    .apply_multiplier_gauged(&real(&d.n), |xi| C64::new(0.0, -1.0 / xi), Some(ZERO))
                    .unwrap();
                let ut = g.apply_multiplier_real(&d.v, |xi| inv_jb_sym(xi) * -0.5).unwrap();
                et.iter().zip(&ut).map(|(e, &u)| C64::new(0.5 * e.re, u)).collect()
            }
            State::EV(_) => unreachable!(),
        }
    }

    /// Shift `v` so that the mean current `mean(n v)` vanishes. Only then is
    /// the zero-mean gauge of `E` preserved by the h and ru equations.
    fn current_free(g: &Grid, mut ev: StateEV) -> StateEV {
        let nv = ev_to_nv(g, &ev).unwrap();
        let c = nv.n.iter().zip(&nv.v).map(|(a, b)| a * b).sum::<f64>() / g.n() as f64;
        ev.v.iter_mut().for_each(|v| *v -= c);
        ev
    }

    #[test]
    fn formulations_agree_on_tendency() {
        let g = Grid::with(256, 40.0).unwrap();
        let ev = State::EV(current_free(&g, random_ev(&g, 1e-2, 11)));
        let h = convert(&g, &ev, Kind::H).unwrap();
        let want = tendency_as_h(&g, &h);
        for kind in [Kind::RU, Kind::NV] {
            let s = convert(&g, &ev, kind).unwrap();
            let got = tendency_as_h(&g, &s);
            assert!(relc(&got, &want) < 1e-10, "{kind:?} {}", relc(&got, &want));
        }
    }

    #[test]
    fn linear_step_is_exact_rotation() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let h: Vec<C64> = g.x().iter().map(|&x| C64::new(0.0, 3.0 * x).exp() * 0.1).collect();
        let st = State::H(ComplexState { t: 0.0, h: h.clone() });
        let phys = Physics { nonlinear: false, ..Physics::default() };
        for form in [Formulation::H, Formulation::Ru] {
            for dt in [0.01, 0.049] {
                let mut s = Solver::new(g.clone(), &st, form, phys, dt).unwrap();
                s.step().unwrap();
                let w = 10f64.sqrt();
                let want: Vec<C64> = h.iter().map(|z| z * C64::new(0.0, -w * dt).exp()).collect();
                assert!(relc(&s.h().unwrap().h, &want) < 1e-13, "{form:?}");
            }
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let st = State::H(ComplexState { t: 0.0, h: vec![ZERO; 64] });
        let r = Solver::new(g.clone(), &st, Formulation::H, Physics::default(), 0.2);
        assert!(matches!(r, Err(Error::Cfl { .. })));
    }

    #[test]
    fn pure_euler_requires_nv() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        let st = State::H(ComplexState { t: 0.0, h: vec![ZERO; 64] });
        let phys = Physics { electric_field: false, nonlinear: true };
        assert!(matches!(Solver::new(g.clone(), &st, Formulation::H, phys, 0.01), Err(Error::Config(_))));
        assert!(Solver::new(g, &st, Formulation::Nv, phys, 0.01).is_ok());
    }

    #[test]
    fn oracle_examples() {
        let g = Grid::with(64, 2.0 * PI).unwrap();
        assert_eq!(riemann_blowup_oracle(&g, &[1.0; 64], &[0.0; 64]).unwrap(), None);
        let n0: Vec<f64> = g.x().iter().map(|x| 1.0 - 0.1 * x.sin()).collect();
        let t = riemann_blowup_oracle(&g, &n0, &[0.0; 64]).unwrap().unwrap();
        assert!((t - 10.0).abs() < 1e-10, "{t}");
    }

    #[test]
    fn formulations_agree_after_evolution() {
        let g = Grid::with(256, 40.0).unwrap();
        let ev = State::EV(random_ev(&g, 1e-2, 21));
        let mut hs = Solver::new(g.clone(), &ev, Formulation::H, Physics::default(), 0.02).unwrap();
        let mut rs = Solver::new(g.clone(), &ev, Formulation::Ru, Physics::default(), 0.02).unwrap();
        for _ in 0..100 {
            hs.step().unwrap();
            rs.step().unwrap();
        }
        assert!(relc(&rs.h().unwrap().h, &hs.h().unwrap().h) < 1e-10);
    }

    #[test]
    fn fourth_order_self_convergence() {
        let g = Grid::with(128, 40.0).unwrap();
        let ev = State::EV(random_ev(&g, 0.1, 31));
        for form in [Formulation::H, Formulation::Nv] {
            let run = |dt: f64| {
                let mut s = Solver::new(g.clone(), &ev, form, Physics::default(), dt).unwrap();
                for _ in 0..(1.0 / dt).round() as usize {
                    s.step().unwrap();
                }
                s.h().unwrap().h
            };
            let (a, b, c) = (run(0.1), run(0.05), run(0.025));
            let d1: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let d2: Vec<C64> = b.iter().zip(&c).map(|(x, y)| x - y).collect();
            let ratio = d1.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
                / d2.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((14.0..=18.0).contains(&ratio), "{form:?} {ratio}");
        }
    }

    #[test]
    fn time_reversal_recovers_data() {
        let g = Grid::with(128, 40.0).unwrap();
        let ev = State::EV(random_ev(&g, 1e-2, 5));
        let mut fwd = Solver::new(g.clone(), &ev, Formulation::H, Physics::default(), 0.05).unwrap();
        let start = fwd.h().unwrap().h;
        for _ in 0..100 {
            fwd.step().unwrap();
        }
        let mid = State::H(fwd.h().unwrap());
        let mut back = Solver::new(g.clone(), &mid, Formulation::H, Physics::default(), -0.05).unwrap();
        for _ in 0..100 {
            back.step().unwrap();
        }
        assert!(relc(&back.h().unwrap().h, &start) < 1e-7);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let g = Grid::with(64, 10.0).unwrap();
        let ev = State::EV(random_ev(&g, 1e-2, 8));
        let mut s = Solver::new(g.clone(), &ev, Formulation::Ru, Physics::default(), 0.05).unwrap();
        s.step().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.epkg");
        s.checkpoint(&path).unwrap();
        let (spec, st) = read_checkpoint(&path).unwrap();
        assert_eq!(spec, g.spec);
        assert_eq!(st, s.state());
        std::fs::write(&path, b"EPKX").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn neutrality_is_conserved_in_nv() {
        let g = Grid::with(64, 20.0).unwrap();
        let ev = random_ev(&g, 1e-2, 2);
        let nv = State::NV(ev_to_nv(&g, &ev).unwrap());
        let mut s = Solver::new(g.clone(), &nv, Formulation::Nv, Physics::default(), 0.05).unwrap();
        let m0 = neutrality_residual(&s.nv().unwrap().n);
        for _ in 0..2000 {
            s.step().unwrap();
        }
        let m1 = neutrality_residual(&s.nv().unwrap().n);
        assert!((m1 - m0).abs() < 1e-13, "{m0} {m1}");
    }
}
