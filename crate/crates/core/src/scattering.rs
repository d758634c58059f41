//! Profiles `w = e^{it<D>} g`, the phase correction `theta`, the
//! modified-scattering analysis, cubic interaction integrals, and two
//! standalone checks: the Klein-Gordon dispersive constant and an
//! oscillatory double-integral quadrature.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::num::NonZeroUsize;
use std::path::Path;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;

use crate::diagnostics::{fmt_f64, rate_fit, RateFit};
use crate::error::{Error, Result};
use crate::spectral::{bump, japanese, sup, Grid, C64};
use crate::symbols::{c_star, cubic_symbol, phase, Triple};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
#[cfg(test)]
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Largest grid accepted by [`cubic_interaction`].
pub const CUBIC_LIMIT: usize = 256;

/// `w^ = e^{it<xi>} g^` on a spectrum.
pub fn profile_w_spec(grid: &Grid, g: &[C64], t: f64) -> Vec<C64> {
    g.iter().zip(grid.jb()).map(|(z, &j)| z * C64::new(0.0, t * j).exp()).collect()
}

/// Physical-space profile.
pub fn profile_w(grid: &Grid, g: &[C64], t: f64) -> Result<Vec<C64>> {
    grid.inverse(&profile_w_spec(grid, &grid.forward(g)?, t))
}

/// Inverse of [`profile_w_spec`].
pub fn unprofile_spec(grid: &Grid, w: &[C64], t: f64) -> Vec<C64> {
    profile_w_spec(grid, w, -t)
}

/// Trapezoid accumulation of `theta(t, xi) = -c*(xi)<xi>^3/(2 pi) *
/// int_0^t |w^(s, xi)|^2 / (s + 1) ds`. The first sample starts the integral.
#[derive(Clone, Debug)]
pub struct PhaseAccumulator {
    prefactor: Vec<f64>,
    integral: Vec<f64>,
    theta: Vec<f64>,
    last: Option<(f64, Vec<f64>)>,
}

impl PhaseAccumulator {
    pub fn new(grid: &Grid) -> Self {
        let prefactor = grid.xi().iter().map(|&xi| -c_star(xi) * japanese(xi).powi(3) / (2.0 * PI)).collect();
        Self::with_prefactor(prefactor)
    }

    /// Accumulator whose phase stays zero, for runs without the cubic
    /// interaction and for the uncorrected control path.
    pub fn zero(grid: &Grid) -> Self {
        Self::with_prefactor(vec![0.0; grid.n()])
    }

    fn with_prefactor(prefactor: Vec<f64>) -> Self {
        let n = prefactor.len();
        PhaseAccumulator { prefactor, integral: vec![0.0; n], theta: vec![0.0; n], last: None }
    }

    pub fn last_time(&self) -> Option<f64> {
        self.last.as_ref().map(|(t, _)| *t)
    }

    pub fn push(&mut self, t: f64, w: &[C64]) -> Result<()> {
        if w.len() != self.theta.len() {
            return Err(Error::Config(format!("profile has {} modes, expected {}", w.len(), self.theta.len())));
        }
        let f: Vec<f64> = w.iter().map(|z| z.norm_sqr() / (t + 1.0)).collect();
        if let Some((t0, f0)) = &self.last {
            if !(t > *t0) {
                return Err(Error::Ordering { t, last: *t0 });
            }
            let h = 0.5 * (t - t0);
            for k in 0..f.len() {
                self.integral[k] += h * (f0[k] + f[k]);
                self.theta[k] = self.prefactor[k] * self.integral[k];
            }
        }
        self.last = Some((t, f));
        Ok(())
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn integral(&self) -> &[f64] {
        &self.integral
    }

    /// `e^{i theta} w^`.
    pub fn corrected(&self, w: &[C64]) -> Vec<C64> {
        corrected(w, &self.theta)
    }
}

pub fn corrected(w: &[C64], theta: &[f64]) -> Vec<C64> {
    w.iter().zip(theta).map(|(z, &th)| z * C64::new(0.0, th).exp()).collect()
}

/// A stored profile spectrum with the phase accumulated up to its time.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSnapshot {
    pub t: f64,
    pub w: Vec<C64>,
    pub theta: Vec<f64>,
}

/// Parameters of [`scattering_analysis`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatteringOptions {
    /// Weight exponent `m` in `<xi>^m`.
    pub m: f64,
    /// The decay fit uses snapshots with `fit_lo <= t <= fit_hi_fraction * T`.
    pub fit_lo: f64,
    pub fit_hi_fraction: f64,
}

/// Result of the modified-scattering analysis.
#[derive(Clone, Debug)]
pub struct ScatteringReport {
    pub m: f64,
    pub final_time: f64,
    pub xi_window: f64,
    pub times: Vec<f64>,
    /// `D(t)` for the corrected profile.
    pub d_corrected: Vec<f64>,
    /// Same with `theta = 0`.
    pub d_control: Vec<f64>,
    pub delta: Option<RateFit>,
    pub fit_window: (f64, f64),
    pub w_inf: Vec<C64>,
    /// Carrier band `|w^(T)| >= max/2`, compared at `comparison_time`.
    pub comparison_time: f64,
    pub carrier_corrected: f64,
    pub carrier_control: f64,
    pub theta_carrier_final: f64,
}

impl ScatteringReport {
    /// `delta = -slope`, when a fit was possible.
    pub fn delta_value(&self) -> Option<f64> {
        self.delta.map(|f| -f.slope)
    }

    pub fn control_dominates(&self) -> bool {
        self.carrier_control > self.carrier_corrected
    }

    /// Key-value text; see the README for the key set.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), fmt_f64);
        let _ = writeln!(s, "m={}", fmt_f64(self.m));
        let _ = writeln!(s, "final_time={}", fmt_f64(self.final_time));
        let _ = writeln!(s, "xi_window={}", fmt_f64(self.xi_window));
        let _ = writeln!(s, "snapshots={}", self.times.len());
        let _ = writeln!(s, "fit_lo={}", fmt_f64(self.fit_window.0));
        let _ = writeln!(s, "fit_hi={}", fmt_f64(self.fit_window.1));
        let _ = writeln!(s, "delta={}", opt(self.delta_value()));
        let _ = writeln!(s, "delta_band={}", opt(self.delta.map(|f| f.band)));
        let _ = writeln!(s, "comparison_time={}", fmt_f64(self.comparison_time));
        let _ = writeln!(s, "carrier_corrected={}", fmt_f64(self.carrier_corrected));
        let _ = writeln!(s, "carrier_control={}", fmt_f64(self.carrier_control));
        let _ = writeln!(s, "control_dominates={}", self.control_dominates());
        let _ = writeln!(s, "theta_carrier_final={}", fmt_f64(self.theta_carrier_final));
        let w_inf_sup = self.w_inf.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let _ = writeln!(s, "w_inf_sup={}", fmt_f64(w_inf_sup));
        s
    }

    pub const CURVE_HEADER: &'static str = "t,d_corrected,d_control";

    pub fn curve_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CURVE_HEADER);
        for i in 0..self.times.len() {
            let _ = writeln!(
                s,
                "{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.d_corrected[i]),
                fmt_f64(self.d_control[i])
            );
        }
        s
    }

    pub fn write(&self, report: &Path, curve: &Path) -> Result<()> {
        std::fs::write(report, self.to_text())?;
        std::fs::write(curve, self.curve_csv())?;
        Ok(())
    }
}

/// Parse the key-value report text.
pub fn parse_report(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Analysis(format!("malformed report line '{l}'")))
        })
        .collect()
}

fn weighted_sup(a: &[C64], b: &[C64], weight: &[f64], mask: &[bool]) -> f64 {
    (0..a.len()).filter(|&k| mask[k]).map(|k| weight[k] * (a[k] - b[k]).norm()).fold(0.0, f64::max)
}

/// `D(t) = sup_{|xi| <= xi_max/2} <xi>^m |e^{i theta(t)} w^(t) - e^{i theta(T)} w^(T)|`,
/// its `t^{-delta}` fit, `w_inf` and the `theta = 0` control curve.
pub fn scattering_analysis(
    grid: &Grid,
    snapshots: &[ProfileSnapshot],
    opts: ScatteringOptions,
) -> Result<ScatteringReport> {
    if snapshots.len() < 20 {
        return Err(Error::Analysis(format!("scattering analysis needs 20 snapshots, found {}", snapshots.len())));
    }
    if snapshots.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Analysis("snapshot times must increase".into()));
    }
    let last = snapshots.last().unwrap();
    let first_positive = snapshots.iter().map(|s| s.t).find(|&t| t > 0.0).unwrap_or(last.t);
    if last.t < 2.0 * first_positive {
        return Err(Error::Analysis("snapshots do not span a dyadic range".into()));
    }
    let big_t = last.t;
    let xi_window = 0.5 * grid.spec.xi_max();
    let mask: Vec<bool> = grid.xi().iter().map(|xi| xi.abs() <= xi_window).collect();
    let weight: Vec<f64> = grid.jb().iter().map(|j| j.powf(opts.m)).collect();

    let final_corr = corrected(&last.w, &last.theta);
    let corr: Vec<Vec<C64>> = snapshots.iter().map(|s| corrected(&s.w, &s.theta)).collect();
    let d_corrected: Vec<f64> = corr.iter().map(|c| weighted_sup(c, &final_corr, &weight, &mask)).collect();
    let d_control: Vec<f64> = snapshots.iter().map(|s| weighted_sup(&s.w, &last.w, &weight, &mask)).collect();
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();

    let fit_window = (opts.fit_lo, opts.fit_hi_fraction * big_t);
    let delta = rate_fit(&times, &d_corrected, fit_window.0, fit_window.1).ok();

    let tail: Vec<usize> = (0..snapshots.len()).filter(|&i| times[i] >= 0.9 * big_t).collect();
    let mut w_inf = vec![ZERO; grid.n()];
    for &i in &tail {
        for (a, b) in w_inf.iter_mut().zip(&corr[i]) {
            *a += b;
        }
    }
    w_inf.iter_mut().for_each(|z| *z /= tail.len() as f64);

    // carrier band of the final profile, compared at the start of the tail window
    let peak = sup(&last.w);
    let carrier: Vec<bool> = (0..grid.n()).map(|k| mask[k] && last.w[k].norm() >= 0.5 * peak).collect();
    let ci = tail[0];
    let carrier_corrected = weighted_sup(&corr[ci], &final_corr, &weight, &carrier);
    let carrier_control = weighted_sup(&snapshots[ci].w, &last.w, &weight, &carrier);
    let kc = (0..grid.n())
        .filter(|&k| mask[k])
        .max_by(|&a, &b| last.w[a].norm().total_cmp(&last.w[b].norm()))
        .unwrap_or(0);

    Ok(ScatteringReport {
        m: opts.m,
        final_time: big_t,
        xi_window,
        times,
        d_corrected,
        d_control,
        delta,
        fit_window,
        w_inf,
        comparison_time: snapshots[ci].t,
        carrier_corrected,
        carrier_control,
        theta_carrier_final: last.theta[kc],
    })
}

/// `I^{triple}(t, xi) = int int c e^{it Psi} w^{i1}(xi - eta) w^{i2}(eta - sigma)
/// w^{i3}(sigma) d eta d sigma` as a lattice sum, for every lattice `xi`.
/// `w^-(zeta) = conj(w^(-zeta))`. Frequencies off the lattice contribute zero.
pub fn cubic_interaction(grid: &Grid, triple: Triple, w: &[C64], t: f64) -> Result<Vec<C64>> {
    let n = grid.n();
    if n > CUBIC_LIMIT {
        return Err(Error::CostGuard(format!("cubic_interaction needs num_points <= {CUBIC_LIMIT}, got {n}")));
    }
    let signs = triple.signs();
    let h = (n / 2) as i64;
    let dxi = grid.spec.dxi();
    let signed = |sign: f64, k: i64| -> C64 {
        if sign > 0.0 {
            grid.spec.index_of(k).map_or(ZERO, |i| w[i])
        } else {
            grid.spec.index_of(-k).map_or(ZERO, |i| w[i].conj())
        }
    };
    let live: Vec<i64> = (-h..h).filter(|&k| grid.spec.index_of(k).is_some_and(|i| w[i] != ZERO)).collect();
    let weight = dxi * dxi;
    let out: Vec<C64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let k = grid.spec.k_of(i);
            if k == -h {
                return ZERO;
            }
            let xi = k as f64 * dxi;
            let mut acc = ZERO;
            // zeta3 = sigma, zeta2 = eta - sigma, zeta1 = xi - eta
            for &k3 in &live {
                let f3 = signed(signs[2], k3);
                if f3 == ZERO {
                    continue;
                }
                for &k2 in &live {
                    let f2 = signed(signs[1], k2);
                    if f2 == ZERO {
                        continue;
                    }
                    let f1 = signed(signs[0], k - k2 - k3);
                    if f1 == ZERO {
                        continue;
                    }
                    let sigma = k3 as f64 * dxi;
                    let eta = (k2 + k3) as f64 * dxi;
                    let c = cubic_symbol(triple, xi, eta, sigma);
                    let ph = C64::new(0.0, t * phase(triple, xi, eta, sigma)).exp();
                    acc += c * ph * f1 * f2 * f3;
                }
            }
            acc * weight
        })
        .collect();
    Ok(out)
}

/// One row of [`dispersive_constant_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersiveRow {
    pub t: f64,
    pub sup_evolved: f64,
    pub ratio: f64,
    pub wraparound: bool,
}

/// Summary of the dispersive-constant ratios for one datum.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersiveTable {
    pub rows: Vec<DispersiveRow>,
    pub sup_ratio: f64,
    pub t_valid: f64,
}

/// `R(t) = ||e^{it<D>} f||_inf / [(1+t)^{-1/2} ||f^||_inf + (1+t)^{-5/8}
/// (||f||_{H^2} + ||x f||_{H^1})]`. Rows past `T_valid` are flagged and
/// excluded from the sup.
pub fn dispersive_constant_check(grid: &Grid, f: &[C64], times: &[f64], support_radius: f64) -> Result<DispersiveTable> {
    let fh = grid.forward(f)?;
    let fhat_inf = sup(&fh);
    let h2 = grid.sobolev_spec(&fh, 2.0);
    let xh1 = grid.sobolev(&grid.times_x(f), 1.0)?;
    let t_valid = crate::dynamics::valid_horizon(&grid.spec, support_radius);
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let ev = grid.inverse(&unprofile_spec(grid, &fh, -t))?;
        let s = sup(&ev);
        let denom = (1.0 + t).powf(-0.5) * fhat_inf + (1.0 + t).powf(-0.625) * (h2 + xh1);
        rows.push(DispersiveRow { t, sup_evolved: s, ratio: s / denom, wraparound: t > t_valid });
    }
    let sup_ratio = rows.iter().filter(|r| !r.wraparound).map(|r| r.ratio).fold(0.0, f64::max);
    Ok(DispersiveTable { rows, sup_ratio, t_valid })
}

/// Result of [`quadrature_check_b4`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct B4Result {
    pub value: f64,
    pub error: f64,
    /// `lambda^{-1-n} mu^{-2n}`
    pub bound_shape: f64,
}

/// Largest `lambda mu^2` accepted by [`quadrature_check_b4`].
pub const B4_LIMIT: f64 = 1e5;

/// `I(lambda, mu) = int int e^{i lambda x y} phi(x/mu) phi(y/mu) dx dy` and
/// `|I - 2 pi / lambda|`.
///
/// The `y` integral is `mu phi^(lambda mu x)` with `phi^(z) = int phi(r)
/// cos(z r) dr`; substituting `z = lambda mu x` leaves
/// `(2/lambda) int_0^{1.6 R} phi(z/R) phi^(z) dz` with `R = lambda mu^2`.
/// Both integrals use 16-point Gauss-Legendre panels no wider than
/// `min(0.05, 0.5/(lambda mu))` in the original variables.
pub fn quadrature_check_b4(lambda: f64, mu: f64, n: u32) -> Result<B4Result> {
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(Error::Config("quadrature_check_b4 needs lambda, mu > 0".into()));
    }
    let r = lambda * mu * mu;
    if r > B4_LIMIT {
        return Err(Error::CostGuard(format!("lambda mu^2 = {r} exceeds the resolution guard {B4_LIMIT}")));
    }
    let gl = GaussLegendre::new(NonZeroUsize::new(16).unwrap());
    let step = 0.05f64.min(0.5 / (lambda * mu));
    let panels = |a: f64, b: f64, width: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let m = ((b - a) / width).ceil().max(1.0) as usize;
        let w = (b - a) / m as f64;
        (0..m).map(|i| gl.integrate(a + i as f64 * w, a + (i + 1) as f64 * w, f)).sum()
    };
    // phi^(z) = 2 [ sin(1.25 z)/z + int_{1.25}^{1.6} phi(r) cos(z r) dr ]
    let phi_hat = |z: f64| -> f64 {
        let flat = if z.abs() < 1e-12 { 1.25 } else { (1.25 * z).sin() / z };
        // inner variable r = y/mu, step in y is mu * dr
        let width = (step / mu).min(0.5 / z.abs().max(1e-300));
        2.0 * (flat + panels(1.25, 1.6, width, &|r| bump(r) * (z * r).cos()))
    };
    // outer variable z = lambda mu x, step in x maps to lambda mu * step
    let zw = lambda * mu * step;
    let core = panels(0.0, 1.25 * r, zw, &phi_hat);
    let edge = panels(1.25 * r, 1.6 * r, zw, &|z| bump(z / r) * phi_hat(z));
    let value = 2.0 * (core + edge) / lambda;
    Ok(B4Result {
        value,
        error: (value - 2.0 * PI / lambda).abs(),
        bound_shape: lambda.powi(-1 - n as i32) * mu.powi(-2 * n as i32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_form::NormalFormContext;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn band(grid: &Grid, kmax: i64, amp: f64, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = vec![ZERO; grid.n()];
        for k in -kmax..=kmax {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp * grid.length();
            s[grid.spec.index_of(k).unwrap()] = z;
        }
        s
    }

    fn norm(a: &[C64]) -> f64 {
        a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn profile_is_unitary_and_invertible() {
        let g = Grid::with(64, 20.0).unwrap();
        let s = band(&g, 10, 1e-2, 1);
        assert_eq!(profile_w_spec(&g, &s, 0.0), s);
        let w = profile_w_spec(&g, &s, 3.7);
        assert!((norm(&w) - norm(&s)).abs() < 1e-15 * norm(&s));
        let back = unprofile_spec(&g, &w, 3.7);
        assert!(back.iter().zip(&s).all(|(a, b)| (a - b).norm() < 1e-15 * norm(&s)));
    }

    #[test]
    fn theta_vanishes_at_zero_frequency_and_zero_data() {
        let g = Grid::with(64, 20.0).unwrap();
        let mut acc = PhaseAccumulator::new(&g);
        let w = band(&g, 10, 1e-2, 2);
        acc.push(0.0, &w).unwrap();
        acc.push(1.0, &w).unwrap();
        assert_eq!(acc.theta()[0], 0.0);
        let mut z = PhaseAccumulator::new(&g);
        z.push(0.0, &vec![ZERO; 64]).unwrap();
        z.push(2.0, &vec![ZERO; 64]).unwrap();
        assert!(z.theta().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn theta_increment_matches_log_for_constant_data() {
        let g = Grid::with(64, 20.0).unwrap();
        let w = band(&g, 10, 1e-2, 3);
        let mut acc = PhaseAccumulator::new(&g);
        let (t1, t2) = (2.0, 6.0);
        let m = 400;
        for i in 0..=m {
            acc.push(t1 + (t2 - t1) * i as f64 / m as f64, &w).unwrap();
        }
        for k in [1usize, 5, 9] {
            let xi = g.xi()[k];
            let a = w[k].norm_sqr();
            let want = -c_star(xi) * japanese(xi).powi(3) * a / (2.0 * PI) * ((t2 + 1.0) / (t1 + 1.0)).ln();
            assert!((acc.theta()[k] - want).abs() < 1e-5 * want.abs(), "{k}");
        }
    }

    #[test]
    fn theta_requires_increasing_time() {
        let g = Grid::with(64, 20.0).unwrap();
        let w = band(&g, 10, 1e-2, 4);
        let mut acc = PhaseAccumulator::new(&g);
        acc.push(1.0, &w).unwrap();
        assert!(matches!(acc.push(1.0, &w), Err(Error::Ordering { .. })));
        assert!(matches!(acc.push(0.5, &w), Err(Error::Ordering { .. })));
    }

    #[test]
    fn accumulated_integral_is_non_decreasing() {
        let g = Grid::with(64, 20.0).unwrap();
        let mut acc = PhaseAccumulator::new(&g);
        let mut prev = vec![0.0; 64];
        for i in 0..20 {
            acc.push(i as f64 * 0.5, &band(&g, 10, 1e-2, 10 + i)).unwrap();
            assert!(acc.integral().iter().zip(&prev).all(|(a, b)| a >= b));
            prev = acc.integral().to_vec();
        }
    }

    fn linear_snapshots(g: &Grid, with_phase: bool) -> Vec<ProfileSnapshot> {
        let w = band(g, 10, 1e-2, 5);
        let mut acc = if with_phase { PhaseAccumulator::new(g) } else { PhaseAccumulator::zero(g) };
        (0..30)
            .map(|i| {
                let t = 1.0 + i as f64;
                acc.push(t, &w).unwrap();
                ProfileSnapshot { t, w: w.clone(), theta: acc.theta().to_vec() }
            })
            .collect()
    }

    #[test]
    fn linear_profile_has_zero_variation() {
        let g = Grid::with(64, 20.0).unwrap();
        let snaps = linear_snapshots(&g, false);
        let opts = ScatteringOptions { m: 6.0, fit_lo: 2.0, fit_hi_fraction: 0.5 };
        let rep = scattering_analysis(&g, &snaps, opts).unwrap();
        assert!(rep.d_corrected.iter().all(|&d| d == 0.0));
        assert!(rep.d_control.iter().all(|&d| d == 0.0));
        assert_eq!(rep.w_inf, snaps[0].w);
        assert!(rep.delta.is_none());
        let text = rep.to_text();
        let keys: Vec<String> = parse_report(&text).unwrap().into_iter().map(|(k, _)| k).collect();
        assert!(keys.contains(&"delta".to_string()) && keys.contains(&"m".to_string()));
    }

    #[test]
    fn control_path_equals_raw_profile() {
        let g = Grid::with(64, 20.0).unwrap();
        let snaps = linear_snapshots(&g, true);
        let opts = ScatteringOptions { m: 0.0, fit_lo: 2.0, fit_hi_fraction: 0.5 };
        let rep = scattering_analysis(&g, &snaps, opts).unwrap();
        // with theta set to zero the control curve is the raw profile variation: zero here
        assert!(rep.d_control.iter().all(|&d| d == 0.0));
        assert!(rep.d_corrected.iter().take(25).all(|&d| d > 0.0));
    }

    #[test]
    fn analysis_needs_enough_snapshots() {
        let g = Grid::with(64, 20.0).unwrap();
        let snaps = linear_snapshots(&g, false);
        let opts = ScatteringOptions { m: 0.0, fit_lo: 1.0, fit_hi_fraction: 1.0 };
        assert!(matches!(scattering_analysis(&g, &snaps[..10], opts), Err(Error::Analysis(_))));
    }

    #[test]
    fn cubic_interaction_guards_and_zero() {
        let g = Grid::with(512, 20.0).unwrap();
        assert!(matches!(
            cubic_interaction(&g, Triple::PPM, &vec![ZERO; 512], 0.0),
            Err(Error::CostGuard(_))
        ));
        let g = Grid::with(32, 20.0).unwrap();
        let z = cubic_interaction(&g, Triple::PPP, &vec![ZERO; 32], 1.0).unwrap();
        assert!(z.iter().all(|c| *c == ZERO));
    }

    #[test]
    fn cubic_interaction_is_cubic() {
        let g = Grid::with(32, 20.0).unwrap();
        let w = band(&g, 4, 1e-2, 6);
        let w2: Vec<C64> = w.iter().map(|z| z * 2.0).collect();
        let a = cubic_interaction(&g, Triple::PPM, &w, 0.3).unwrap();
        let b = cubic_interaction(&g, Triple::PPM, &w2, 0.3).unwrap();
        let err: f64 = a.iter().zip(&b).map(|(x, y)| (x * 8.0 - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12 * norm(&b));
    }

    #[test]
    fn cubic_interaction_reproduces_cubic_term() {
        let g = Grid::with(64, 20.0).unwrap();
        let ctx = NormalFormContext::new(g.clone(), 6);
        let gs = band(&g, 6, 1e-2, 7);
        let t = 0.8;
        let n_g = ctx.cubic_n_spec(&gs).unwrap();
        let w = profile_w_spec(&g, &gs, t);
        let mut sum = vec![ZERO; 64];
        for tr in Triple::ALL {
            let it = cubic_interaction(&g, tr, &w, t).unwrap();
            for (s, v) in sum.iter_mut().zip(&it) {
                *s += I * v / (4.0 * PI * PI);
            }
        }
        let want = profile_w_spec(&g, &n_g, t);
        let err = sum.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / norm(&want);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn dispersive_ratio_is_bounded_and_decay_is_half() {
        let g = Grid::with(4096, 1600.0 * PI).unwrap();
        let f: Vec<C64> = g.x().iter().map(|&x| C64::new((-(x / 2.0).powi(2)).exp(), 0.0)).collect();
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 10.0).collect();
        let tab = dispersive_constant_check(&g, &f, &times, 2.0 * 5.0).unwrap();
        assert!(tab.sup_ratio.is_finite() && tab.sup_ratio > 0.0);
        assert!(tab.rows[0].ratio <= 1.0);
        let t: Vec<f64> = tab.rows.iter().map(|r| r.t).collect();
        let y: Vec<f64> = tab.rows.iter().map(|r| r.sup_evolved).collect();
        let fit = rate_fit(&t, &y, 100.0, 500.0).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.05, "{}", fit.slope);
    }

    #[test]
    fn b4_quadrature_leading_term() {
        let r = quadrature_check_b4(100.0, 2.0, 1).unwrap();
        assert!(r.error < 1e-2 * 2.0 * PI / 100.0, "{r:?}");
        assert!(quadrature_check_b4(1e4, 10.0, 1).is_err());
        assert!(quadrature_check_b4(-1.0, 1.0, 1).is_err());
    }
}
