//! Periodic grid, continuum-normalized transforms, Fourier multipliers,
//! Littlewood-Paley projectors, dealiasing and the norms used by the
//! diagnostics.
//!
//! Transform convention:
//!
//! ```text
//! f^(xi_k) = dx * sum_j f(x_j) exp(-i x_j xi_k)
//! f(x_j)   = (1/L) * sum_k f^(xi_k) exp(+i x_j xi_k)
//! ```
//!
//! with `x_j = -L/2 + j dx` and `xi_k = 2 pi k / L`, `k` in `[-N/2, N/2)`.
//! Spectra are stored in FFT order (index `i` holds `k = i` for `i < N/2`
//! and `k = i - N` otherwise).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// `<xi> = sqrt(1 + xi^2)`.
#[inline]
pub fn japanese(xi: f64) -> f64 {
    xi.mul_add(xi, 1.0).sqrt()
}

/// A frequency together with its Japanese bracket, so symbol evaluation on
/// a lattice never recomputes square roots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Freq {
    pub xi: f64,
    pub jb: f64,
}

impl Freq {
    #[inline]
    pub fn new(xi: f64) -> Self {
        Freq { xi, jb: japanese(xi) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub num_points: usize,
    pub box_length: f64,
}

impl GridSpec {
    pub fn new(num_points: usize, box_length: f64) -> Result<Self> {
        if num_points < 4 || !num_points.is_power_of_two() {
            return Err(Error::Config(format!(
                "num_points must be a power of two >= 4, got {num_points}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::Config(format!("box_length must be positive, got {box_length}")));
        }
        Ok(GridSpec { num_points, box_length })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.box_length / self.num_points as f64
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.box_length + j as f64 * self.dx()
    }

    #[inline]
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    #[inline]
    pub fn xi(&self, k: i64) -> f64 {
        k as f64 * self.dxi()
    }

    /// Signed wavenumber stored at FFT-order index `i`.
    #[inline]
    pub fn k_of(&self, i: usize) -> i64 {
        let n = self.num_points;
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// FFT-order index of wavenumber `k`, if it lies on the lattice.
    #[inline]
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let h = (self.num_points / 2) as i64;
        if k < -h || k >= h {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.num_points as i64) as usize)
        }
    }

    #[inline]
    pub fn nyquist_index(&self) -> usize {
        self.num_points / 2
    }

    /// Largest resolved frequency `pi / dx`.
    pub fn xi_max(&self) -> f64 {
        PI / self.dx()
    }
}

/// Grid with cached FFT plans and frequency tables. Plans are immutable and
/// shareable across threads.
pub struct Grid {
    pub spec: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    x: Vec<f64>,
    xi: Vec<f64>,
    jb: Vec<f64>,
    centered: Vec<Freq>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Arc<Self> {
        let n = spec.num_points;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let x = (0..n).map(|j| spec.x(j)).collect();
        let xi: Vec<f64> = (0..n).map(|i| spec.xi(spec.k_of(i))).collect();
        let jb = xi.iter().map(|&v| japanese(v)).collect();
        let h = (n / 2) as i64;
        let centered = (0..n as i64).map(|c| Freq::new(spec.xi(c - h))).collect();
        Arc::new(Grid { spec, fwd, inv, x, xi, jb, centered })
    }

    pub fn with(num_points: usize, box_length: f64) -> Result<Arc<Self>> {
        Ok(Self::new(GridSpec::new(num_points, box_length)?))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.spec.num_points
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.spec.dx()
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.spec.box_length
    }

    /// Sample points `x_j`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Frequencies in FFT order.
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// `<xi>` in FFT order.
    pub fn jb(&self) -> &[f64] {
        &self.jb
    }

    /// Frequencies in centered order: entry `c` holds `k = c - N/2`.
    pub fn centered(&self) -> &[Freq] {
        &self.centered
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::Config(format!(
                "field length {len} does not match grid size {}",
                self.n()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.check_len(f.len())?;
        let mut buf = f.to_vec();
        self.fwd.process(&mut buf);
        // exp(-i x_0 xi_k) = exp(i pi k) = (-1)^k
        let dx = self.dx();
        for (i, c) in buf.iter_mut().enumerate() {
            let s = if self.spec.k_of(i) & 1 == 0 { dx } else { -dx };
            *c *= s;
        }
        Ok(buf)
    }

    pub fn forward_real(&self, f: &[f64]) -> Result<Vec<C64>> {
        let c: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.forward(&c)
    }

    pub fn inverse(&self, s: &[C64]) -> Result<Vec<C64>> {
        self.check_len(s.len())?;
        let inv_l = 1.0 / self.length();
        let mut buf: Vec<C64> = s
            .iter()
            .enumerate()
            .map(|(i, &c)| if self.spec.k_of(i) & 1 == 0 { c * inv_l } else { -c * inv_l })
            .collect();
        self.inv.process(&mut buf);
        Ok(buf)
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, s: &[C64]) -> Result<Vec<f64>> {
        Ok(self.inverse(s)?.into_iter().map(|c| c.re).collect())
    }

    /// Multiply a spectrum by `m(xi_k)` in place and zero the Nyquist mode.
    /// A non-finite value at `k = 0` is replaced by `gauge` when provided.
    pub fn multiply_spectrum(
        &self,
        s: &mut [C64],
        m: impl Fn(f64) -> C64,
        gauge: Option<C64>,
    ) -> Result<()> {
        self.check_len(s.len())?;
        for (i, c) in s.iter_mut().enumerate() {
            let mut mk = m(self.xi[i]);
            if !(mk.re.is_finite() && mk.im.is_finite()) {
                match (i, gauge) {
                    (0, Some(g)) => mk = g,
                    _ => return Err(Error::SingularSymbol { k: self.spec.k_of(i) }),
                }
            }
            *c *= mk;
        }
        s[self.spec.nyquist_index()] = C64::new(0.0, 0.0);
        Ok(())
    }

    pub fn apply_multiplier(&self, f: &[C64], m: impl Fn(f64) -> C64) -> Result<Vec<C64>> {
        self.apply_multiplier_gauged(f, m, None)
    }

    pub fn apply_multiplier_gauged(
        &self,
        f: &[C64],
        m: impl Fn(f64) -> C64,
        gauge: Option<C64>,
    ) -> Result<Vec<C64>> {
        let mut s = self.forward(f)?;
        self.multiply_spectrum(&mut s, m, gauge)?;
        self.inverse(&s)
    }

    /// Multiplier applied to a real field, returning the real part. Intended
    /// for symbols with `m(-xi) = conj(m(xi))`.
    pub fn apply_multiplier_real(&self, f: &[f64], m: impl Fn(f64) -> C64) -> Result<Vec<f64>> {
        let mut s = self.forward_real(f)?;
        self.multiply_spectrum(&mut s, m, None)?;
        self.inverse_real(&s)
    }

    /// Spectrum of the complex conjugate field: `conj(s(-xi))`, Nyquist zeroed.
    pub fn conj_spectrum(&self, s: &[C64]) -> Vec<C64> {
        let n = self.n();
        let mut out: Vec<C64> = (0..n).map(|i| s[(n - i) % n].conj()).collect();
        out[self.spec.nyquist_index()] = C64::new(0.0, 0.0);
        out
    }

    /// Zero all modes with `|k| > N/3`.
    pub fn dealias(&self, s: &mut [C64]) {
        let cut = (self.n() / 3) as i64;
        for (i, c) in s.iter_mut().enumerate() {
            if self.spec.k_of(i).abs() > cut {
                *c = C64::new(0.0, 0.0);
            }
        }
    }

    /// Dealiased pseudospectral product of two real fields.
    pub fn product_real(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        let mut s = self.forward_real(&p)?;
        self.dealias(&mut s);
        self.inverse_real(&s)
    }

    pub fn lp_project(&self, f: &[C64], k: i32) -> Result<Vec<C64>> {
        self.apply_multiplier(f, |xi| C64::new(phi_k(xi.abs(), k), 0.0))
    }

    pub fn lp_project_le(&self, f: &[C64], a: f64) -> Result<Vec<C64>> {
        self.apply_multiplier(f, |xi| C64::new(bump(xi.abs() / a), 0.0))
    }

    /// `((1/L) sum <xi>^{2s} |f^|^2)^{1/2}` from a spectrum.
    pub fn sobolev_spec(&self, s: &[C64], order: f64) -> f64 {
        let sum: f64 = s
            .iter()
            .zip(&self.jb)
            .map(|(c, &j)| j.powf(2.0 * order) * c.norm_sqr())
            .sum();
        (sum / self.length()).sqrt()
    }

    pub fn sobolev(&self, f: &[C64], order: f64) -> Result<f64> {
        Ok(self.sobolev_spec(&self.forward(f)?, order))
    }

    pub fn sobolev_real(&self, f: &[f64], order: f64) -> Result<f64> {
        Ok(self.sobolev_spec(&self.forward_real(f)?, order))
    }

    pub fn l2(&self, f: &[C64]) -> f64 {
        (f.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dx()).sqrt()
    }

    /// `max_{j <= k} sup |d^j f|`, derivatives taken spectrally.
    pub fn wk_inf(&self, f: &[C64], k: u32) -> Result<f64> {
        let s = self.forward(f)?;
        let mut best = sup(f);
        for j in 1..=k {
            let mut d = s.clone();
            self.multiply_spectrum(&mut d, |xi| C64::new(0.0, xi).powu(j), None)?;
            best = best.max(sup(&self.inverse(&d)?));
        }
        Ok(best)
    }

    /// True when `f` is below `1e-10` of its peak on the outer 5% of the box
    /// at both ends, so the centered coordinate is unambiguous.
    pub fn support_clean(&self, f: &[C64]) -> bool {
        let peak = sup(f);
        if peak == 0.0 {
            return true;
        }
        let edge = (0.05 * self.n() as f64).ceil() as usize;
        let n = self.n();
        let tol = 1e-10 * peak;
        f[..edge].iter().chain(&f[n - edge..]).all(|c| c.norm() <= tol)
    }

    /// `x f` with the centered coordinate.
    pub fn times_x(&self, f: &[C64]) -> Vec<C64> {
        f.iter().zip(&self.x).map(|(c, &x)| c * x).collect()
    }

    pub fn xweighted_sobolev(&self, f: &[C64], order: f64) -> Result<XNorm> {
        let clean = self.support_clean(f);
        let value = self.sobolev(&self.times_x(f), order)?;
        Ok(XNorm { value, wraparound_clean: clean })
    }
}

/// An x-weighted norm together with the support precondition flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XNorm {
    pub value: f64,
    pub wraparound_clean: bool,
}

pub fn sup(f: &[C64]) -> f64 {
    f.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn sup_real(f: &[f64]) -> f64 {
    f.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Quintic smoothstep `6s^5 - 15s^4 + 10s^3` on `[0, 1]`, clamped.
#[inline]
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (s * 6.0 - 15.0) + 10.0)
}

/// The fixed bump: 1 on `[0, 5/4]`, 0 beyond `8/5`, monotone in between.
#[inline]
pub fn bump(r: f64) -> f64 {
    let r = r.abs();
    smoothstep((1.6 - r) / (1.6 - 1.25))
}

/// `phi_k(r) = phi(r / 2^k) - phi(r / 2^(k-1))`.
#[inline]
pub fn phi_k(r: f64, k: i32) -> f64 {
    bump(r / 2f64.powi(k)) - bump(r / 2f64.powi(k - 1))
}
