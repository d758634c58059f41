//! Direct-summation bilinear and trilinear Fourier multiplier operators.
//!
//! `O[f, M]V` has spectrum `(1/L) sum_j f^(xi_j) M(xi_j, xi_k - xi_j) V^(xi_k - xi_j)`.
//! Frequencies that fall off the lattice are dropped rather than wrapped.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{Freq, Grid, C64};
use crate::symbols::{CutoffParams, Mat2};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Largest grid for which plans cache the full symbol lattice.
pub const DENSE_LIMIT: usize = 512;
/// Largest grid accepted by [`apply_trilinear`].
pub const TRILINEAR_LIMIT: usize = 512;

/// FFT-order spectrum to centered order (`c = k + N/2`).
pub fn to_centered(s: &[C64]) -> Vec<C64> {
    let n = s.len();
    let h = n / 2;
    let mut out = vec![ZERO; n];
    out[h..].copy_from_slice(&s[..h]);
    out[..h].copy_from_slice(&s[h..]);
    out
}

/// Centered-order spectrum back to FFT order, zeroing the Nyquist mode.
pub fn from_centered(c: &[C64]) -> Vec<C64> {
    let n = c.len();
    let h = n / 2;
    let mut out = vec![ZERO; n];
    out[..h].copy_from_slice(&c[h..]);
    out[h..].copy_from_slice(&c[..h]);
    out[h] = ZERO;
    out
}

/// Inclusive index range of the nonzero entries, if any.
fn support(c: &[C64]) -> Option<(usize, usize)> {
    let lo = c.iter().position(|z| *z != ZERO)?;
    let hi = c.iter().rposition(|z| *z != ZERO)?;
    Some((lo, hi))
}

/// Candidate first-slot indices `cj` for output `ck`, so that both `cj` and
/// `cm = ck - cj + N/2` lie in their supports.
#[inline]
fn pair_range(ck: usize, h: usize, fs: (usize, usize), vs: (usize, usize)) -> Option<(usize, usize)> {
    let ck = ck as i64;
    let h = h as i64;
    let lo = (fs.0 as i64).max(ck + h - vs.1 as i64);
    let hi = (fs.1 as i64).min(ck + h - vs.0 as i64);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Scalar symbol convolution on spectra in FFT order.
pub fn convolve_scalar<F>(grid: &Grid, f: &[C64], v: &[C64], sym: F) -> Vec<C64>
where
    F: Fn(Freq, Freq, Freq) -> C64 + Sync,
{
    let freqs = grid.centered();
    let h = grid.n() / 2;
    convolve_scalar_indexed(grid, f, v, h, |cj, cm, ck| sym(freqs[cj], freqs[cm], freqs[ck]))
}

/// As [`convolve_scalar`], with the symbol addressed by centered indices and
/// outputs computed only for `|k| <= band`.
fn convolve_scalar_indexed<F>(grid: &Grid, f: &[C64], v: &[C64], band: usize, sym: F) -> Vec<C64>
where
    F: Fn(usize, usize, usize) -> C64 + Sync,
{
    let n = grid.n();
    let h = n / 2;
    let fc = to_centered(f);
    let vc = to_centered(v);
    let (Some(fs), Some(vs)) = (support(&fc), support(&vc)) else {
        return vec![ZERO; n];
    };
    let inv_l = 1.0 / grid.length();
    let out: Vec<C64> = (0..n)
        .into_par_iter()
        .map(|ck| {
            if ck == 0 || ck.abs_diff(h) > band {
                return ZERO;
            }
            let Some((lo, hi)) = pair_range(ck, h, fs, vs) else {
                return ZERO;
            };
            let mut acc = ZERO;
            for cj in lo..=hi {
                let cm = ck + h - cj;
                acc += fc[cj] * sym(cj, cm, ck) * vc[cm];
            }
            acc * inv_l
        })
        .collect();
    from_centered(&out)
}

/// Matrix symbol convolution acting on a 2-vector of spectra.
pub fn convolve_matrix<F>(grid: &Grid, f: &[C64], v: [&[C64]; 2], sym: F) -> [Vec<C64>; 2]
where
    F: Fn(Freq, Freq, Freq) -> Mat2 + Sync,
{
    let freqs = grid.centered();
    let h = grid.n() / 2;
    convolve_matrix_indexed(grid, f, v, h, |cj, cm, ck| sym(freqs[cj], freqs[cm], freqs[ck]))
}

/// As [`convolve_matrix`], with the symbol addressed by centered lattice
/// indices `(cj, cm, ck)` and outputs computed only for `|k| <= band`.
fn convolve_matrix_indexed<F>(
    grid: &Grid,
    f: &[C64],
    v: [&[C64]; 2],
    band: usize,
    sym: F,
) -> [Vec<C64>; 2]
where
    F: Fn(usize, usize, usize) -> Mat2 + Sync,
{
    let n = grid.n();
    let h = n / 2;
    let fc = to_centered(f);
    let v0 = to_centered(v[0]);
    let v1 = to_centered(v[1]);
    let vs = match (support(&v0), support(&v1)) {
        (Some(a), Some(b)) => Some((a.0.min(b.0), a.1.max(b.1))),
        (a, b) => a.or(b),
    };
    let (Some(fs), Some(vs)) = (support(&fc), vs) else {
        return [vec![ZERO; n], vec![ZERO; n]];
    };
    let inv_l = 1.0 / grid.length();
    let out: Vec<(C64, C64)> = (0..n)
        .into_par_iter()
        .map(|ck| {
            if ck == 0 || ck.abs_diff(h) > band {
                return (ZERO, ZERO);
            }
            let Some((lo, hi)) = pair_range(ck, h, fs, vs) else {
                return (ZERO, ZERO);
            };
            let (mut a0, mut a1) = (ZERO, ZERO);
            for cj in lo..=hi {
                let cm = ck + h - cj;
                let m = sym(cj, cm, ck).0;
                let w = fc[cj];
                a0 += w * (m[0][0] * v0[cm] + m[0][1] * v1[cm]);
                a1 += w * (m[1][0] * v0[cm] + m[1][1] * v1[cm]);
            }
            (a0 * inv_l, a1 * inv_l)
        })
        .collect();
    let (o0, o1): (Vec<C64>, Vec<C64>) = out.into_iter().unzip();
    [from_centered(&o0), from_centered(&o1)]
}

pub type MatrixFn = Arc<dyn Fn(Freq, Freq, Freq) -> Mat2 + Send + Sync>;

/// Precomputed bilinear operator for one matrix symbol on one grid. Small
/// grids cache the full symbol lattice; larger grids evaluate lazily.
#[derive(Clone)]
pub struct BilinearPlan {
    grid: Arc<Grid>,
    symbol: MatrixFn,
    lattice: Option<Arc<Vec<Mat2>>>,
    pub dealias: bool,
}

impl std::fmt::Debug for BilinearPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BilinearPlan")
            .field("grid", &self.grid.spec)
            .field("cached", &self.lattice.is_some())
            .finish()
    }
}

impl BilinearPlan {
    pub fn new(grid: Arc<Grid>, symbol: MatrixFn) -> Self {
        let lattice = (grid.n() <= DENSE_LIMIT).then(|| {
            let freqs = grid.centered();
            let table: Vec<Mat2> = (0..grid.n() * grid.n())
                .into_par_iter()
                .map(|idx| {
                    let (a, b) = (freqs[idx / grid.n()], freqs[idx % grid.n()]);
                    symbol(a, b, Freq::new(a.xi + b.xi))
                })
                .collect();
            Arc::new(table)
        });
        BilinearPlan { grid, symbol, lattice, dealias: false }
    }

    /// Plan for a scalar symbol acting componentwise.
    pub fn scalar(grid: Arc<Grid>, m: impl Fn(Freq, Freq, Freq) -> C64 + Send + Sync + 'static) -> Self {
        Self::new(grid, Arc::new(move |a, b, s| {
            let v = m(a, b, s);
            Mat2::diag(v, v)
        }))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Symbol value at the lattice pair `(ca, cb)` in centered indices.
    pub fn entry(&self, ca: usize, cb: usize) -> Mat2 {
        match &self.lattice {
            Some(t) => t[ca * self.grid.n() + cb],
            None => {
                let f = self.grid.centered();
                (self.symbol)(f[ca], f[cb], Freq::new(f[ca].xi + f[cb].xi))
            }
        }
    }

    /// Lattice dimensions `(rows, cols)` when cached.
    pub fn lattice_shape(&self) -> Option<(usize, usize)> {
        self.lattice.as_ref().map(|_| (self.grid.n(), self.grid.n()))
    }

    pub fn lattice_is_finite(&self) -> bool {
        self.lattice.as_ref().map_or(true, |t| t.iter().all(Mat2::is_finite))
    }

    fn check(&self, grid: &Grid, lens: &[usize]) -> Result<()> {
        if grid.spec != self.grid.spec || lens.iter().any(|&l| l != self.grid.n()) {
            return Err(Error::Config("field grid does not match the plan grid".into()));
        }
        Ok(())
    }

    /// `O[f, M]V` on spectra.
    pub fn apply_spec(&self, f: &[C64], v: [&[C64]; 2]) -> Result<[Vec<C64>; 2]> {
        self.check(&self.grid, &[f.len(), v[0].len(), v[1].len()])?;
        let n = self.grid.n();
        let band = if self.dealias { n / 3 } else { n / 2 };
        let freqs = self.grid.centered();
        let mut out = match &self.lattice {
            Some(t) => convolve_matrix_indexed(&self.grid, f, v, band, |cj, cm, _| t[cj * n + cm]),
            None => convolve_matrix_indexed(&self.grid, f, v, band, |cj, cm, ck| {
                (self.symbol)(freqs[cj], freqs[cm], freqs[ck])
            }),
        };
        if self.dealias {
            for o in out.iter_mut() {
                self.grid.dealias(o);
            }
        }
        Ok(out)
    }

    /// `O[f, M]V` on physical-space fields.
    pub fn apply(&self, grid: &Grid, f: &[C64], v: [&[C64]; 2]) -> Result<[Vec<C64>; 2]> {
        self.check(grid, &[f.len(), v[0].len(), v[1].len()])?;
        let fh = grid.forward(f)?;
        let v0 = grid.forward(v[0])?;
        let v1 = grid.forward(v[1])?;
        let [a, b] = self.apply_spec(&fh, [&v0, &v1])?;
        Ok([grid.inverse(&a)?, grid.inverse(&b)?])
    }

    /// Scalar application (first diagonal entry) on spectra.
    pub fn apply_scalar_spec(&self, f: &[C64], v: &[C64]) -> Result<Vec<C64>> {
        let zero = vec![ZERO; v.len()];
        let [a, _] = self.apply_spec(f, [v, &zero])?;
        Ok(a)
    }

    /// Plan for `M~(xi1, xi2) = conj(M^T(-xi1, xi1 + xi2))`.
    pub fn adjoint(&self) -> Self {
        let sym = self.symbol.clone();
        let adj: MatrixFn = Arc::new(move |a: Freq, b: Freq, s: Freq| {
            let neg = Freq { xi: -a.xi, jb: a.jb };
            sym(neg, s, b).adjoint()
        });
        let mut plan = Self::new(self.grid.clone(), adj);
        plan.dealias = self.dealias;
        plan
    }
}

pub type ScalarFn = Arc<dyn Fn(Freq, Freq, Freq) -> C64 + Send + Sync>;

/// Bilinear operator with a scalar symbol, cached like [`BilinearPlan`].
#[derive(Clone)]
pub struct ScalarPlan {
    grid: Arc<Grid>,
    symbol: ScalarFn,
    lattice: Option<Arc<Vec<C64>>>,
    pub dealias: bool,
}

impl std::fmt::Debug for ScalarPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarPlan")
            .field("grid", &self.grid.spec)
            .field("cached", &self.lattice.is_some())
            .finish()
    }
}

impl ScalarPlan {
    pub fn new(grid: Arc<Grid>, symbol: ScalarFn) -> Self {
        let lattice = (grid.n() <= DENSE_LIMIT).then(|| {
            let freqs = grid.centered();
            let n = grid.n();
            let table: Vec<C64> = (0..n * n)
                .into_par_iter()
                .map(|idx| {
                    let (a, b) = (freqs[idx / n], freqs[idx % n]);
                    symbol(a, b, Freq::new(a.xi + b.xi))
                })
                .collect();
            Arc::new(table)
        });
        ScalarPlan { grid, symbol, lattice, dealias: false }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn lattice_is_finite(&self) -> bool {
        self.lattice.as_ref().map_or(true, |t| t.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// `O[f, m]v` on spectra.
    pub fn apply_spec(&self, f: &[C64], v: &[C64]) -> Result<Vec<C64>> {
        let n = self.grid.n();
        if f.len() != n || v.len() != n {
            return Err(Error::Config("field grid does not match the plan grid".into()));
        }
        let band = if self.dealias { n / 3 } else { n / 2 };
        let freqs = self.grid.centered();
        let mut out = match &self.lattice {
            Some(t) => convolve_scalar_indexed(&self.grid, f, v, band, |cj, cm, _| t[cj * n + cm]),
            None => convolve_scalar_indexed(&self.grid, f, v, band, |cj, cm, ck| {
                (self.symbol)(freqs[cj], freqs[cm], freqs[ck])
            }),
        };
        if self.dealias {
            self.grid.dealias(&mut out);
        }
        Ok(out)
    }
}

/// `O[f1, f2, M]V` with spectrum
/// `(1/L^2) sum_{a,b} f1^(a) f2^(b) M(a, b, k-a-b) V^(k-a-b)`.
pub fn apply_trilinear<F>(grid: &Grid, f1: &[C64], f2: &[C64], v: &[C64], sym: F) -> Result<Vec<C64>>
where
    F: Fn(f64, f64, f64) -> C64 + Sync,
{
    let n = grid.n();
    if n > TRILINEAR_LIMIT {
        return Err(Error::CostGuard(format!(
            "trilinear evaluation is O(N^3); num_points {n} exceeds {TRILINEAR_LIMIT}"
        )));
    }
    let h = n as i64 / 2;
    let (a, b, c) = (to_centered(f1), to_centered(f2), to_centered(v));
    let xi = |c: i64| grid.spec.xi(c - h);
    let inv = 1.0 / (grid.length() * grid.length());
    let out: Vec<C64> = (0..n as i64)
        .into_par_iter()
        .map(|ck| {
            if ck == 0 {
                return ZERO;
            }
            let mut acc = ZERO;
            for ca in 0..n as i64 {
                if a[ca as usize] == ZERO {
                    continue;
                }
                for cb in 0..n as i64 {
                    let cs = ck + 2 * h - ca - cb;
                    if !(0..n as i64).contains(&cs) || b[cb as usize] == ZERO {
                        continue;
                    }
                    let m = sym(xi(ca), xi(cb), xi(cs));
                    acc += a[ca as usize] * b[cb as usize] * m * c[cs as usize];
                }
            }
            acc * inv
        })
        .collect();
    Ok(from_centered(&out))
}

/// Bony pieces `(T_f g, T_g f, R(f, g))` on spectra.
pub fn bony_decomposition(
    grid: &Grid,
    cutoff: CutoffParams,
    f: &[C64],
    g: &[C64],
) -> (Vec<C64>, Vec<C64>, Vec<C64>) {
    let theta = move |a: Freq, b: Freq, _: Freq| C64::new(cutoff.theta(a.xi, b.xi), 0.0);
    let t_fg = convolve_scalar(grid, f, g, theta);
    let t_gf = convolve_scalar(grid, g, f, theta);
    let rest = convolve_scalar(grid, f, g, move |a, b, _| {
        C64::new(1.0 - cutoff.theta(a.xi, b.xi) - cutoff.theta(b.xi, a.xi), 0.0)
    });
    (t_fg, t_gf, rest)
}

/// `(1/L) sum_k conj(b_k) a_k`, the L2 pairing of two fields given by their
/// spectra, conjugate-linear in the second slot.
pub fn pairing(grid: &Grid, a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<C64>() / grid.length()
}

/// Normalized `|Re <<D>^N O[f, M]U, <D>^N U>| / (|f|_{L2} |U|^2_{H^N})`.
///
/// The weights are rescaled by the largest active bracket so that
/// `<xi>^{2N}` never overflows.
pub fn energy_orthogonality_check(
    grid: &Grid,
    f: &[f64],
    u: [&[f64]; 2],
    sobolev_n: u32,
    symbol: impl Fn(Freq, Freq, Freq) -> Mat2 + Sync,
) -> Result<f64> {
    let fh = grid.forward_real(f)?;
    let u0 = grid.forward_real(u[0])?;
    let u1 = grid.forward_real(u[1])?;
    let [o0, o1] = convolve_matrix(grid, &fh, [&u0, &u1], symbol);
    let jb = grid.jb();
    let top = u0
        .iter()
        .zip(&u1)
        .zip(jb)
        .filter(|((a, b), _)| **a != ZERO || **b != ZERO)
        .map(|(_, &j)| j)
        .fold(1.0, f64::max);
    let two_n = 2.0 * sobolev_n as f64;
    let w: Vec<f64> = jb.iter().map(|&j| (two_n * (j.ln() - top.ln())).exp()).collect();
    let mut inner = 0.0;
    let mut norm = 0.0;
    for k in 0..grid.n() {
        inner += w[k] * (o0[k] * u0[k].conj() + o1[k] * u1[k].conj()).re;
        norm += w[k] * (u0[k].norm_sqr() + u1[k].norm_sqr());
    }
    let l = grid.length();
    let f_l2 = (f.iter().map(|x| x * x).sum::<f64>() * grid.dx()).sqrt();
    let denom = f_l2 * norm / l;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((inner / l).abs() / denom)
}
