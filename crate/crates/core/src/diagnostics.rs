//! Run-time monitors: the per-snapshot record and its CSV schema, the vector
//! fields `Gamma` and `Gamma~`, log-log rate fits and shock detection.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::StateRU;
use crate::error::{Error, Result};
use crate::spectral::{Grid, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// One diagnostics sample. Column order of the CSV follows field order.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub sup_h: f64,
    /// `||U||_{H^N_sob}`
    pub u_hn: f64,
    /// `||U||_{W^{N1_sob + 10, inf}}`
    pub u_wk_inf: f64,
    /// `||Gamma U||_{H^N1_sob}`
    pub gamma_u: f64,
    /// `||x U||_{H^N1_sob}`
    pub x_u: f64,
    /// `||x w||_{H^{N1_sob - 4}}`
    pub x_w: f64,
    pub neutrality: f64,
    pub tail_ratio: f64,
    pub max_dn: f64,
    /// `sup_xi <xi>^m |w^(xi)|`
    pub w_weighted_sup: f64,
    pub theta_carrier: f64,
    /// `t <= T_valid` and the support is away from the box edges.
    pub wrap_valid: bool,
    pub t_valid: f64,
}

impl DiagnosticsRecord {
    pub const HEADER: &'static str = "t,sup_h,u_hn,u_wk_inf,gamma_u,x_u,x_w,neutrality,tail_ratio,\
max_dn,w_weighted_sup,theta_carrier,wrap_valid,t_valid";

    fn values(&self) -> [f64; 12] {
        [
            self.t,
            self.sup_h,
            self.u_hn,
            self.u_wk_inf,
            self.gamma_u,
            self.x_u,
            self.x_w,
            self.neutrality,
            self.tail_ratio,
            self.max_dn,
            self.w_weighted_sup,
            self.theta_carrier,
        ]
    }

    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self.values().iter().map(|&v| fmt_f64(v)).collect();
        cols.push(u8::from(self.wrap_valid).to_string());
        cols.push(fmt_f64(self.t_valid));
        cols.join(",")
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 14 {
            return Err(Error::Analysis(format!("expected 14 columns, found {}", cols.len())));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i].parse().map_err(|_| Error::Analysis(format!("bad number '{}'", cols[i])))
        };
        Ok(DiagnosticsRecord {
            t: num(0)?,
            sup_h: num(1)?,
            u_hn: num(2)?,
            u_wk_inf: num(3)?,
            gamma_u: num(4)?,
            x_u: num(5)?,
            x_w: num(6)?,
            neutrality: num(7)?,
            tail_ratio: num(8)?,
            max_dn: num(9)?,
            w_weighted_sup: num(10)?,
            theta_carrier: num(11)?,
            wrap_valid: cols[12] == "1",
            t_valid: num(13)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// 17 significant digits, lossless for `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", DiagnosticsRecord::HEADER)?;
    for r in records {
        writeln!(f, "{}", r.csv_row())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != DiagnosticsRecord::HEADER {
        return Err(Error::Analysis(format!("unexpected header in {}", path.display())));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(DiagnosticsRecord::parse_row(&line)?);
        }
    }
    Ok(out)
}

/// `Gamma U = t d_x U + x d_t U`, with `d_t U` supplied by the caller.
pub fn gamma_field(grid: &Grid, u: &StateRU, ut: &StateRU, t: f64) -> Result<[Vec<f64>; 2]> {
    let x = grid.x();
    let one = |f: &[f64], ft: &[f64]| -> Result<Vec<f64>> {
        let fx = grid.apply_multiplier_real(f, |xi| C64::new(0.0, xi))?;
        Ok(fx.iter().zip(ft).zip(x).map(|((d, dt), x)| t * d + x * dt).collect())
    };
    Ok([one(&u.r, &ut.r)?, one(&u.u, &ut.u)?])
}

/// `Gamma~ g` through `Gamma g - x N(h) + (i d_x / <D>) g`, where the time
/// derivative inside `Gamma g` is `-i<D>g + N(h)`. All inputs are physical.
pub fn gamma_tilde_profile(grid: &Grid, g: &[C64], t: f64, n_h: &[C64]) -> Result<Vec<C64>> {
    let x = grid.x();
    let gx = grid.apply_multiplier(g, |xi| C64::new(0.0, xi))?;
    let jbg = grid.apply_multiplier(g, |xi| C64::new((1.0 + xi * xi).sqrt(), 0.0))?;
    let riesz = grid.apply_multiplier(g, |xi| I * I * xi / (1.0 + xi * xi).sqrt())?;
    Ok((0..g.len())
        .map(|j| {
            let gt = -I * jbg[j] + n_h[j];
            t * gx[j] + x[j] * gt - x[j] * n_h[j] + riesz[j]
        })
        .collect())
}

/// Fraction of spectral energy in the top third of the dealiased band
/// `2N/9 < |k| <= N/3`.
pub fn spectral_tail_ratio(grid: &Grid, s: &[C64]) -> f64 {
    let cut = (grid.n() / 3) as i64;
    let lo = 2 * cut / 3;
    let (mut top, mut all) = (0.0, 0.0);
    for (i, z) in s.iter().enumerate() {
        let k = grid.spec.k_of(i).abs();
        let e = z.norm_sqr();
        all += e;
        if k > lo && k <= cut {
            top += e;
        }
    }
    if all == 0.0 {
        0.0
    } else {
        top / all
    }
}

/// Log-log least squares fit `y ~ C t^slope` with a bootstrap band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half width of the central 95% bootstrap interval of the slope.
    pub band: f64,
    pub points: usize,
}

const BOOTSTRAP_SAMPLES: usize = 1000;
const BOOTSTRAP_SEED: u64 = 0x5eed;

fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fit over samples with `lo <= t <= hi`. Needs at least 8 points, all with
/// `t > 0` and `y > 0`.
pub fn rate_fit(t: &[f64], y: &[f64], lo: f64, hi: f64) -> Result<RateFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&t, &y)| (t, y))
        .unzip();
    if lx.len() < 8 {
        return Err(Error::Analysis(format!("rate fit needs 8 points in [{lo}, {hi}], found {}", lx.len())));
    }
    if lx.iter().zip(&ly).any(|(&t, &y)| !(t > 0.0 && y > 0.0 && y.is_finite())) {
        return Err(Error::Analysis("rate fit needs positive finite samples".into()));
    }
    let lx: Vec<f64> = lx.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ly.iter().map(|v| v.ln()).collect();
    let (slope, intercept) =
        ols(&lx, &ly).ok_or_else(|| Error::Analysis("rate fit window is degenerate".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let n = lx.len();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_SAMPLES);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..BOOTSTRAP_SAMPLES {
        for j in 0..n {
            let i = rng.gen_range(0..n);
            bx[j] = lx[i];
            by[j] = ly[i];
        }
        if let Some((s, _)) = ols(&bx, &by) {
            slopes.push(s);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let band = if slopes.len() < 2 {
        0.0
    } else {
        let q = |p: f64| slopes[((slopes.len() - 1) as f64 * p).round() as usize];
        0.5 * (q(0.975) - q(0.025))
    };
    Ok(RateFit { slope, intercept, band, points: n })
}

/// Outcome of shock monitoring.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShockStatus {
    Clean,
    Steepening(f64),
    ResolutionLoss(f64),
}

impl ShockStatus {
    pub fn name(&self) -> &'static str {
        match self {
            ShockStatus::Clean => "clean",
            ShockStatus::Steepening(_) => "steepening",
            ShockStatus::ResolutionLoss(_) => "resolution_loss",
        }
    }

    pub fn time(&self) -> Option<f64> {
        match *self {
            ShockStatus::Clean => None,
            ShockStatus::Steepening(t) | ShockStatus::ResolutionLoss(t) => Some(t),
        }
    }
}

pub const STEEPENING_FACTOR: f64 = 10.0;
pub const TAIL_THRESHOLD: f64 = 1e-4;

/// Incremental detector over `(t, max |d_x n|, tail ratio)` samples.
#[derive(Clone, Debug)]
pub struct ShockMonitor {
    initial: Option<f64>,
    recent: Vec<(f64, f64)>,
    crossed: Option<f64>,
    status: ShockStatus,
}

impl Default for ShockMonitor {
    fn default() -> Self {
        ShockMonitor { initial: None, recent: Vec::new(), crossed: None, status: ShockStatus::Clean }
    }
}

impl ShockMonitor {
    pub fn status(&self) -> ShockStatus {
        self.status
    }

    pub fn update(&mut self, t: f64, max_dn: f64, tail: f64) -> ShockStatus {
        if self.status != ShockStatus::Clean {
            return self.status;
        }
        let initial = *self.initial.get_or_insert(max_dn);
        self.recent.push((t, max_dn));
        if self.recent.len() > 3 {
            self.recent.remove(0);
        }
        if self.crossed.is_none() && initial > 0.0 && max_dn > STEEPENING_FACTOR * initial {
            self.crossed = Some(t);
        }
        if let (Some(tc), true) = (self.crossed, self.accelerating()) {
            self.status = ShockStatus::Steepening(tc);
        } else if tail > TAIL_THRESHOLD {
            self.status = ShockStatus::ResolutionLoss(t);
        }
        self.status
    }

    /// Positive second divided difference over the last three samples.
    fn accelerating(&self) -> bool {
        let [(t0, y0), (t1, y1), (t2, y2)] = match self.recent.as_slice() {
            [a, b, c] => [*a, *b, *c],
            _ => return false,
        };
        let s1 = (y1 - y0) / (t1 - t0);
        let s2 = (y2 - y1) / (t2 - t1);
        s2 > s1
    }
}

/// Batch form of [`ShockMonitor`].
pub fn shock_detect(history: &[(f64, f64, f64)]) -> ShockStatus {
    let mut m = ShockMonitor::default();
    for &(t, d, tail) in history {
        m.update(t, d, tail);
    }
    m.status()
}
