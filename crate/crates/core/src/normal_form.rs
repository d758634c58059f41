//! Energy normal form `Phi`, Shatah's transformation `g`, the cubic term
//! `N(h)`, the quartic remainder, and residual evaluators.
//!
//! All operators act on the dealiased band `|k| <= N/3`: inputs are
//! projected onto it and every bilinear output is truncated to it. With that
//! convention the pseudospectral solver and the bilinear sums describe the
//! same finite-dimensional system, so the transformed equation holds up to
//! time discretization only.

use std::sync::{Arc, OnceLock};

use crate::bilinear::{BilinearPlan, ScalarPlan};
use crate::dynamics::quadratic_h_spec;
use crate::error::Result;
use crate::spectral::{Freq, Grid, C64};
use crate::symbols::{shatah_b, shatah_q, Mat2, MatrixKind, Pair, SymbolSet};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Plans for every symbol used by the two normal forms, built on first use.
pub struct NormalFormContext {
    grid: Arc<Grid>,
    set: SymbolSet,
    zero_shatah: bool,
    matrices: [OnceLock<BilinearPlan>; 10],
    b: [OnceLock<ScalarPlan>; 3],
    q: [OnceLock<ScalarPlan>; 3],
}

impl std::fmt::Debug for NormalFormContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NormalFormContext")
            .field("grid", &self.grid.spec)
            .field("sobolev_n", &self.set.sobolev_n)
            .field("zero_shatah", &self.zero_shatah)
            .finish()
    }
}

fn pair_index(p: Pair) -> usize {
    match p {
        Pair::PP => 0,
        Pair::PM => 1,
        Pair::MM => 2,
    }
}

fn kind_index(k: MatrixKind) -> usize {
    MatrixKind::ALL.iter().position(|&m| m == k).unwrap()
}

impl NormalFormContext {
    pub fn new(grid: Arc<Grid>, sobolev_n: u32) -> Self {
        NormalFormContext {
            grid,
            set: SymbolSet::new(sobolev_n),
            zero_shatah: false,
            matrices: Default::default(),
            b: Default::default(),
            q: Default::default(),
        }
    }

    /// Control variant with all `b` symbols set to zero, so that `g = h`
    /// and `N(h) = 0`.
    pub fn with_zero_shatah(grid: Arc<Grid>, sobolev_n: u32) -> Self {
        NormalFormContext { zero_shatah: true, ..Self::new(grid, sobolev_n) }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn symbols(&self) -> &SymbolSet {
        &self.set
    }

    pub fn matrix_plan(&self, kind: MatrixKind) -> &BilinearPlan {
        self.matrices[kind_index(kind)].get_or_init(|| {
            let set = self.set;
            let mut p = BilinearPlan::new(
                self.grid.clone(),
                Arc::new(move |a: Freq, b: Freq, s: Freq| set.matrix(kind, a, b, s)),
            );
            p.dealias = true;
            p
        })
    }

    pub fn b_plan(&self, pair: Pair) -> &ScalarPlan {
        self.b[pair_index(pair)].get_or_init(|| {
            let zero = self.zero_shatah;
            let mut p = ScalarPlan::new(
                self.grid.clone(),
                Arc::new(move |a, b, s| if zero { ZERO } else { shatah_b(pair, a, b, s) }),
            );
            p.dealias = true;
            p
        })
    }

    pub fn q_plan(&self, pair: Pair) -> &ScalarPlan {
        self.q[pair_index(pair)].get_or_init(|| {
            let mut p = ScalarPlan::new(
                self.grid.clone(),
                Arc::new(move |a, b, s| C64::new(shatah_q(pair, a, b, s), 0.0)),
            );
            p.dealias = true;
            p
        })
    }

    fn project(&self, s: &[C64]) -> Vec<C64> {
        let mut out = s.to_vec();
        self.grid.dealias(&mut out);
        out
    }

    /// `sum over pairs of O[h^i1, q^{i1 i2}] h^i2` by direct summation.
    pub fn quadratic_bilinear(&self, hh: &[C64]) -> Result<Vec<C64>> {
        let h = self.project(hh);
        let hc = self.grid.conj_spectrum(&h);
        let mut out = self.q_plan(Pair::PP).apply_spec(&h, &h)?;
        add_to(&mut out, &self.q_plan(Pair::PM).apply_spec(&h, &hc)?);
        add_to(&mut out, &self.q_plan(Pair::MM).apply_spec(&hc, &hc)?);
        Ok(out)
    }

    /// The same quadratic term by dealiased pseudospectral products.
    pub fn quadratic(&self, hh: &[C64]) -> Result<Vec<C64>> {
        quadratic_h_spec(&self.grid, &self.project(hh))
    }

    /// `g^ = h^ + sum over pairs of O[h^i1, b^{i1 i2}] h^i2`.
    pub fn shatah_g_spec(&self, hh: &[C64]) -> Result<Vec<C64>> {
        let h = self.project(hh);
        if self.zero_shatah {
            return Ok(h);
        }
        let hc = self.grid.conj_spectrum(&h);
        let mut out = h.clone();
        add_to(&mut out, &self.b_plan(Pair::PP).apply_spec(&h, &h)?);
        add_to(&mut out, &self.b_plan(Pair::PM).apply_spec(&h, &hc)?);
        add_to(&mut out, &self.b_plan(Pair::MM).apply_spec(&hc, &hc)?);
        Ok(out)
    }

    /// Physical-space `g` from physical-space `h`.
    pub fn shatah_g(&self, h: &[C64]) -> Result<Vec<C64>> {
        let g = self.shatah_g_spec(&self.grid.forward(h)?)?;
        self.grid.inverse(&g)
    }

    /// Cubic term `N(h)` as a spectrum: the six nested bilinear sums with
    /// the quadratic term `Q(h)` in each slot.
    pub fn cubic_n_spec(&self, hh: &[C64]) -> Result<Vec<C64>> {
        let h = self.project(hh);
        if self.zero_shatah {
            return Ok(vec![ZERO; h.len()]);
        }
        let q = self.quadratic(&h)?;
        self.cubic_with(&h, &q)
    }

    /// `N` with an explicitly supplied quadratic term.
    pub fn cubic_with(&self, h: &[C64], q: &[C64]) -> Result<Vec<C64>> {
        let g = &self.grid;
        let hc = g.conj_spectrum(h);
        let qc = g.conj_spectrum(q);
        let (pp, pm, mm) = (self.b_plan(Pair::PP), self.b_plan(Pair::PM), self.b_plan(Pair::MM));
        let mut out = pp.apply_spec(q, h)?;
        add_to(&mut out, &pp.apply_spec(h, q)?);
        add_to(&mut out, &pm.apply_spec(q, &hc)?);
        add_to(&mut out, &pm.apply_spec(h, &qc)?);
        add_to(&mut out, &mm.apply_spec(&qc, &hc)?);
        add_to(&mut out, &mm.apply_spec(&hc, &qc)?);
        Ok(out)
    }

    /// `N_R = N(h) - N(g)`.
    pub fn quartic_remainder_spec(&self, hh: &[C64]) -> Result<Vec<C64>> {
        let n_h = self.cubic_n_spec(hh)?;
        let g = self.shatah_g_spec(hh)?;
        let n_g = self.cubic_n_spec(&g)?;
        Ok(n_h.iter().zip(&n_g).map(|(a, b)| a - b).collect())
    }

    /// `||(g(t+d) - g(t-d))/(2d) + i<D>g(t) - N(h(t))||_{L2}` from the
    /// spectra of `h` at `t - d`, `t`, `t + d`.
    pub fn residual_g(&self, prev: &[C64], now: &[C64], next: &[C64], d: f64) -> Result<f64> {
        let gp = self.shatah_g_spec(prev)?;
        let g0 = self.shatah_g_spec(now)?;
        let gn = self.shatah_g_spec(next)?;
        let n = self.cubic_n_spec(now)?;
        let jb = self.grid.jb();
        let res: Vec<C64> = (0..gp.len())
            .map(|k| (gn[k] - gp[k]) / (2.0 * d) + I * jb[k] * g0[k] - n[k])
            .collect();
        Ok(self.grid.sobolev_spec(&res, 0.0))
    }

    /// Energy normal form `Phi = U + O[u, A1]U + O[r, A2]U + O[u, C1]U +
    /// O[r, C2]U` on real fields `(r, u)`.
    pub fn phi_transform(&self, r: &[f64], u: &[f64]) -> Result<[Vec<f64>; 2]> {
        let g = &self.grid;
        let rh = self.project(&g.forward_real(r)?);
        let uh = self.project(&g.forward_real(u)?);
        let v = [rh.as_slice(), uh.as_slice()];
        let mut out = [rh.clone(), uh.clone()];
        for (f, kind) in [
            (&uh, MatrixKind::A1),
            (&rh, MatrixKind::A2),
            (&uh, MatrixKind::C1),
            (&rh, MatrixKind::C2),
        ] {
            let [a, b] = self.matrix_plan(kind).apply_spec(f, v)?;
            add_to(&mut out[0], &a);
            add_to(&mut out[1], &b);
        }
        Ok([g.inverse_real(&out[0])?, g.inverse_real(&out[1])?])
    }

    /// Relative residuals of the two lines of the operator identity
    /// `D O[r,X2]U - O[<D>r,X1]U - O[r,X2]DU = -O[r,Y1]U` and
    /// `D O[u,X1]U + O[<D>u,X2]U - O[u,X1]DU = -O[u,Y2]U`, with
    /// `(X, Y) = (A, B)` or `(C, S)`.
    pub fn identity_residuals(&self, r: &[f64], u: &[f64], c_kind: bool) -> Result<[f64; 2]> {
        let g = &self.grid;
        let (x1, x2, y1, y2) = if c_kind {
            (MatrixKind::C1, MatrixKind::C2, MatrixKind::S1, MatrixKind::S2)
        } else {
            (MatrixKind::A1, MatrixKind::A2, MatrixKind::B1, MatrixKind::B2)
        };
        let rh = g.forward_real(r)?;
        let uh = g.forward_real(u)?;
        let jb = g.jb();
        let bracket = |f: &[C64]| -> Vec<C64> { f.iter().zip(jb).map(|(z, j)| z * j).collect() };
        let du = d_apply(jb, [&rh, &uh]);
        let v = [rh.as_slice(), uh.as_slice()];
        let dv = [du[0].as_slice(), du[1].as_slice()];
        let apply = |k: MatrixKind, f: &[C64], w: [&[C64]; 2]| -> Result<[Vec<C64>; 2]> {
            let mut p = self.matrix_plan(k).clone();
            p.dealias = false;
            p.apply_spec(f, w)
        };
        let line = |f: &[C64], first: MatrixKind, second: MatrixKind, sign: f64, y: MatrixKind| {
            // D O[f,first]U + sign O[<D>f,second]U - O[f,first]DU + O[f,y]U
            let a = apply(first, f, v)?;
            let da = d_apply(jb, [&a[0], &a[1]]);
            let b = apply(second, &bracket(f), v)?;
            let c = apply(first, f, dv)?;
            let rhs = apply(y, f, v)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for comp in 0..2 {
                for k in 0..g.n() {
                    let z = da[comp][k] + b[comp][k] * sign - c[comp][k] + rhs[comp][k];
                    num += z.norm_sqr();
                    den += rhs[comp][k].norm_sqr();
                }
            }
            Ok::<f64, crate::Error>(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
        };
        Ok([line(&rh, x2, x1, -1.0, y1)?, line(&uh, x1, x2, 1.0, y2)?])
    }
}

/// The linear operator `D = [[0, -<D>], [<D>, 0]]` on a 2-vector spectrum.
fn d_apply(jb: &[f64], v: [&[C64]; 2]) -> [Vec<C64>; 2] {
    [
        v[1].iter().zip(jb).map(|(z, j)| -z * j).collect(),
        v[0].iter().zip(jb).map(|(z, j)| z * j).collect(),
    ]
}

fn add_to(acc: &mut [C64], x: &[C64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Composed symbol of `O[O[f, m1]g, m2]v` as a trilinear symbol in the
/// frequencies of `(f, g, v)`.
pub fn nested_symbol(
    m1: impl Fn(f64, f64) -> C64,
    m2: impl Fn(f64, f64) -> C64,
) -> impl Fn(f64, f64, f64) -> C64 {
    move |a, b, c| m1(a, b) * m2(a + b, c)
}

/// Matrix symbol lookup helper for tests and oracles.
pub fn matrix_at(set: &SymbolSet, kind: MatrixKind, xi1: f64, xi2: f64) -> Mat2 {
    set.matrix_at(kind, xi1, xi2)
}
