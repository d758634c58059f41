//! Closed-form frequency symbols: the paraproduct cutoff, the quadratic
//! matrices `Q`/`S`, the energy matrices `B`, the normal-form matrices
//! `A`/`C`, the Shatah symbols `q`/`b`, the cubic symbols and phases, and
//! the resonance coefficient `c*`.
//!
//! Hot-path entry points take [`Freq`] triples `(a, b, a+b)` so lattice
//! loops can reuse precomputed brackets.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{japanese, smoothstep, Freq, C64};

const I: C64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: C64 = Complex64 { re: 0.0, im: 0.0 };

#[inline]
fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffParams {
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for CutoffParams {
    fn default() -> Self {
        CutoffParams { eps1: 0.1, eps2: 0.4 }
    }
}

impl CutoffParams {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        if !(0.0 < 2.0 * eps1 && 2.0 * eps1 < eps2 && eps2 < 0.5) {
            return Err(Error::Config(format!(
                "cutoff requires 0 < 2 eps1 < eps2 < 1/2, got eps1={eps1}, eps2={eps2}"
            )));
        }
        Ok(CutoffParams { eps1, eps2 })
    }

    /// `theta(xi1, xi2) = chi(xi1^2 / (eps2^2 (1 + xi2^2)))`.
    #[inline]
    pub fn theta(&self, xi1: f64, xi2: f64) -> f64 {
        let rho = xi1 * xi1 / (self.eps2 * self.eps2 * xi2.mul_add(xi2, 1.0));
        let lo = (self.eps1 / self.eps2).powi(2);
        smoothstep((1.0 - rho) / (1.0 - lo))
    }
}

/// 2x2 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);

    #[inline]
    pub fn offdiag(upper: C64, lower: C64) -> Self {
        Mat2([[ZERO, upper], [lower, ZERO]])
    }

    #[inline]
    pub fn diag(a: C64, d: C64) -> Self {
        Mat2([[a, ZERO], [ZERO, d]])
    }

    pub fn identity() -> Self {
        Mat2::diag(c(1.0), c(1.0))
    }

    #[inline]
    pub fn scale(self, s: C64) -> Self {
        let m = self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    #[inline]
    pub fn add(self, o: Mat2) -> Self {
        let (a, b) = (self.0, o.0);
        Mat2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }

    #[inline]
    pub fn sub(self, o: Mat2) -> Self {
        self.add(o.scale(c(-1.0)))
    }

    #[inline]
    pub fn mul(self, o: Mat2) -> Self {
        let (a, b) = (self.0, o.0);
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    /// Conjugate transpose.
    #[inline]
    pub fn adjoint(self) -> Self {
        let m = self.0;
        Mat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    Q1,
    Q2,
    S1,
    S2,
    B1,
    B2,
    A1,
    A2,
    C1,
    C2,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 10] = [
        MatrixKind::Q1,
        MatrixKind::Q2,
        MatrixKind::S1,
        MatrixKind::S2,
        MatrixKind::B1,
        MatrixKind::B2,
        MatrixKind::A1,
        MatrixKind::A2,
        MatrixKind::C1,
        MatrixKind::C2,
    ];

    /// Anti-diagonal kinds; the rest are diagonal.
    pub fn is_antidiagonal(self) -> bool {
        matches!(self, MatrixKind::Q1 | MatrixKind::S1 | MatrixKind::B1 | MatrixKind::A1 | MatrixKind::C1)
    }
}

/// The matrix family `Q`, `S`, `B`, `A`, `C` with fixed cutoff and Sobolev
/// exponent `N` (used by `B`, `A`, `C`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolSet {
    pub cutoff: CutoffParams,
    pub sobolev_n: u32,
}

impl SymbolSet {
    pub fn new(sobolev_n: u32) -> Self {
        SymbolSet { cutoff: CutoffParams::default(), sobolev_n }
    }

    /// Weight `<a+b>^{2N} / (<a+b>^{2N} + <b>^{2N})` as a logistic of the
    /// log-ratio, so large `N` never overflows.
    #[inline]
    pub fn lambda(&self, b: Freq, s: Freq) -> f64 {
        let z = 2.0 * self.sobolev_n as f64 * (s.jb.ln() - b.jb.ln());
        logistic(z)
    }

    #[inline]
    fn bony_rest(&self, a: Freq, b: Freq) -> f64 {
        1.0 - self.cutoff.theta(a.xi, b.xi) - self.cutoff.theta(b.xi, a.xi)
    }

    /// Unweighted entries `(x1, x4)` of `Q1`/`S1` with unit prefactor `i`.
    #[inline]
    fn raw1(a: Freq, b: Freq, s: Freq) -> (C64, C64) {
        (c(a.xi * b.jb) * I, c(-s.xi * a.xi * b.xi / s.jb) * I)
    }

    /// Unweighted entries `(x2, x3)` of `Q2`/`S2` with unit prefactor `i`.
    #[inline]
    fn raw2(a: Freq, b: Freq, s: Freq) -> (C64, C64) {
        (c(b.xi * a.jb) * I, c(s.xi * a.jb * b.jb / s.jb) * I)
    }

    #[inline]
    pub fn q1(&self, a: Freq, b: Freq, s: Freq) -> Mat2 {
        let (x1, x4) = Self::raw1(a, b, s);
        Mat2::offdiag(x1, x4).scale(c(2.0 * self.cutoff.theta(a.xi, b.xi)))
    }

    #[inline]
    pub fn q2(&self, a: Freq, b: Freq, s: Freq) -> Mat2 {
        let (x2, x3) = Self::raw2(a, b, s);
        Mat2::diag(x2, x3).scale(c(2.0 * self.cutoff.theta(a.xi, b.xi)))
    }

    #[inline]
    pub fn s1(&self, a: Freq, b: Freq, s: Freq) -> Mat2 {
        let (x1, x4) = Self::raw1(a, b, s);
        Mat2::offdiag(x1, x4).scale(c(self.bony_rest(a, b)))
    }

    #[inline]
    pub fn s2(&self, a: Freq, b: Freq, s: Freq) -> Mat2 {
        let (x2, x3) = Self::raw2(a, b, s);
        Mat2::diag(x2, x3).scale(c(self.bony_rest(a, b)))
    }

    /// `B = lambda Q(a,b) + (1-lambda) conj(Q^T(-a, a+b))`.
    #[inline]
    fn b_from(&self, q: impl Fn(Freq, Freq, Freq) -> Mat2, a: Freq, b: Freq, s: Freq) -> Mat2 {
        let lam = self.lambda(b, s);
        let neg = Freq { xi: -a.xi, jb: a.jb };
        let direct = q(a, b, s);
        let reflected = q(neg, s, b).adjoint();
        direct.scale(c(lam)).add(reflected.scale(c(1.0 - lam)))
    }

    #[inline]
    pub fn b1(&self, a: Freq, b: Freq, s: Freq) -> Mat2 {
        self.b_from(|x, y, z| self.q1(x, y, z), a, b, s)
    }

    #[inline]
    pub fn b2(&self, a: Freq, b: Freq, s: Freq) -> Mat2 {
        self.b_from(|x, y, z| self.q2(x, y, z), a, b, s)
    }

    /// `(a1, a2, a3, a4)` for kind A (right-hand side from `B`) or kind C
    /// (right-hand side from `S`).
    pub fn normal_form_coeffs(&self, kind: NormalFormKind, a: Freq, b: Freq, s: Freq) -> [C64; 4] {
        let rhs = self.rhs_entries(kind, a, b, s);
        solve_closed_form(a, b, s, rhs)
    }

    /// Entries `(x1, x2, x3, x4)` of the pair (`B1`,`B2`) or (`S1`,`S2`).
    pub fn rhs_entries(&self, kind: NormalFormKind, a: Freq, b: Freq, s: Freq) -> [C64; 4] {
        let (m1, m2) = match kind {
            NormalFormKind::A => (self.b1(a, b, s), self.b2(a, b, s)),
            NormalFormKind::C => (self.s1(a, b, s), self.s2(a, b, s)),
        };
        [m1.0[0][1], m2.0[0][0], m2.0[1][1], m1.0[1][0]]
    }

    #[inline]
    pub fn matrix(&self, kind: MatrixKind, a: Freq, b: Freq, s: Freq) -> Mat2 {
        match kind {
            MatrixKind::Q1 => self.q1(a, b, s),
            MatrixKind::Q2 => self.q2(a, b, s),
            MatrixKind::S1 => self.s1(a, b, s),
            MatrixKind::S2 => self.s2(a, b, s),
            MatrixKind::B1 => self.b1(a, b, s),
            MatrixKind::B2 => self.b2(a, b, s),
            MatrixKind::A1 | MatrixKind::A2 => {
                let x = self.normal_form_coeffs(NormalFormKind::A, a, b, s);
                if kind == MatrixKind::A1 {
                    Mat2::offdiag(x[0], x[3])
                } else {
                    Mat2::diag(x[1], x[2])
                }
            }
            MatrixKind::C1 | MatrixKind::C2 => {
                let x = self.normal_form_coeffs(NormalFormKind::C, a, b, s);
                if kind == MatrixKind::C1 {
                    Mat2::offdiag(x[0], x[3])
                } else {
                    Mat2::diag(x[1], x[2])
                }
            }
        }
    }

    /// Convenience evaluation from plain frequencies.
    pub fn matrix_at(&self, kind: MatrixKind, xi1: f64, xi2: f64) -> Mat2 {
        self.matrix(kind, Freq::new(xi1), Freq::new(xi2), Freq::new(xi1 + xi2))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormalFormKind {
    A,
    C,
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `G = 2 xi1^2 + 2 xi2^2 + 2 (xi1+xi2)^2 + 3`.
#[inline]
pub fn g_denominator(xi1: f64, xi2: f64) -> f64 {
    2.0 * xi1 * xi1 + 2.0 * xi2 * xi2 + 2.0 * (xi1 + xi2).powi(2) + 3.0
}

/// The 4x4 system coupling `(a1, a2, a3, a4)`; rows ordered as the
/// `(1,2)`, `(2,1)`, `(1,1)`, `(2,2)` entries of the operator identity.
pub fn linear_system(a: Freq, b: Freq, s: Freq) -> [[f64; 4]; 4] {
    let (p, q, r) = (a.jb, b.jb, s.jb);
    [
        [-p, q, -r, 0.0],
        [0.0, r, -q, -p],
        [-q, p, 0.0, -r],
        [r, 0.0, p, q],
    ]
}

/// Right-hand side of [`linear_system`] for entries `x = (x1, x2, x3, x4)`:
/// `(-x1, -x4, -x2, -x3)`.
pub fn linear_rhs(x: [C64; 4]) -> [C64; 4] {
    [-x[0], -x[3], -x[1], -x[2]]
}

/// Closed-form solution of [`linear_system`] with right-hand side
/// [`linear_rhs`]`(x)`.
#[inline]
pub fn solve_closed_form(a: Freq, b: Freq, s: Freq, x: [C64; 4]) -> [C64; 4] {
    let (p, q, r) = (a.jb, b.jb, s.jb);
    let [b1, b2, b3, b4] = x;
    let g = g_denominator(a.xi, b.xi);
    let plus = -p * p + q * q + r * r;
    let t = 2.0 * q * r;
    let u1 = b1 * p - b2 * q + b3 * r;
    let u2 = b4 * p + b3 * q - b2 * r;
    let u3 = b2 * p - b1 * q - b4 * r;
    let u4 = b3 * p + b4 * q + b1 * r;
    [
        (u1 * plus - u2 * t) / g,
        (-u3 * plus - u4 * t) / g,
        (-u4 * plus - u3 * t) / g,
        (u2 * plus - u1 * t) / g,
    ]
}

/// Sign pairs `(iota1, iota2)` of the Shatah symbols.
/// Max residual of the closed-form coefficients in [`linear_system`],
/// relative to `max(|rhs|, 1)`.
pub fn back_substitution_residual(set: &SymbolSet, kind: NormalFormKind, x1: f64, x2: f64) -> f64 {
    let (a, b, s) = (Freq::new(x1), Freq::new(x2), Freq::new(x1 + x2));
    let sol = set.normal_form_coeffs(kind, a, b, s);
    let rhs = linear_rhs(set.rhs_entries(kind, a, b, s));
    let m = linear_system(a, b, s);
    let scale = rhs.iter().map(|z| z.norm()).fold(1.0, f64::max);
    (0..4)
        .map(|i| {
            let lhs: C64 = (0..4).map(|j| sol[j] * m[i][j]).sum();
            (lhs - rhs[i]).norm()
        })
        .fold(0.0, f64::max)
        / scale
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pair {
    PP,
    PM,
    MM,
}

impl Pair {
    pub const ALL: [Pair; 3] = [Pair::PP, Pair::PM, Pair::MM];

    pub fn signs(self) -> (f64, f64) {
        match self {
            Pair::PP => (1.0, 1.0),
            Pair::PM => (1.0, -1.0),
            Pair::MM => (-1.0, -1.0),
        }
    }
}

/// Quadratic Shatah symbol `q^{pair}(xi, eta)` (real valued).
#[inline]
pub fn shatah_q(pair: Pair, a: Freq, b: Freq, s: Freq) -> f64 {
    let prod = a.jb * b.jb;
    let mixed = a.xi * b.xi;
    match pair {
        Pair::PP => 0.5 * a.xi * b.jb + s.xi * (prod + mixed) / (4.0 * s.jb),
        Pair::PM => {
            -0.5 * a.xi * b.jb + 0.5 * a.jb * b.xi + s.xi * (mixed - prod) / (2.0 * s.jb)
        }
        Pair::MM => -0.5 * a.xi * b.jb + s.xi * (prod + mixed) / (4.0 * s.jb),
    }
}

/// Phase denominator `<xi+eta> - iota1 <xi> - iota2 <eta>`.
#[inline]
pub fn shatah_denominator(pair: Pair, a: Freq, b: Freq, s: Freq) -> f64 {
    let (i1, i2) = pair.signs();
    s.jb - i1 * a.jb - i2 * b.jb
}

/// `b^{pair} = i q^{pair} / denominator`.
#[inline]
pub fn shatah_b(pair: Pair, a: Freq, b: Freq, s: Freq) -> C64 {
    C64::new(0.0, shatah_q(pair, a, b, s) / shatah_denominator(pair, a, b, s))
}

pub fn q_at(pair: Pair, xi: f64, eta: f64) -> f64 {
    shatah_q(pair, Freq::new(xi), Freq::new(eta), Freq::new(xi + eta))
}

pub fn b_at(pair: Pair, xi: f64, eta: f64) -> C64 {
    shatah_b(pair, Freq::new(xi), Freq::new(eta), Freq::new(xi + eta))
}

/// Cubic sign patterns `iota1 iota2 iota3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Triple {
    PPM,
    PMM,
    PPP,
    MMM,
}

impl Triple {
    pub const ALL: [Triple; 4] = [Triple::PPM, Triple::PMM, Triple::PPP, Triple::MMM];

    pub fn signs(self) -> [f64; 3] {
        match self {
            Triple::PPM => [1.0, 1.0, -1.0],
            Triple::PMM => [1.0, -1.0, -1.0],
            Triple::PPP => [1.0, 1.0, 1.0],
            Triple::MMM => [-1.0, -1.0, -1.0],
        }
    }
}

/// `Psi = <xi> - i1 <xi-eta> - i2 <eta-sigma> - i3 <sigma>`.
pub fn phase(triple: Triple, xi: f64, eta: f64, sigma: f64) -> f64 {
    let [i1, i2, i3] = triple.signs();
    japanese(xi) - i1 * japanese(xi - eta) - i2 * japanese(eta - sigma) - i3 * japanese(sigma)
}

/// Cubic symbol `c^{triple}(xi, eta, sigma)`.
pub fn cubic_symbol(triple: Triple, xi: f64, eta: f64, sigma: f64) -> C64 {
    use Pair::*;
    let b = b_at;
    let q = |p, x, y| c(q_at(p, x, y));
    let sum = match triple {
        Triple::PPM => {
            b(PP, eta, xi - eta) * q(PM, eta - sigma, sigma)
                + b(PP, xi - eta, eta) * q(PM, eta - sigma, sigma)
                + b(PM, xi - sigma, sigma) * q(PP, xi - eta, eta - sigma)
                + b(PM, xi - eta, eta) * q(PM, -sigma, sigma - eta)
                + b(MM, xi - sigma, sigma) * q(MM, eta - xi, sigma - eta)
                + b(MM, sigma, xi - sigma) * q(MM, eta - xi, sigma - eta)
        }
        Triple::PMM => {
            b(PP, eta, xi - eta) * q(MM, eta - sigma, sigma)
                + b(PP, xi - eta, eta) * q(MM, eta - sigma, sigma)
                + b(PM, xi - sigma, sigma) * q(PM, xi - eta, eta - sigma)
                + b(PM, xi - eta, eta) * q(PP, sigma - eta, -sigma)
                + b(MM, xi - sigma, sigma) * q(PM, sigma - eta, eta - xi)
                + b(MM, sigma, xi - sigma) * q(PM, sigma - eta, eta - xi)
        }
        Triple::PPP => {
            b(PP, eta, xi - eta) * q(PP, eta - sigma, sigma)
                + b(PP, xi - eta, eta) * q(PP, eta - sigma, sigma)
                + b(PM, xi - eta, eta) * q(MM, sigma - eta, -sigma)
        }
        Triple::MMM => {
            b(PM, xi - sigma, sigma) * q(MM, xi - eta, eta - sigma)
                + b(MM, xi - sigma, sigma) * q(PP, eta - xi, sigma - eta)
                + b(MM, sigma, xi - sigma) * q(PP, eta - xi, sigma - eta)
        }
    };
    // the displayed sums equal i c
    sum * (-I)
}

/// Resonance coefficient `c*(xi) = c^{++-}(xi, 0, -xi)` in closed form.
pub fn c_star(xi: f64) -> f64 {
    let a = japanese(xi);
    let d = japanese(2.0 * xi);
    let x2 = xi * xi;
    let first = (2.0 * a + d) * (a * d + x2 + a * a).powi(2) / (6.0 * a * d);
    let second = (a * d - a * a - x2).powi(2) / (2.0 * (2.0 * a + d) * a * d);
    x2 * (2.0 * a - first + second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f3(x: f64, y: f64) -> (Freq, Freq, Freq) {
        (Freq::new(x), Freq::new(y), Freq::new(x + y))
    }

    fn rel(a: C64, b: C64) -> f64 {
        (a - b).norm() / b.norm().max(1.0)
    }

    #[test]
    fn theta_examples() {
        let t = CutoffParams::default();
        assert_eq!(t.theta(0.0, 5.0), 1.0);
        assert_eq!(t.theta(5.0, 5.0), 0.0);
        assert_eq!(t.theta(-3.0, 10.0), t.theta(3.0, 10.0));
        assert_eq!(t.theta(3.0, -10.0), t.theta(-3.0, 10.0));
    }

    #[test]
    fn theta_plateaus_for_large_xi2() {
        let t = CutoffParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let xi2: f64 = rng.gen_range(2.0..1e4) * if rng.gen() { 1.0 } else { -1.0 };
            let low = rng.gen_range(0.0..0.1) * xi2.abs();
            assert_eq!(t.theta(low, xi2), 1.0, "xi1={low} xi2={xi2}");
            let high = rng.gen_range(0.4..3.0) * xi2.abs();
            assert_eq!(t.theta(high, xi2), 0.0);
        }
    }

    #[test]
    fn cutoff_parameter_guard() {
        assert!(CutoffParams::new(0.1, 0.4).is_ok());
        assert!(CutoffParams::new(0.25, 0.4).is_err());
        assert!(CutoffParams::new(0.1, 0.6).is_err());
    }

    #[test]
    fn q_matrices_vanish_at_zero_low_frequency() {
        let set = SymbolSet::new(6);
        for &x2 in &[-7.0, -0.3, 0.0, 2.5, 40.0] {
            assert_eq!(set.matrix_at(MatrixKind::Q1, 0.0, x2).max_abs(), 0.0);
            assert_eq!(set.matrix_at(MatrixKind::B1, 0.0, x2).max_abs(), 0.0);
        }
        let q1 = set.matrix_at(MatrixKind::Q1, 0.5, 20.0);
        assert!(rel(q1.0[0][1], C64::new(0.0, 2.0 * 0.5 * japanese(20.0))) < 1e-15);
    }

    #[test]
    fn matrix_shapes() {
        let set = SymbolSet::new(6);
        for kind in MatrixKind::ALL {
            let m = set.matrix_at(kind, 0.7, -2.3).0;
            if kind.is_antidiagonal() {
                assert_eq!((m[0][0], m[1][1]), (ZERO, ZERO), "{kind:?}");
            } else {
                assert_eq!((m[0][1], m[1][0]), (ZERO, ZERO), "{kind:?}");
            }
        }
    }

    #[test]
    fn q_plus_s_recombines_to_full_symbol() {
        // q1 + s1 = raw * (2 theta + 1 - theta - theta~)
        let set = SymbolSet::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (x1, x2) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let (a, b, s) = f3(x1, x2);
            let th = set.cutoff.theta(x1, x2);
            let tt = set.cutoff.theta(x2, x1);
            let q1 = set.q1(a, b, s).0[0][1];
            let s1 = set.s1(a, b, s).0[0][1];
            let raw = C64::new(0.0, x1 * b.jb);
            assert!(rel(q1 + s1, raw * (1.0 + th - tt)) < 1e-13);
        }
    }

    #[test]
    fn b_weight_is_bounded_and_monotone() {
        for n in [1u32, 6, 300] {
            let set = SymbolSet::new(n);
            let mut last = -1.0;
            for i in 0..200 {
                let s = Freq::new(i as f64 * 0.5);
                let lam = set.lambda(Freq::new(3.0), s);
                assert!(lam.is_finite() && (0.0..=1.0).contains(&lam));
                assert!(lam >= last);
                last = lam;
            }
            let lam = set.lambda(Freq::new(1e6), Freq::new(-1e6 + 1.0));
            assert!(lam.is_finite());
        }
    }

    #[test]
    fn b_self_adjointness() {
        for n in [6u32, 300] {
            let set = SymbolSet::new(n);
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            for _ in 0..10_000 {
                let (x1, x2) = (rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0));
                for (kind, q) in [(MatrixKind::B1, MatrixKind::Q1), (MatrixKind::B2, MatrixKind::Q2)] {
                    let lhs = set.matrix_at(kind, x1, x2);
                    let rhs = set.matrix_at(kind, -x1, x1 + x2).adjoint();
                    // 1 - lambda loses all digits once lambda rounds to 1, so
                    // measure against the unweighted blend components.
                    let scale = set
                        .matrix_at(q, x1, x2)
                        .max_abs()
                        .max(set.matrix_at(q, -x1, x1 + x2).max_abs())
                        .max(1e-300);
                    assert!(lhs.sub(rhs).max_abs() <= 1e-12 * scale, "{kind:?} {x1} {x2}");
                }
            }
        }
    }

    #[test]
    fn b_entries_bounded_by_low_frequency_squared() {
        let set = SymbolSet::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let x2: f64 = rng.gen_range(-1e3..1e3);
            let x1 = rng.gen_range(-0.05..0.05) * x2.abs();
            for kind in [MatrixKind::B1, MatrixKind::B2] {
                let m = set.matrix_at(kind, x1, x2).max_abs();
                worst = worst.max(m / japanese(x1).powi(2));
            }
        }
        assert!(worst.is_finite() && worst < 50.0, "fitted constant {worst}");
    }

    #[test]
    fn g_denominator_value() {
        assert_eq!(g_denominator(1.0, 1.0), 15.0);
    }

    #[test]
    fn closed_form_solves_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1u32, 6, 300] {
            let set = SymbolSet::new(n);
            for _ in 0..10_000 {
                let (x1, x2) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
                for kind in [NormalFormKind::A, NormalFormKind::C] {
                    assert!(back_substitution_residual(&set, kind, x1, x2) <= 1e-10);
                }
            }
        }
    }

    /// Gaussian elimination with partial pivoting on the complex 4x4 system.
    fn numeric_solve(m: [[f64; 4]; 4], rhs: [C64; 4]) -> [C64; 4] {
        let mut a: Vec<Vec<C64>> = (0..4)
            .map(|i| {
                let mut row: Vec<C64> = m[i].iter().map(|&v| c(v)).collect();
                row.push(rhs[i]);
                row
            })
            .collect();
        for col in 0..4 {
            let piv = (col..4).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
            a.swap(col, piv);
            for r in 0..4 {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for k in col..5 {
                        let v = a[col][k];
                        a[r][k] -= f * v;
                    }
                }
            }
        }
        [0, 1, 2, 3].map(|i| a[i][4] / a[i][i])
    }

    #[test]
    fn closed_form_matches_numeric_solve() {
        let set = SymbolSet::new(6);
        for &(x1, x2) in &[(0.0, 3.0), (0.0, -0.4), (1.5, -2.0), (7.0, 0.2)] {
            for kind in [NormalFormKind::A, NormalFormKind::C] {
                let (a, b, s) = f3(x1, x2);
                let got = set.normal_form_coeffs(kind, a, b, s);
                let want = numeric_solve(linear_system(a, b, s), linear_rhs(set.rhs_entries(kind, a, b, s)));
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).norm() <= 1e-12 * w.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn shatah_examples() {
        for eta in [-3.0, 0.0, 0.5, 12.0] {
            assert!((q_at(Pair::PP, 0.0, eta) - eta / 4.0).abs() < 1e-15);
        }
        assert_eq!(b_at(Pair::PP, 0.0, 0.0), C64::new(0.0, 0.0));
    }

    #[test]
    fn shatah_symbol_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let (x, y) = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let (a, b, s) = f3(x, y);
            for p in Pair::ALL {
                let lhs = C64::new(0.0, shatah_q(p, a, b, s));
                let rhs = shatah_b(p, a, b, s) * shatah_denominator(p, a, b, s);
                assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
            }
        }
    }

    #[test]
    fn denominator_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut worst = f64::INFINITY;
        for _ in 0..1_000_000 {
            let (x, y) = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            let (a, b, s) = f3(x, y);
            let d = shatah_denominator(Pair::PP, a, b, s).abs() * (s.jb + a.jb + b.jb);
            worst = worst.min(d);
        }
        assert!(worst >= 1.0 - 1e-9, "{worst}");
    }

    #[test]
    fn phase_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let xi = rng.gen_range(-30.0..30.0);
            assert!(phase(Triple::PPM, xi, 0.0, -xi).abs() < 1e-12);
        }
        assert!((phase(Triple::PPP, 0.0, 0.0, 0.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn c_star_vanishes_to_second_order() {
        assert!(c_star(0.0).abs() <= 1e-12);
        let h = 1e-4;
        assert!(((c_star(h) - c_star(-h)) / (2.0 * h)).abs() <= 1e-7);
    }

    #[test]
    fn c_star_matches_cubic_symbol_on_resonant_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..1000 {
            let xi = rng.gen_range(-20.0..20.0);
            let direct = cubic_symbol(Triple::PPM, xi, 0.0, -xi);
            let closed = c_star(xi);
            assert!(direct.im.abs() <= 1e-12 * closed.abs().max(1.0));
            assert!((direct.re - closed).abs() <= 1e-12 * closed.abs().max(1.0));
        }
    }

    #[test]
    fn c_star_growth_bound_and_sign() {
        let mut worst: f64 = 0.0;
        for i in 1..=10_000 {
            let xi = -50.0 + i as f64 * 0.01;
            let v = c_star(xi);
            assert!(v <= 0.0);
            worst = worst.max(v.abs() / (xi * xi * japanese(xi).powi(3)));
        }
        assert!(worst.is_finite() && worst < 10.0, "{worst}");
    }

    proptest! {
        #[test]
        fn theta_is_even_in_both_arguments(x in -1e3f64..1e3, y in -1e3f64..1e3) {
            let t = CutoffParams::default();
            let v = t.theta(x, y);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, t.theta(-x, y));
            prop_assert_eq!(v, t.theta(-x, -y));
        }

        #[test]
        fn bony_partition_is_complete(x in -1e3f64..1e3, y in -1e3f64..1e3) {
            let t = CutoffParams::default();
            let (a, b) = (t.theta(x, y), t.theta(y, x));
            prop_assert!((a + b + (1.0 - a - b) - 1.0).abs() < 1e-15);
            prop_assert!(a + b <= 1.0 + 1e-15);
        }

        #[test]
        fn cubic_symbols_finite(x in -30f64..30.0, y in -30f64..30.0, z in -30f64..30.0) {
            for t in Triple::ALL {
                let v = cubic_symbol(t, x, y, z);
                prop_assert!(v.re.is_finite() && v.im.is_finite());
            }
        }
    }
}
