//! Invariant suites behind `plasmawave verify`. Each check reports a measured
//! value against a bound; every randomized check takes its stream from the
//! suite seed.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bilinear::{
    bony_decomposition, convolve_scalar, energy_orthogonality_check, pairing, BilinearPlan,
};
use crate::diagnostics::rate_fit;
use crate::error::{Error, Result};
use crate::normal_form::NormalFormContext;
use crate::scattering::{cubic_interaction, dispersive_constant_check, profile_w_spec, quadrature_check_b4};
use crate::spectral::{Grid, C64};
use crate::symbols::{
    back_substitution_residual, b_at, c_star, cubic_symbol, shatah_b, shatah_denominator, shatah_q,
    CutoffParams, MatrixKind, NormalFormKind, Pair, SymbolSet, Triple,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `<= 1e-9`.
    pub bound: String,
}

impl Check {
    fn le(suite: &'static str, name: &'static str, value: f64, bound: f64) -> Self {
        Check { suite, name, passed: value <= bound, value, bound: format!("<= {bound:e}") }
    }

    fn ge(suite: &'static str, name: &'static str, value: f64, bound: f64) -> Self {
        Check { suite, name, passed: value >= bound, value, bound: format!(">= {bound:e}") }
    }

    fn within(suite: &'static str, name: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Check { suite, name, passed: (lo..=hi).contains(&value), value, bound: format!("in [{lo}, {hi}]") }
    }
}

impl fmt::Display for Check {
    /// `PASS suite/name value=... bound=...`, one token per field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{} value={:.6e} bound=\"{}\"",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.value,
            self.bound
        )
    }
}

/// Runs one suite (`symbols`, `identities`, `scattering`, `appendix`) or `all`.
pub fn run_suite(suite: &str, seed: u64) -> Result<Vec<Check>> {
    match suite {
        "symbols" => symbols_suite(seed),
        "identities" => identities_suite(seed),
        "scattering" => scattering_suite(seed),
        "appendix" => appendix_suite(),
        "all" => {
            let mut out = symbols_suite(seed)?;
            out.extend(identities_suite(seed)?);
            out.extend(scattering_suite(seed)?);
            out.extend(appendix_suite()?);
            Ok(out)
        }
        other => Err(Error::Config(format!("unknown verify suite {other:?}"))),
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Random spectrum on `|k| <= kmax` with entries of size `amp * L`; Hermitian
/// (real field) when `real`.
pub fn random_band(grid: &Grid, kmax: i64, amp: f64, rng: &mut ChaCha8Rng, real: bool) -> Vec<C64> {
    let mut s = vec![ZERO; grid.n()];
    let l = grid.length();
    for k in -kmax..=kmax {
        let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp * l;
        s[grid.spec.index_of(k).expect("band inside the grid")] = z;
    }
    if real {
        s[0].im = 0.0;
        for k in 1..=kmax {
            let z = s[grid.spec.index_of(k).unwrap()];
            s[grid.spec.index_of(-k).unwrap()] = z.conj();
        }
    }
    s
}

fn rel(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

fn l2(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

// ---- symbols ----

fn symbols_suite(seed: u64) -> Result<Vec<Check>> {
    const S: &str = "symbols";
    let mut out = vec![b_self_adjointness(seed), back_substitution(seed, 10_000)];
    out.extend(c_star_checks(seed, 1000));

    let mut r = rng(seed, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (x, y): (f64, f64) = (r.gen_range(-50.0..50.0), r.gen_range(-50.0..50.0));
        let (a, b, s) = (crate::spectral::Freq::new(x), crate::spectral::Freq::new(y), crate::spectral::Freq::new(x + y));
        for p in Pair::ALL {
            let lhs = C64::new(0.0, shatah_q(p, a, b, s));
            let rhs = shatah_b(p, a, b, s) * shatah_denominator(p, a, b, s);
            worst = worst.max((lhs - rhs).norm() / lhs.norm().max(1.0));
        }
    }
    out.push(Check::le(S, "shatah_symbol_identity", worst, 1e-12));
    Ok(out)
}

/// `B(xi1, xi2) = B(-xi1, xi1 + xi2)^*` for N in {6, 300}.
pub fn b_self_adjointness(seed: u64) -> Check {
    let mut r = rng(seed, 1);
    let mut worst: f64 = 0.0;
    for n in [6u32, 300] {
        let set = SymbolSet::new(n);
        for _ in 0..10_000 {
            let (x1, x2) = (r.gen_range(-30.0..30.0), r.gen_range(-30.0..30.0));
            for (kind, q) in [(MatrixKind::B1, MatrixKind::Q1), (MatrixKind::B2, MatrixKind::Q2)] {
                let lhs = set.matrix_at(kind, x1, x2);
                let rhs = set.matrix_at(kind, -x1, x1 + x2).adjoint();
                let scale = set
                    .matrix_at(q, x1, x2)
                    .max_abs()
                    .max(set.matrix_at(q, -x1, x1 + x2).max_abs())
                    .max(1e-300);
                worst = worst.max(lhs.sub(rhs).max_abs() / scale);
            }
        }
    }
    Check::le("symbols", "b_self_adjointness", worst, 1e-12)
}

/// Closed-form A and C coefficients substituted back into the 4x4 system,
/// N in {1, 6, 300}.
pub fn back_substitution(seed: u64, points: usize) -> Check {
    let mut r = rng(seed, 2);
    let mut worst: f64 = 0.0;
    for n in [1u32, 6, 300] {
        let set = SymbolSet::new(n);
        for _ in 0..points {
            let (x1, x2) = (r.gen_range(-10.0..10.0), r.gen_range(-10.0..10.0));
            for kind in [NormalFormKind::A, NormalFormKind::C] {
                worst = worst.max(back_substitution_residual(&set, kind, x1, x2));
            }
        }
    }
    Check::le("symbols", "normal_form_back_substitution", worst, 1e-10)
}

/// `c*(0)`, a centred difference for `c*'(0)`, and `c^{++-}(xi, 0, -xi) = c*(xi)`.
pub fn c_star_checks(seed: u64, samples: usize) -> Vec<Check> {
    const S: &str = "symbols";
    let h = 1e-4;
    let mut r = rng(seed, 4);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let xi = r.gen_range(-20.0..20.0);
        let direct = cubic_symbol(Triple::PPM, xi, 0.0, -xi);
        let closed = c_star(xi);
        let scale = closed.abs().max(1.0);
        worst = worst.max(direct.im.abs() / scale).max((direct.re - closed).abs() / scale);
    }
    vec![
        Check::le(S, "c_star_at_zero", c_star(0.0).abs(), 1e-12),
        Check::le(S, "c_star_derivative_at_zero", ((c_star(h) - c_star(-h)) / (2.0 * h)).abs(), 1e-7),
        Check::le(S, "c_star_resonant_restriction", worst, 1e-12),
    ]
}

// ---- identities ----

fn identities_suite(seed: u64) -> Result<Vec<Check>> {
    const S: &str = "identities";
    let mut out = orthogonality(seed, 50)?.to_vec();
    out.push(operator_identities(seed, 50)?);

    let g = Grid::with(256, 60.0)?;
    let mut r = rng(seed, 12);
    let fh = random_band(&g, 60, 1.0, &mut r, true);
    let gh = random_band(&g, 60, 1.0, &mut r, true);
    let (a, b, c) = bony_decomposition(&g, CutoffParams::default(), &fh, &gh);
    let sum: Vec<C64> = (0..g.n()).map(|k| a[k] + b[k] + c[k]).collect();
    let prod = convolve_scalar(&g, &fh, &gh, |_, _, _| C64::new(1.0, 0.0));
    out.push(Check::le(S, "bony_recombination", rel(&sum, &prod), 1e-12));

    let g = Grid::with(128, 30.0)?;
    let set = SymbolSet::new(6);
    let mut worst: f64 = 0.0;
    for kind in [MatrixKind::Q1, MatrixKind::Q2, MatrixKind::B1, MatrixKind::B2] {
        let plan = BilinearPlan::new(g.clone(), std::sync::Arc::new(move |a, b, s| set.matrix(kind, a, b, s)));
        let adj = plan.adjoint();
        let f = random_band(&g, 30, 1.0, &mut r, true);
        let v = [random_band(&g, 30, 1.0, &mut r, false), random_band(&g, 30, 1.0, &mut r, false)];
        let w = [random_band(&g, 30, 1.0, &mut r, false), random_band(&g, 30, 1.0, &mut r, false)];
        let ov = plan.apply_spec(&f, [&v[0], &v[1]])?;
        let aw = adj.apply_spec(&f, [&w[0], &w[1]])?;
        let lhs = pairing(&g, &ov[0], &w[0]) + pairing(&g, &ov[1], &w[1]);
        let rhs = pairing(&g, &v[0], &aw[0]) + pairing(&g, &v[1], &aw[1]);
        worst = worst.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1e-300));
    }
    out.push(Check::le(S, "adjoint_identity", worst, 1e-11));

    out.extend(homogeneity(seed)?);
    Ok(out)
}

/// Energy orthogonality of `Q1 - B1` (against r) and `Q2 - B2` (against u)
/// at N = 6 on a 256-point grid, with the `B = 0` control.
pub fn orthogonality(seed: u64, seeds: u64) -> Result<[Check; 3]> {
    const S: &str = "identities";
    let g = Grid::with(256, 8.0 * PI)?;
    let set = SymbolSet::new(6);
    let (mut w1, mut w2, mut control) = (0.0f64, 0.0f64, f64::INFINITY);
    for i in 0..seeds {
        let mut r = rng(seed, 100 + i);
        let rf = g.inverse_real(&random_band(&g, 64, 1.0, &mut r, true))?;
        let uf = g.inverse_real(&random_band(&g, 64, 1.0, &mut r, true))?;
        let u = [rf.as_slice(), uf.as_slice()];
        w1 = w1.max(energy_orthogonality_check(&g, &rf, u, 6, |a, b, s| set.q1(a, b, s).sub(set.b1(a, b, s)))?);
        w2 = w2.max(energy_orthogonality_check(&g, &uf, u, 6, |a, b, s| set.q2(a, b, s).sub(set.b2(a, b, s)))?);
        let c1 = energy_orthogonality_check(&g, &rf, u, 6, |a, b, s| set.q1(a, b, s))?;
        let c2 = energy_orthogonality_check(&g, &uf, u, 6, |a, b, s| set.q2(a, b, s))?;
        control = control.min(c1.max(c2));
    }
    Ok([
        Check::le(S, "orthogonality_r_q1_minus_b1", w1, 1e-9),
        Check::le(S, "orthogonality_u_q2_minus_b2", w2, 1e-9),
        Check::ge(S, "orthogonality_control_b_zero", control, 1e-3),
    ])
}

/// Both lines of the A/B and C/S operator identities, worst relative residual.
pub fn operator_identities(seed: u64, seeds: u64) -> Result<Check> {
    let g = Grid::with(256, 8.0 * PI)?;
    let ctx = NormalFormContext::new(g.clone(), 6);
    let mut worst: f64 = 0.0;
    for i in 0..seeds {
        let mut r = rng(seed, 200 + i);
        let rf = g.inverse_real(&random_band(&g, 64, 1.0, &mut r, true))?;
        let uf = g.inverse_real(&random_band(&g, 64, 1.0, &mut r, true))?;
        for c_kind in [false, true] {
            let [a, b] = ctx.identity_residuals(&rf, &uf, c_kind)?;
            worst = worst.max(a).max(b);
        }
    }
    Ok(Check::le("identities", "normal_form_operator_identities", worst, 1e-9))
}

/// `N(eps h) = eps^3 N(h)` and the quartic scaling of the remainder.
pub fn homogeneity(seed: u64) -> Result<[Check; 2]> {
    const S: &str = "identities";
    let g = Grid::with(128, 30.0)?;
    let ctx = NormalFormContext::new(g.clone(), 6);
    let mut r = rng(seed, 13);
    let h = random_band(&g, 20, 1e-2, &mut r, false);
    let eps = 0.37;
    let hs: Vec<C64> = h.iter().map(|z| z * eps).collect();
    let a = ctx.cubic_n_spec(&hs)?;
    let b: Vec<C64> = ctx.cubic_n_spec(&h)?.iter().map(|z| z * eps.powi(3)).collect();
    let h = random_band(&g, 20, 1e-3, &mut r, false);
    let half: Vec<C64> = h.iter().map(|z| z * 0.5).collect();
    let ratio = l2(&ctx.quartic_remainder_spec(&h)?) / l2(&ctx.quartic_remainder_spec(&half)?);
    Ok([
        Check::le(S, "cubic_homogeneity", rel(&a, &b), 1e-12),
        Check::within(S, "quartic_remainder_ratio", ratio, 14.0, 18.0),
    ])
}

// ---- scattering ----

fn scattering_suite(seed: u64) -> Result<Vec<Check>> {
    const S: &str = "scattering";
    let g = Grid::with(64, 20.0)?;
    let ctx = NormalFormContext::new(g.clone(), 6);
    let mut r = rng(seed, 20);
    let gs = random_band(&g, 6, 1e-2, &mut r, false);
    let t = 0.8;

    let w = profile_w_spec(&g, &gs, t);
    let back = crate::scattering::unprofile_spec(&g, &w, t);
    let unitary = (l2(&w) - l2(&gs)).abs() / l2(&gs);
    let mut out = vec![
        Check::le(S, "profile_unitary", unitary, 1e-14),
        Check::le(S, "profile_inverse", rel(&back, &gs), 1e-14),
    ];

    // the lattice interaction integrals add up to the cubic term of the profile
    let n_g = ctx.cubic_n_spec(&gs)?;
    let mut sum = vec![ZERO; g.n()];
    for tr in Triple::ALL {
        let it = cubic_interaction(&g, tr, &w, t)?;
        for (s, v) in sum.iter_mut().zip(&it) {
            *s += C64::new(0.0, 1.0) * v / (4.0 * PI * PI);
        }
    }
    out.push(Check::le(S, "cubic_interaction_matches_cubic_term", rel(&sum, &profile_w_spec(&g, &n_g, t)), 1e-9));

    // the b-symbol vanishes on the zero-frequency corner
    out.push(Check::le(S, "shatah_b_at_origin", b_at(Pair::PP, 0.0, 0.0).norm(), 0.0));
    Ok(out)
}

// ---- appendix ----

fn appendix_suite() -> Result<Vec<Check>> {
    const S: &str = "appendix";
    let mut out = Vec::new();
    // proven bound shape lambda^{-2} mu^{-2} at n = 1
    let mut worst: f64 = 0.0;
    for lambda in [20.0, 40.0, 80.0] {
        let r = quadrature_check_b4(lambda, 2.0, 1)?;
        worst = worst.max(r.error / r.bound_shape);
    }
    out.push(Check::le(S, "quadrature_error_within_bound_shape", worst, 1.0));

    let g = Grid::with(4096, 1600.0 * PI)?;
    let f: Vec<C64> = g.x().iter().map(|&x| C64::new((-(x / 2.0).powi(2)).exp(), 0.0)).collect();
    let times: Vec<f64> = (0..=50).map(|i| i as f64 * 10.0).collect();
    let tab = dispersive_constant_check(&g, &f, &times, 10.0)?;
    out.push(Check {
        suite: S,
        name: "dispersive_constant_finite",
        passed: tab.sup_ratio.is_finite() && tab.sup_ratio > 0.0,
        value: tab.sup_ratio,
        bound: "finite, > 0".into(),
    });
    let t: Vec<f64> = tab.rows.iter().map(|r| r.t).collect();
    let y: Vec<f64> = tab.rows.iter().map(|r| r.sup_evolved).collect();
    let fit = rate_fit(&t, &y, 100.0, 500.0)?;
    out.push(Check::within(S, "linear_decay_exponent", fit.slope, -0.55, -0.45));
    Ok(out)
}
