//! Univariate root finding.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;

/// Relative threshold below which leading coefficients are dropped.
pub const DEFLATION_TOL: f64 = 1e-12;
pub const DEFAULT_EPS_IM: f64 = 1e-8;
const POLISH_STEPS: usize = 3;

/// Removes numerically vanishing leading coefficients (highest degree first).
/// Returns `None` for an identically zero polynomial.
pub fn deflate(coeffs: &[f64]) -> Option<&[f64]> {
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if max == 0.0 || !max.is_finite() {
        return None;
    }
    let start = coeffs.iter().position(|c| c.abs() > DEFLATION_TOL * max)?;
    Some(&coeffs[start..])
}

/// Horner evaluation at a complex point, also returning the derivative.
fn horner(coeffs: &[f64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

pub fn eval_real(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

fn polish(coeffs: &[f64], mut z: C64) -> C64 {
    let (mut p, _) = horner(coeffs, z);
    for _ in 0..POLISH_STEPS {
        let (_, dp) = horner(coeffs, z);
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let next = z - p / dp;
        let (pn, _) = horner(coeffs, next);
        if !(pn.norm() < p.norm()) {
            break;
        }
        z = next;
        p = pn;
    }
    z
}

fn quadratic(a: f64, b: f64, c: f64) -> [C64; 2] {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return [C64::new(0.0, 0.0); 2];
        }
        [C64::new(q / a, 0.0), C64::new(c / q, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a).abs();
        [C64::new(re, im), C64::new(re, -im)]
    }
}

/// All complex roots of `coeffs` (highest degree first), with multiplicity.
/// Returns `None` when the polynomial is identically zero.
pub fn roots_all(coeffs: &[f64]) -> Option<Vec<C64>> {
    let c = deflate(coeffs)?;
    if c.iter().any(|v| !v.is_finite()) {
        return Some(Vec::new());
    }
    // exact zero roots are split off; the QR iteration stalls on nilpotent blocks
    let zeros = c.iter().rev().take_while(|v| **v == 0.0).count();
    let c = &c[..c.len() - zeros];
    let d = c.len() - 1;
    let mut raw: Vec<C64> = match d {
        0 => Vec::new(),
        1 => vec![C64::new(-c[1] / c[0], 0.0)],
        2 => quadratic(c[0], c[1], c[2]).to_vec(),
        _ => {
            let mut m = DMatrix::<f64>::zeros(d, d);
            for j in 0..d {
                m[(0, j)] = -c[j + 1] / c[0];
            }
            for i in 1..d {
                m[(i, i - 1)] = 1.0;
            }
            match Schur::try_new(m, f64::EPSILON, 10_000) {
                Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
                None => Vec::new(),
            }
        }
    };
    raw = raw.into_iter().map(|z| polish(c, z)).collect();
    raw.extend(std::iter::repeat_n(C64::new(0.0, 0.0), zeros));
    Some(raw)
}

/// Real roots `>= -eps_t`, ascending, with `[-eps_t, 0)` clamped to zero and
/// near-duplicates merged.
pub fn real_nonneg_roots(coeffs: &[f64], eps_im: f64, eps_t: f64) -> Vec<f64> {
    let Some(roots) = roots_all(coeffs) else {
        return Vec::new();
    };
    let mut out: Vec<f64> = roots
        .into_iter()
        .filter(|z| z.im.abs() <= eps_im * (1.0 + z.re.abs()) && z.re >= -eps_t && z.re.is_finite())
        .map(|z| if z.re < 0.0 { 0.0 } else { z.re })
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|b, a| (*b - *a).abs() <= eps_t);
    out
}
