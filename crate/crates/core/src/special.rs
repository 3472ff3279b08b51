//! Special functions used by the noise model and the bound formulas.
//!
//! | function | method |
//! |---|---|
//! | `gamma_fn`, `erf_fn`, `erfc_fn` | `libm` |
//! | `beta_fn` | gamma ratio, log-gamma for large arguments |
//! | `tricomi_u` | Euler integral + Gauss-Kronrod for `z <= 50`, asymptotic series above |
//! | `gauss_2f1` | power series on `|z| <= 1/2`, Pfaff and `1 - z` transformations elsewhere |

use crate::error::{domain, no_convergence, Result};
use crate::quadrature;

/// Accuracy knobs shared by the series and quadrature based evaluators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySpec {
    pub rel_tol: f64,
    pub max_terms: usize,
    pub bisection_depth: usize,
}

impl Default for AccuracySpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_terms: 500,
            bisection_depth: 60,
        }
    }
}

impl AccuracySpec {
    pub fn new(rel_tol: f64, max_terms: usize, bisection_depth: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol < 1e-3) {
            return Err(domain("AccuracySpec", format!("rel_tol {rel_tol} not in (0, 1e-3)")));
        }
        if max_terms < 32 {
            return Err(domain("AccuracySpec", format!("max_terms {max_terms} < 32")));
        }
        Ok(Self {
            rel_tol,
            max_terms,
            bisection_depth,
        })
    }
}

/// Crossover between the integral representation and the asymptotic series of U.
pub const TRICOMI_ASYMPTOTIC_Z: f64 = 50.0;

pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("gamma_fn", format!("x = {x}")));
    }
    Ok(libm::tgamma(x))
}

/// Gamma on the whole real line minus the poles (used by connection formulas).
pub(crate) fn gamma_real(x: f64) -> f64 {
    libm::tgamma(x)
}

pub(crate) fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        0.0
    } else {
        1.0 / libm::tgamma(x)
    }
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(domain("beta_fn", format!("a = {a}, b = {b}")));
    }
    if a + b < 100.0 {
        Ok(libm::tgamma(a) * libm::tgamma(b) / libm::tgamma(a + b))
    } else {
        Ok((ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp())
    }
}

pub fn erf_fn(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc_fn(x: f64) -> f64 {
    libm::erfc(x)
}

pub fn tricomi_u(a: f64, b: f64, z: f64) -> Result<f64> {
    tricomi_u_with(a, b, z, &AccuracySpec::default())
}

/// Confluent hypergeometric function of the second kind, U(a, b, z), for a > 0, z > 0.
pub fn tricomi_u_with(a: f64, b: f64, z: f64, spec: &AccuracySpec) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain("tricomi_u", format!("z = {z}")));
    }
    if !(a > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(domain("tricomi_u", format!("a = {a}, b = {b}")));
    }
    if z > TRICOMI_ASYMPTOTIC_Z {
        if let Some(v) = tricomi_u_asymptotic(a, b, z, spec) {
            return Ok(v);
        }
    }
    tricomi_u_integral(a, b, z, spec)
}

/// dU/dz = -a U(a+1, b+1, z).
pub fn tricomi_u_dz(a: f64, b: f64, z: f64) -> Result<f64> {
    Ok(-a * tricomi_u(a + 1.0, b + 1.0, z)?)
}

fn tricomi_u_asymptotic(a: f64, b: f64, z: f64, spec: &AccuracySpec) -> Option<f64> {
    let c = a - b + 1.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for n in 0..spec.max_terms {
        let nf = n as f64;
        term *= -(a + nf) * (c + nf) / ((nf + 1.0) * z);
        if term == 0.0 {
            return Some(sum * z.powf(-a));
        }
        if term.abs() > prev {
            break;
        }
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return Some(sum * z.powf(-a));
        }
        prev = term.abs();
    }
    if prev <= spec.rel_tol * 1e-2 * sum.abs() {
        Some(sum * z.powf(-a))
    } else {
        None
    }
}

fn tricomi_u_integral(a: f64, b: f64, z: f64, spec: &AccuracySpec) -> Result<f64> {
    // U = z^{-a}/Gamma(a) * int_0^inf e^{-w} w^{a-1} (1 + w/z)^{b-a-1} dw
    let e = b - a - 1.0;
    let h = |w: f64| (1.0 + w / z).powf(e);
    let w_max = 100.0_f64.max(4.0 * a + 60.0);
    let tol = spec.rel_tol * 1e-2;
    let max_sub = 40 * spec.bisection_depth.max(10);
    let (res, pre) = if a <= 0.5 {
        // w = v^{1/a}
        let inv = 1.0 / a;
        let f = |v: f64| {
            if v <= 0.0 {
                return h(0.0);
            }
            let w = v.powf(inv);
            (-w).exp() * h(w)
        };
        let vmax = w_max.powf(a);
        let mut pts = vec![0.0];
        for wb in [z, 1.0, 10.0] {
            let vb = wb.powf(a);
            if vb > 0.0 && vb < vmax && vb > *pts.last().unwrap() {
                pts.push(vb);
            }
        }
        pts.push(vmax);
        let r = quadrature::integrate_pts(f, &pts, 0.0, tol, max_sub);
        (r, z.powf(-a) / gamma_real(a + 1.0))
    } else {
        // w = v^2
        let p = 2.0 * a - 1.0;
        let f = |v: f64| {
            let w = v * v;
            let vp = if p == 0.0 { 1.0 } else { v.powf(p) };
            2.0 * vp * (-w).exp() * h(w)
        };
        let vmax = w_max.sqrt();
        let mut pts = vec![0.0];
        for wb in [z, 1.0, 16.0] {
            let vb = wb.sqrt();
            if vb < vmax && vb > *pts.last().unwrap() {
                pts.push(vb);
            }
        }
        pts.push(vmax);
        let r = quadrature::integrate_pts(f, &pts, 0.0, tol, max_sub);
        (r, z.powf(-a) * recip_gamma(a))
    };
    if !res.converged || !res.value.is_finite() {
        return Err(no_convergence(
            "tricomi_u",
            format!("a = {a}, b = {b}, z = {z}, error estimate {:e}", res.error),
        ));
    }
    Ok(pre * res.value)
}

pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    gauss_2f1_with(a, b, c, z, &AccuracySpec::default())
}

/// Gauss hypergeometric function for real z <= 1.
pub fn gauss_2f1_with(a: f64, b: f64, c: f64, z: f64, spec: &AccuracySpec) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
        return Err(domain("gauss_2f1", "non-finite argument"));
    }
    if c <= 0.0 && c == c.floor() {
        return Err(domain("gauss_2f1", format!("c = {c} is a nonpositive integer")));
    }
    if z > 1.0 {
        return Err(domain("gauss_2f1", format!("z = {z} > 1")));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z == 1.0 {
        let s = c - a - b;
        if s <= 0.0 {
            return Err(domain("gauss_2f1", format!("z = 1 with c - a - b = {s} <= 0")));
        }
        return Ok(gamma_real(c) * gamma_real(s) * recip_gamma(c - a) * recip_gamma(c - b));
    }
    if z.abs() <= 0.5 {
        return series_2f1(a, b, c, z, spec);
    }
    if z > 0.5 {
        return near_one_2f1(a, b, c, z, spec);
    }
    // z < -1/2: Pfaff, w = z/(z-1) in (1/3, 1)
    let w = z / (z - 1.0);
    let pre = (1.0 - z).powf(-a);
    if w <= 0.5 {
        Ok(pre * series_2f1(a, c - b, c, w, spec)?)
    } else {
        Ok(pre * near_one_2f1(a, c - b, c, w, spec)?)
    }
}

fn series_2f1(a: f64, b: f64, c: f64, z: f64, spec: &AccuracySpec) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small = 0;
    for n in 0..spec.max_terms {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        if term.abs() <= 1e-17 * sum.abs() {
            small += 1;
            if small >= 2 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(no_convergence(
        "gauss_2f1",
        format!("series cap {} reached at z = {z}", spec.max_terms),
    ))
}

/// 1 - z connection formula for z in (1/2, 1).
fn near_one_2f1(a: f64, b: f64, c: f64, z: f64, spec: &AccuracySpec) -> Result<f64> {
    let s = c - a - b;
    if (s - s.round()).abs() < 1e-9 {
        // integer c - a - b: connection coefficients are singular; sum directly
        let mut slow = *spec;
        slow.max_terms = spec.max_terms.max(20_000);
        return series_2f1(a, b, c, z, &slow);
    }
    let y = 1.0 - z;
    let gc = gamma_real(c);
    let a1 = gc * gamma_real(s) * recip_gamma(c - a) * recip_gamma(c - b);
    let a2 = gc * gamma_real(-s) * recip_gamma(a) * recip_gamma(b);
    let mut v = 0.0;
    if a1 != 0.0 {
        v += a1 * series_2f1(a, b, 1.0 - s, y, spec)?;
    }
    if a2 != 0.0 {
        v += a2 * y.powf(s) * series_2f1(c - a, c - b, s + 1.0, y, spec)?;
    }
    Ok(v)
}

/// e^{-x} M(a, b, x) for x >= 0 and b > 0.
pub(crate) fn kummer_m_scaled(a: f64, b: f64, x: f64, spec: &AccuracySpec) -> Result<f64> {
    if x < 0.0 || b <= 0.0 {
        return Err(domain("kummer_m_scaled", format!("a = {a}, b = {b}, x = {x}")));
    }
    if x <= 40.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 0..spec.max_terms.max(400) {
            let nf = n as f64;
            term *= (a + nf) / ((b + nf) * (nf + 1.0)) * x;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                return Ok(sum * (-x).exp());
            }
        }
        return Err(no_convergence("kummer_m_scaled", format!("x = {x}")));
    }
    // Gamma(b)/Gamma(a) x^{a-b} sum (b-a)_n (1-a)_n / n! x^{-n}
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for n in 0..spec.max_terms {
        let nf = n as f64;
        term *= (b - a + nf) * (1.0 - a + nf) / ((nf + 1.0) * x);
        if term.abs() > prev {
            break;
        }
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        prev = term.abs();
    }
    Ok(gamma_real(b) * recip_gamma(a) * x.powf(a - b) * sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_identities() {
        assert!(rel(gamma_fn(0.5).unwrap(), std::f64::consts::PI.sqrt()) < 1e-14);
        assert_eq!(gamma_fn(1.0).unwrap(), 1.0);
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-1.5).is_err());
    }

    #[test]
    fn beta_half_half_is_pi() {
        assert!(rel(beta_fn(0.5, 0.5).unwrap(), std::f64::consts::PI) < 1e-14);
        assert!(rel(beta_fn(1.0, 1.0).unwrap(), 1.0) < 1e-15);
        assert!(rel(beta_fn(60.0, 70.0).unwrap(), (ln_gamma(60.0) + ln_gamma(70.0) - ln_gamma(130.0)).exp()) < 1e-12);
    }

    #[test]
    fn erf_limits() {
        assert_eq!(erf_fn(0.0), 0.0);
        assert!((erf_fn(10.0) - 1.0).abs() < 1e-15);
        assert_eq!(erf_fn(-0.7), -erf_fn(0.7));
    }

    #[test]
    fn u_half_half_closed_form() {
        for z in [0.01f64, 0.3, 1.0, 4.0, 49.0, 51.0, 300.0] {
            let exact = std::f64::consts::PI.sqrt() * z.exp() * erfc_fn(z.sqrt());
            assert!(rel(tricomi_u(0.5, 0.5, z).unwrap(), exact) < 1e-11, "z = {z}");
        }
    }

    #[test]
    fn u_matches_across_crossover() {
        let s = AccuracySpec::default();
        for (a, b) in [(0.5, 0.7), (1.5, 1.2), (0.2, -0.6), (2.5, 1.7)] {
            let i = tricomi_u_integral(a, b, 60.0, &s).unwrap();
            let asy = tricomi_u_asymptotic(a, b, 60.0, &s).unwrap();
            assert!(rel(i, asy) < 1e-11, "a = {a}, b = {b}");
        }
    }

    #[test]
    fn u_b_equals_a_plus_one_is_power() {
        // U(a, a+1, z) = z^{-a}
        for (a, z) in [(0.3, 0.2), (1.1, 3.0), (0.5, 70.0)] {
            assert!(rel(tricomi_u(a, a + 1.0, z).unwrap(), z.powf(-a)) < 1e-12);
        }
    }

    #[test]
    fn u_rejects_bad_domain() {
        assert!(tricomi_u(0.5, 0.5, 0.0).is_err());
        assert!(tricomi_u(-0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn f21_log_identity() {
        let v = gauss_2f1(1.0, 1.0, 2.0, 0.5).unwrap();
        assert!(rel(v, -(0.5f64).ln() / 0.5) < 1e-14);
        for z in [-30.0, -2.0, -0.7, 0.3, 0.8, 0.99] {
            let v = gauss_2f1(1.0, 1.0, 2.0, z).unwrap();
            assert!(rel(v, -(1.0 - z).ln() / z) < 1e-12, "z = {z}");
        }
    }

    #[test]
    fn f21_gauss_sum_at_one() {
        let v = gauss_2f1(0.3, 0.5, 1.9, 1.0).unwrap();
        let exact = gamma_real(1.9) * gamma_real(1.1) / (gamma_real(1.6) * gamma_real(1.4));
        assert!(rel(v, exact) < 1e-13);
        assert!(gauss_2f1(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(gauss_2f1(1.0, 1.0, -2.0, 0.1).is_err());
    }

    #[test]
    fn kummer_scaled_branches_agree() {
        let s = AccuracySpec::default();
        let a = 0.3;
        let b = 1.3;
        let lo = kummer_m_scaled(a, b, 40.0, &s).unwrap();
        let mut big = s;
        big.max_terms = 2000;
        // direct series just past the crossover
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 0..2000 {
            let nf = n as f64;
            term *= (a + nf) / ((b + nf) * (nf + 1.0)) * 45.0;
            sum += term;
        }
        let hi = kummer_m_scaled(a, b, 45.0, &big).unwrap();
        assert!(rel(hi, sum * (-45.0f64).exp()) < 1e-9);
        assert!(lo > 0.0);
    }
}
