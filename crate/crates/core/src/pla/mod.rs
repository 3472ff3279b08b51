//! Piecewise-linear envelopes.
//!
//! Each interval of a [`Division`] has a constant convexity sign for every
//! bounded component, so a chord and a midpoint tangent give one upper and
//! one lower linear piece per interval.

mod division;
pub mod poly;
mod targets;

pub use division::{build_division, build_division_with, Division, DivisionConfig, DivisionTarget};
pub use targets::{j1, tail_power, FnTarget, PowerKernel, Target, J1J2, J2, J3};

use crate::error::{Error, Result};
use crate::noise::NoiseParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Chord,
    Tangent,
}

/// `p x + q` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPiece {
    pub p: f64,
    pub q: f64,
    pub lo: f64,
    pub hi: f64,
    pub side: Side,
    pub kind: PieceKind,
}

impl LinearPiece {
    pub fn eval(&self, x: f64) -> f64 {
        self.p * x + self.q
    }

    /// Worst signed violation of the bounding property on an `n`-point grid
    /// (positive means the piece is on the wrong side of `g`).
    pub fn violation(&self, g: &dyn Target, n: usize) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            let x = self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64;
            let diff = g.value(x)? - self.eval(x);
            worst = worst.max(match self.side {
                Side::Upper => diff,
                Side::Lower => -diff,
            });
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Curvature {
    Convex,
    Concave,
    Flat,
}

const CURVATURE_REL_TOL: f64 = 1e-8;

fn classify(g: &dyn Target, a: f64, b: f64) -> Result<Curvature> {
    let m = 0.5 * (a + b);
    let v = [g.d2(a)?, g.d2(m)?, g.d2(b)?];
    let scale = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return if scale == 0.0 {
            Ok(Curvature::Flat)
        } else {
            Err(Error::Convexity { lo: a, hi: b })
        };
    }
    let tol = CURVATURE_REL_TOL * scale;
    let pos = v.iter().any(|x| *x > tol);
    let neg = v.iter().any(|x| *x < -tol);
    match (pos, neg) {
        (true, true) => Err(Error::Convexity { lo: a, hi: b }),
        (true, false) => Ok(Curvature::Convex),
        (false, true) => Ok(Curvature::Concave),
        (false, false) => Ok(Curvature::Flat),
    }
}

fn chord(g: &dyn Target, a: f64, b: f64, side: Side) -> Result<LinearPiece> {
    let (ga, gb) = (g.value(a)?, g.value(b)?);
    let p = (gb - ga) / (b - a);
    Ok(LinearPiece {
        p,
        q: ga - p * a,
        lo: a,
        hi: b,
        side,
        kind: PieceKind::Chord,
    })
}

fn tangent(g: &dyn Target, a: f64, b: f64, side: Side) -> Result<LinearPiece> {
    let m = 0.5 * (a + b);
    let p = g.d1(m)?;
    Ok(LinearPiece {
        p,
        q: g.value(m)? - p * m,
        lo: a,
        hi: b,
        side,
        kind: PieceKind::Tangent,
    })
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a < b && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("interval [{a}, {b}] is empty or unbounded")))
    }
}

/// Linear majorant of `g` on `[a, b]`: chord if convex, midpoint tangent if concave.
pub fn upper_piece(g: &dyn Target, a: f64, b: f64) -> Result<LinearPiece> {
    check_interval(a, b)?;
    match classify(g, a, b)? {
        Curvature::Convex | Curvature::Flat => chord(g, a, b, Side::Upper),
        Curvature::Concave => tangent(g, a, b, Side::Upper),
    }
}

/// Linear minorant of `g` on `[a, b]`: chord if concave, midpoint tangent if convex.
pub fn lower_piece(g: &dyn Target, a: f64, b: f64) -> Result<LinearPiece> {
    check_interval(a, b)?;
    match classify(g, a, b)? {
        Curvature::Concave | Curvature::Flat => chord(g, a, b, Side::Lower),
        Curvature::Convex => tangent(g, a, b, Side::Lower),
    }
}

/// Positive inflection point of `J1`, `sqrt(4 alpha gs^2 / (alpha + 2))`.
pub fn j1_inflection(params: &NoiseParams) -> f64 {
    (4.0 * params.alpha * params.gamma_s * params.gamma_s / (params.alpha + 2.0)).sqrt()
}

/// Positive inflection point of `J1 J2`, Taylor-corrected from the `J1` inflection.
///
/// The corrected point is kept only if it lowers `|(J1 J2)''|`; otherwise one
/// Newton step on `(J1 J2)''` is tried, and `x0` itself is the last resort.
pub fn j1j2_inflection(params: &NoiseParams) -> Result<f64> {
    params.validate()?;
    let t = J1J2::new(params);
    let x0 = j1_inflection(params);
    let (j1d, j1ddd) = (t.j1.d1(x0)?, t.j1.d3(x0));
    let (j1v, j2v, j2d, j2dd) = (t.j1.value(x0)?, t.j2.value(x0)?, t.j2.d1(x0)?, t.j2.d2(x0)?);
    let den = j1ddd * j2v;
    if den.abs() < 1e-14 {
        return Err(Error::Degenerate(format!("third-derivative term {den:e} at x0 = {x0}")));
    }
    let x_star = x0 - (2.0 * j1d * j2d - j1v * j2dd) / den;
    let r0 = t.d2(x0)?.abs();
    if x_star > 0.0 && t.d2(x_star)?.abs() <= r0 {
        return Ok(x_star);
    }
    let h = 1e-5 * x0;
    let d3 = (t.d2(x0 + h)? - t.d2(x0 - h)?) / (2.0 * h);
    if d3 != 0.0 {
        let xn = x0 - t.d2(x0)? / d3;
        if xn > 0.0 && t.d2(xn)?.abs() <= r0 {
            return Ok(xn);
        }
    }
    Ok(x0)
}

/// `|z| < 1` branch polynomial `2 d K P^2 + Q D` and `|z| >= 1` branch
/// polynomial `2 (a+1) d P^2 - N Q` of the `J3` inflection condition.
pub fn j3_branch_polys(params: &NoiseParams, ds_norm: f64) -> (poly::Poly, poly::Poly) {
    let t = J3::new(params, ds_norm);
    let (d, c0) = (ds_norm, t.c0);
    let p = [c0, d, -1.0];
    let q = [d * c0, -6.0 * c0, -3.0 * d, 2.0];
    let den = [c0, 0.0, 1.0];
    let n = [-d * d, 2.0 * d];
    let p2 = poly::mul(&p, &p);
    let k = (t.a + 1.0) * (t.b + 1.0) / (t.c + 1.0);
    let inner = poly::add(&poly::scale(&p2, 2.0 * d * k), &poly::mul(&q, &den));
    let outer = poly::add(
        &poly::scale(&p2, 2.0 * (t.a + 1.0) * d),
        &poly::scale(&poly::mul(&n, &q), -1.0),
    );
    (inner, outer)
}

/// Raw real roots of the two branch polynomials that fall in their branch's
/// feasible range, sorted.
pub fn j3_inflection_poly(params: &NoiseParams, ds_norm: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if !(ds_norm >= 0.0) || !ds_norm.is_finite() {
        return Err(Error::InvalidParam(format!("separation {ds_norm} must be finite and >= 0")));
    }
    if ds_norm == 0.0 {
        return Ok(Vec::new());
    }
    let t = J3::new(params, ds_norm);
    let (inner, outer) = j3_branch_polys(params, ds_norm);
    let mut out: Vec<f64> = poly::real_roots(&inner)
        .into_iter()
        .filter(|x| t.z(*x).abs() < 1.0)
        .chain(poly::real_roots(&outer).into_iter().filter(|x| t.z(*x) <= -1.0))
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Inflection points of `J3`: the branch-polynomial roots, each polished to
/// a sign change of the analytic second derivative; roots without a nearby
/// sign change are dropped.
pub fn j3_inflection(params: &NoiseParams, ds_norm: f64) -> Result<Vec<f64>> {
    let raw = j3_inflection_poly(params, ds_norm)?;
    let t = J3::new(params, ds_norm);
    let scale = (params.c0().sqrt() + ds_norm).max(1.0);
    let mut out: Vec<f64> = Vec::new();
    for x in raw {
        if let Some(r) = polish_sign_change(&t, x, 0.25 * scale)? {
            if out.iter().all(|y| (y - r).abs() > 1e-9 * scale) {
                out.push(r);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Searches outward from `x` (up to `reach`) for a sign change of `g''` and bisects it.
fn polish_sign_change(g: &dyn Target, x: f64, reach: f64) -> Result<Option<f64>> {
    let mut h = 1e-6 * reach;
    while h <= reach {
        let (a, b) = (x - h, x + h);
        let (fa, fb) = (g.d2(a)?, g.d2(b)?);
        if fa == 0.0 {
            return Ok(Some(a));
        }
        if fb == 0.0 {
            return Ok(Some(b));
        }
        if fa.signum() != fb.signum() {
            let fx = g.d2(x)?;
            let (lo, hi) = if fx == 0.0 {
                return Ok(Some(x));
            } else if fx.signum() != fa.signum() {
                (a, x)
            } else {
                (x, b)
            };
            return bisect_d2(g, lo, hi).map(Some);
        }
        h *= 2.0;
    }
    Ok(None)
}

/// Zero of `g''` on a bracket with a sign change.
fn bisect_d2(g: &dyn Target, mut lo: f64, mut hi: f64) -> Result<f64> {
    let flo = g.d2(lo)?;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = g.d2(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> FnTarget<impl Fn(f64) -> f64, impl Fn(f64) -> f64, impl Fn(f64) -> f64> {
        FnTarget {
            f: |x: f64| x * x,
            df: |x: f64| 2.0 * x,
            d2f: |_| 2.0,
        }
    }

    fn neg_square() -> FnTarget<impl Fn(f64) -> f64, impl Fn(f64) -> f64, impl Fn(f64) -> f64> {
        FnTarget {
            f: |x: f64| -x * x,
            df: |x: f64| -2.0 * x,
            d2f: |_| -2.0,
        }
    }

    #[test]
    fn chord_and_tangent_rules() {
        let up = upper_piece(&square(), 0.0, 1.0).unwrap();
        assert_eq!((up.p, up.q, up.kind), (1.0, 0.0, PieceKind::Chord));
        let lo = lower_piece(&square(), 0.0, 1.0).unwrap();
        assert_eq!((lo.p, lo.q, lo.kind), (1.0, -0.25, PieceKind::Tangent));
        let up = upper_piece(&neg_square(), -1.0, 1.0).unwrap();
        assert_eq!((up.p, up.q, up.kind), (0.0, 0.0, PieceKind::Tangent));
        let lo = lower_piece(&neg_square(), -1.0, 1.0).unwrap();
        assert_eq!((lo.p, lo.q, lo.kind), (0.0, -1.0, PieceKind::Chord));
    }

    #[test]
    fn mixed_convexity_is_rejected() {
        let cubic = FnTarget {
            f: |x: f64| x.powi(3),
            df: |x: f64| 3.0 * x * x,
            d2f: |x: f64| 6.0 * x,
        };
        assert!(matches!(upper_piece(&cubic, -1.0, 1.0), Err(Error::Convexity { .. })));
        assert!(upper_piece(&cubic, 1.0, 1.0).is_err());
    }

    #[test]
    fn j1_inflection_values() {
        // plug-in formula only; alpha = 2 is outside the validated range
        let p = NoiseParams {
            alpha: 2.0,
            gamma_g: 1.0,
            gamma_s: 1.0,
            rho: 0.5,
        };
        assert!((j1_inflection(&p) - 2f64.sqrt()).abs() < 1e-15);
        let p = NoiseParams::new(1.2, 1.0, 1.0, 0.2).unwrap();
        assert!((j1_inflection(&p) - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn j1j2_inflection_improves_residual() {
        for p in NoiseParams::reference_configs() {
            let x0 = j1_inflection(&p);
            let xs = j1j2_inflection(&p).unwrap();
            let t = J1J2::new(&p);
            assert!(t.d2(xs).unwrap().abs() <= t.d2(x0).unwrap().abs());
            assert!(((xs - x0) / x0).abs() < 0.5);
        }
    }

    #[test]
    fn j3_has_no_inflections_at_zero_separation() {
        let p = NoiseParams::new(1.2, 1.0, 1.0, 0.2).unwrap();
        assert!(j3_inflection(&p, 0.0).unwrap().is_empty());
    }

    #[test]
    fn j3_inflections_are_sign_changes() {
        let p = NoiseParams::new(1.2, 1.0, 1.0, 0.2).unwrap();
        let t = J3::new(&p, 4.0);
        let roots = j3_inflection(&p, 4.0).unwrap();
        assert!(!roots.is_empty());
        for r in roots {
            let h = 1e-4 * (1.0 + r.abs());
            assert!(t.d2(r - h).unwrap() * t.d2(r + h).unwrap() < 0.0, "no sign change at {r}");
        }
    }
}
