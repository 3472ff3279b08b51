//! Closed-form bounds on the S-integrals, the Bhattacharyya parameter and
//! the cutoff rate, plus the linearised surrogate used by the optimizer.
//!
//! Coordinates: the S2 integral reduces to
//! `C2 * int exp(-(x+d)^2 / 8gg^2) J1(x) J2(x) dx` and the S3 integral to
//! `C3 * int J1(x-d) P(x) J3(x) dx` with `P = J1^{(alpha+2)/alpha}`.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::noise::{norm_constants, NoiseParams};
use crate::oracle::{bhattacharyya, QuadSpec};
use crate::pla::{
    build_division_with, lower_piece, tail_power, upper_piece, Division, DivisionConfig, DivisionTarget, LinearPiece,
    Target, J1J2, J3,
};
use crate::report::{csv_line, fmt12};
use crate::shaping::Constellation;
use crate::special::{beta_fn, erf_fn, erfc_fn, gamma_fn, gauss_2f1, kummer_m_scaled, tricomi_u, AccuracySpec};

/// Knobs shared by every bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsConfig {
    pub s2: DivisionConfig,
    pub s3: DivisionConfig,
    /// Jensen weight epsilon in `w3 = (rho + eps)^{-1}`.
    pub eps_w: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            s2: DivisionConfig::s2_default(),
            s3: DivisionConfig::s3_default(),
            eps_w: 1e-3,
        }
    }
}

impl BoundsConfig {
    /// Every interval count doubled.
    pub fn refined(&self) -> Self {
        let dbl = |c: DivisionConfig| DivisionConfig {
            k_main: 2 * c.k_main,
            k_tail: 2 * c.k_tail,
            ..c
        };
        Self {
            s2: dbl(self.s2),
            s3: dbl(self.s3),
            ..*self
        }
    }
}

/// The S2 and S3 divisions for one separation.
#[derive(Debug, Clone)]
pub struct Divisions {
    pub s2: Division,
    pub s3: Division,
}

impl Divisions {
    pub fn build(params: &NoiseParams, ds_norm: f64, cfg: &BoundsConfig) -> Result<Self> {
        Ok(Self {
            s2: build_division_with(DivisionTarget::J1J2, params, ds_norm, &cfg.s2)?,
            s3: build_division_with(DivisionTarget::J3, params, ds_norm, &cfg.s3)?,
        })
    }

    pub fn bisected(&self) -> Self {
        Self {
            s2: self.s2.bisected(),
            s3: self.s3.bisected(),
        }
    }
}

fn check_ds(ds_norm: f64) -> Result<()> {
    if ds_norm >= 0.0 && ds_norm.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("separation {ds_norm} must be finite and >= 0")))
    }
}

fn check_division(div: &Division, target: DivisionTarget, params: &NoiseParams, ds_norm: f64) -> Result<()> {
    if div.target != target || div.params != *params || div.ds_norm != ds_norm {
        return Err(Error::InvalidParam(format!(
            "division built for {} at ds_norm {} does not match the request ({} at {})",
            div.target.tag(),
            div.ds_norm,
            target.tag(),
            ds_norm
        )));
    }
    Ok(())
}

/// Exact Gaussian-Gaussian term `4 pi gg^2 rho k3 exp(-d^2 / 16 gg^2)`.
pub fn s1_exact(ds_norm: f64, params: &NoiseParams) -> f64 {
    let k = norm_constants(params);
    let g2 = params.gamma_g * params.gamma_g;
    4.0 * PI * g2 * params.rho * k.k3 * (-ds_norm * ds_norm / (16.0 * g2)).exp()
}

fn s2_prefactor(params: &NoiseParams) -> f64 {
    let k = norm_constants(params);
    let beta = 0.25 * (params.alpha + 2.0);
    (params.rho * (1.0 - params.rho) * k.k3 * k.k4).sqrt() * params.c0().powf(beta) * PI.sqrt()
}

fn s3_prefactor(params: &NoiseParams) -> Result<f64> {
    let k = norm_constants(params);
    let beta = 0.25 * (params.alpha + 2.0);
    Ok((1.0 - params.rho) * k.k4 * params.c0().powf(2.0 * beta) * beta_fn(0.5, 0.5 * (params.alpha + 1.0))?)
}

/// `erf(b) - erf(a)` without cancellation in the tails.
fn erf_diff(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        erfc_fn(a) - erfc_fn(b)
    } else if b <= 0.0 {
        erfc_fn(-b) - erfc_fn(-a)
    } else {
        erf_fn(b) - erf_fn(a)
    }
}

/// `int_a^b (p x + q) exp(-(x+d)^2 / s) dx`.
fn gauss_piece_integral(piece: &LinearPiece, d: f64, s: f64) -> f64 {
    let (r0, r1) = (piece.lo + d, piece.hi + d);
    let sq = s.sqrt();
    let lin = 0.5 * s * ((-r0 * r0 / s).exp() - (-r1 * r1 / s).exp());
    let cst = 0.5 * (PI * s).sqrt() * erf_diff(r0 / sq, r1 / sq);
    piece.p * lin + (piece.q - piece.p * d) * cst
}

/// Upper piece, bisecting if the interval straddles an unexpected inflection.
fn upper_piece_split(g: &dyn Target, a: f64, b: f64, depth: usize, out: &mut Vec<LinearPiece>) -> Result<()> {
    match upper_piece(g, a, b) {
        Ok(p) => {
            out.push(p);
            Ok(())
        }
        Err(Error::Convexity { .. }) if depth < 6 => {
            let m = 0.5 * (a + b);
            upper_piece_split(g, a, m, depth + 1, out)?;
            upper_piece_split(g, m, b, depth + 1, out)
        }
        Err(e) => Err(e),
    }
}

/// Upper-bound ranges grow by this ratio until the analytic tail is below `TAIL_REL` of the total.
const EXT_RATIO: f64 = 1.5;
const TAIL_REL: f64 = 1e-6;
const EXT_MAX_STEPS: usize = 400;

/// PLA upper bound on the S2 integral, including an analytic Gaussian tail majorant.
pub fn s2_upper(ds_norm: f64, params: &NoiseParams, div: &Division) -> Result<f64> {
    check_ds(ds_norm)?;
    check_division(div, DivisionTarget::J1J2, params, ds_norm)?;
    let c2 = s2_prefactor(params);
    if c2 == 0.0 {
        return Ok(0.0);
    }
    let d = ds_norm;
    let g2 = params.gamma_g * params.gamma_g;
    let s = 8.0 * g2;
    let g = J1J2::new(params);
    let mut total = 0.0;
    for (a, b) in div.intervals() {
        let mut pieces = Vec::new();
        upper_piece_split(&g, a, b, 0, &mut pieces)?;
        total += pieces.iter().map(|p| gauss_piece_integral(p, d, s)).sum::<f64>();
    }
    let (lo, hi) = div.range();
    let mass = (2.0 * PI * g2).sqrt();
    // J1 J2 is even and decreasing in |x|, so g(edge) bounds it beyond the edge
    let left_tail = |l: f64| -> Result<f64> { Ok(g.value(l)? * mass * erfc_fn((l - d) / s.sqrt())) };
    let right_tail = |r: f64| -> Result<f64> { Ok(g.value(r)? * mass * erfc_fn((r + d) / s.sqrt())) };
    let (mut l, mut r) = (-lo, hi);
    let mut steps = 0;
    loop {
        let (tl, tr) = (left_tail(l)?, right_tail(r)?);
        if tl + tr <= TAIL_REL * total.abs() || steps >= EXT_MAX_STEPS {
            total += tl + tr;
            break;
        }
        let mut pieces = Vec::new();
        if tl > 0.5 * (tl + tr) * 1e-3 {
            upper_piece_split(&g, -l * EXT_RATIO, -l, 0, &mut pieces)?;
            l *= EXT_RATIO;
        }
        if tr > 0.5 * (tl + tr) * 1e-3 {
            upper_piece_split(&g, r, r * EXT_RATIO, 0, &mut pieces)?;
            r *= EXT_RATIO;
        }
        total += pieces.iter().map(|p| gauss_piece_integral(p, d, s)).sum::<f64>();
        steps += 1;
    }
    Ok(c2 * total)
}

/// Jensen lower bound on the S2 integral:
/// `8 pi gg^2 sqrt(rho (1-rho) k3 k4) (1 + (8 gg^2 + d^2) / c0)^{-(alpha+2)/4}`.
pub fn s2_lower(ds_norm: f64, params: &NoiseParams) -> f64 {
    let k = norm_constants(params);
    let g2 = params.gamma_g * params.gamma_g;
    let beta = 0.25 * (params.alpha + 2.0);
    8.0 * PI
        * g2
        * (params.rho * (1.0 - params.rho) * k.k3 * k.k4).sqrt()
        * (1.0 + (8.0 * g2 + ds_norm * ds_norm) / params.c0()).powf(-beta)
}

/// `G_p(x) = int_0^x t^p (c0 + t^2)^{-alpha/4} dt`, via
/// `x^{p+1}/(p+1) c0^{-alpha/4} 2F1(alpha/4, (p+1)/2; (p+3)/2; -x^2/c0)`.
pub fn g_p(p: u32, x: f64, params: &NoiseParams) -> Result<f64> {
    if p > 2 {
        return Err(Error::InvalidParam(format!("G_p defined here for p <= 2, got {p}")));
    }
    let c0 = params.c0();
    let m = 0.25 * params.alpha;
    if p == 1 {
        return Ok(((c0 + x * x).powf(1.0 - m) - c0.powf(1.0 - m)) / (2.0 - 2.0 * m));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let pf = p as f64;
    let f = gauss_2f1(m, 0.5 * (pf + 1.0), 0.5 * (pf + 3.0), -x * x / c0)?;
    Ok(x.powi(p as i32 + 1) / (pf + 1.0) * c0.powf(-m) * f)
}

/// `int_a^b (p1 x + q1)(p2 x + q2) J1(x - d) dx`.
fn j1_product_integral(p1: &LinearPiece, p2: &LinearPiece, d: f64, params: &NoiseParams) -> Result<f64> {
    let (a, b) = (p1.lo - d, p1.hi - d);
    let q1 = p1.q + p1.p * d;
    let q2 = p2.q + p2.p * d;
    let dg = |p: u32| -> Result<f64> { Ok(g_p(p, b, params)? - g_p(p, a, params)?) };
    Ok(p1.p * p2.p * dg(2)? + (p1.p * q2 + q1 * p2.p) * dg(1)? + q1 * q2 * dg(0)?)
}

fn s3_upper_interval(
    comps: (&dyn Target, &dyn Target),
    a: f64,
    b: f64,
    d: f64,
    params: &NoiseParams,
    depth: usize,
) -> Result<f64> {
    let pieces = upper_piece(comps.0, a, b).and_then(|u| Ok((u, upper_piece(comps.1, a, b)?)));
    match pieces {
        Ok((u1, u2)) => j1_product_integral(&u1, &u2, d, params),
        Err(Error::Convexity { .. }) if depth < 6 => {
            let m = 0.5 * (a + b);
            Ok(s3_upper_interval(comps, a, m, d, params, depth + 1)?
                + s3_upper_interval(comps, m, b, d, params, depth + 1)?)
        }
        Err(e) => Err(e),
    }
}

/// Majorant of the S3 integrand mass on `|x| >= r` (for `r > d`), without the prefactor.
fn s3_tail(j3: &J3, r: f64, params: &NoiseParams) -> Result<f64> {
    let a = params.alpha;
    let d = j3.d;
    Ok(j3.tail_max(r)? * (1.0 + (1.0 - d / r).powf(-0.5 * a)) * r.powf(-a) / a)
}

/// PLA upper bound on the S3 integral, including an analytic power-tail majorant.
pub fn s3_upper(ds_norm: f64, params: &NoiseParams, div: &Division) -> Result<f64> {
    check_ds(ds_norm)?;
    check_division(div, DivisionTarget::J3, params, ds_norm)?;
    let c3 = s3_prefactor(params)?;
    if c3 == 0.0 {
        return Ok(0.0);
    }
    let d = ds_norm;
    let p = tail_power(params);
    let j3 = J3::new(params, d);
    let comps: (&dyn Target, &dyn Target) = (&p, &j3);
    let mut total = 0.0;
    for (a, b) in div.intervals() {
        total += s3_upper_interval(comps, a, b, d, params, 0)?;
    }
    let (lo, hi) = div.range();
    let mut r = (-lo).min(hi);
    let (mut l_edge, mut r_edge) = (lo, hi);
    if r <= d {
        return Err(Error::InvalidParam(format!("S3 range {r} does not extend past the separation {d}")));
    }
    let mut steps = 0;
    loop {
        let tail = s3_tail(&j3, r, params)?;
        if tail <= TAIL_REL * total.abs() || steps >= EXT_MAX_STEPS {
            total += tail;
            break;
        }
        let (nl, nr) = (l_edge * EXT_RATIO, r_edge * EXT_RATIO);
        total += s3_upper_interval(comps, nl, l_edge, d, params, 0)?;
        total += s3_upper_interval(comps, r_edge, nr, d, params, 0)?;
        l_edge = nl;
        r_edge = nr;
        r = (-l_edge).min(r_edge);
        steps += 1;
    }
    Ok(c3 * total)
}

fn s3_lower_interval(
    comps: (&dyn Target, &dyn Target),
    a: f64,
    b: f64,
    d: f64,
    params: &NoiseParams,
    depth: usize,
) -> Result<f64> {
    let pieces = lower_piece(comps.0, a, b).and_then(|u| Ok((u, lower_piece(comps.1, a, b)?)));
    let split = |depth: usize| -> Result<f64> {
        let m = 0.5 * (a + b);
        Ok(s3_lower_interval(comps, a, m, d, params, depth + 1)?
            + s3_lower_interval(comps, m, b, d, params, depth + 1)?)
    };
    match pieces {
        Ok((l1, l2)) => {
            // a product of minorants is a minorant only while both are nonnegative
            let nonneg = [l1.eval(a), l1.eval(b), l2.eval(a), l2.eval(b)].iter().all(|v| *v >= 0.0);
            if nonneg {
                Ok(j1_product_integral(&l1, &l2, d, params)?.max(0.0))
            } else if depth < 4 {
                split(depth)
            } else {
                Ok(0.0)
            }
        }
        Err(Error::Convexity { .. }) if depth < 6 => split(depth),
        Err(e) => Err(e),
    }
}

/// PLA lower bound on the S3 integral; nothing is added outside the division range.
pub fn s3_lower(ds_norm: f64, params: &NoiseParams, div: &Division) -> Result<f64> {
    check_ds(ds_norm)?;
    check_division(div, DivisionTarget::J3, params, ds_norm)?;
    let c3 = s3_prefactor(params)?;
    if c3 == 0.0 {
        return Ok(0.0);
    }
    let p = tail_power(params);
    let j3 = J3::new(params, ds_norm);
    let mut total = 0.0;
    for (a, b) in div.intervals() {
        total += s3_lower_interval((&p, &j3), a, b, ds_norm, params, 0)?;
    }
    Ok(c3 * total)
}

/// Triangle-inequality bounds `(lower, upper)` on the S2 integral.
pub fn trivial_bounds(ds_norm: f64, params: &NoiseParams) -> Result<(f64, f64)> {
    check_ds(ds_norm)?;
    params.validate()?;
    let k = norm_constants(params);
    let cf = PI * (params.rho * (1.0 - params.rho) * k.k3 * k.k4).sqrt();
    if cf == 0.0 {
        return Ok((0.0, 0.0));
    }
    let c0 = params.c0();
    let beta = 0.25 * (params.alpha + 2.0);
    let s = 8.0 * params.gamma_g * params.gamma_g;
    let x = ds_norm * ds_norm / s;
    let spec = AccuracySpec::default();
    let upper = cf
        * c0.powf(beta)
        * s.powf(1.0 - beta)
        * (gamma_fn(1.0 - beta)? * (-x).exp()
            + x.powf(1.0 - beta) * kummer_m_scaled(1.0 - beta, 2.0 - beta, x, &spec)? / (1.0 - beta));
    let a = 1.0 + 2.0 * ds_norm * ds_norm / c0;
    let lower = cf
        * (0.5 * c0).powf(beta)
        * (0.5 * a * c0).powf(1.0 - beta)
        * tricomi_u(1.0, 2.0 - beta, a * c0 / (2.0 * s))?;
    Ok((lower, upper))
}

/// `I1 + sqrt(2) S2_up + S3_up`, clamped to 1.
pub fn z_upper(ds_norm: f64, params: &NoiseParams, divs: &Divisions) -> Result<f64> {
    let v = s1_exact(ds_norm, params)
        + SQRT_2 * s2_upper(ds_norm, params, &divs.s2)?
        + s3_upper(ds_norm, params, &divs.s3)?;
    Ok(v.min(1.0))
}

/// Which term of the lower-bound maximum was active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZBranch {
    /// Pure Gaussian noise: the closed form is exact.
    Exact,
    /// The impulsive term alone.
    Impulsive,
    /// The weighted Jensen combination.
    Weighted,
}

impl ZBranch {
    pub fn tag(self) -> &'static str {
        match self {
            ZBranch::Exact => "exact",
            ZBranch::Impulsive => "s3",
            ZBranch::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZLower {
    pub value: f64,
    pub branch: ZBranch,
}

fn weighted_jensen(s1: f64, s2_lo: f64, s3_lo: f64, rho: f64, eps: f64) -> ZLower {
    if rho == 1.0 {
        return ZLower {
            value: s1.min(1.0),
            branch: ZBranch::Exact,
        };
    }
    let w3 = 1.0 / (rho + eps);
    let weighted = if rho == 0.0 {
        // zero-weight terms dropped: only S3 is present
        s3_lo
    } else {
        (s1 + s2_lo + w3.sqrt() * s3_lo) / (2.0 + w3).sqrt()
    };
    if s3_lo >= weighted {
        ZLower {
            value: s3_lo.min(1.0),
            branch: ZBranch::Impulsive,
        }
    } else {
        ZLower {
            value: weighted.min(1.0),
            branch: ZBranch::Weighted,
        }
    }
}

/// `max(S3_lo, (2 + w3)^{-1/2} (I1 + S2_lo + sqrt(w3) S3_lo))` with `w3 = (rho + eps)^{-1}`.
pub fn z_lower(ds_norm: f64, params: &NoiseParams, divs: &Divisions, eps: f64) -> Result<ZLower> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParam(format!("eps {eps} must be > 0")));
    }
    let s1 = s1_exact(ds_norm, params);
    let s3 = s3_lower(ds_norm, params, &divs.s3)?;
    Ok(weighted_jensen(s1, s2_lower(ds_norm, params), s3, params.rho, eps))
}

/// Plain Jensen lower bound `(I1 + sqrt(2) S2_lo + S3_lo) / 2`.
pub fn z_lower_plain_jensen(ds_norm: f64, params: &NoiseParams, divs: &Divisions) -> Result<f64> {
    let s1 = s1_exact(ds_norm, params);
    let s3 = s3_lower(ds_norm, params, &divs.s3)?;
    Ok((0.5 * (s1 + SQRT_2 * s2_lower(ds_norm, params) + s3)).min(1.0))
}

/// Every bound for one separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBounds {
    pub ds_norm: f64,
    pub i1: f64,
    pub s2_lower: f64,
    pub s2_upper: f64,
    pub s3_lower: f64,
    pub s3_upper: f64,
    pub z_lower: f64,
    pub z_upper: f64,
    pub branch: ZBranch,
    pub z_lower_plain: f64,
    pub s2_trivial: (f64, f64),
    pub z_upper_trivial: f64,
    pub z_lower_trivial: f64,
}

pub fn pair_bounds(ds_norm: f64, params: &NoiseParams, cfg: &BoundsConfig) -> Result<PairBounds> {
    check_ds(ds_norm)?;
    params.validate()?;
    let divs = Divisions::build(params, ds_norm, cfg)?;
    pair_bounds_with(ds_norm, params, &divs, cfg.eps_w)
}

pub fn pair_bounds_with(ds_norm: f64, params: &NoiseParams, divs: &Divisions, eps: f64) -> Result<PairBounds> {
    let i1 = s1_exact(ds_norm, params);
    let s2_lo = s2_lower(ds_norm, params);
    let s2_up = s2_upper(ds_norm, params, &divs.s2)?;
    let s3_lo = s3_lower(ds_norm, params, &divs.s3)?;
    let s3_up = s3_upper(ds_norm, params, &divs.s3)?;
    let zl = weighted_jensen(i1, s2_lo, s3_lo, params.rho, eps);
    let triv = trivial_bounds(ds_norm, params)?;
    Ok(PairBounds {
        ds_norm,
        i1,
        s2_lower: s2_lo,
        s2_upper: s2_up,
        s3_lower: s3_lo,
        s3_upper: s3_up,
        z_lower: zl.value,
        z_upper: (i1 + SQRT_2 * s2_up + s3_up).min(1.0),
        branch: zl.branch,
        z_lower_plain: (0.5 * (i1 + SQRT_2 * s2_lo + s3_lo)).min(1.0),
        s2_trivial: triv,
        z_upper_trivial: (i1 + SQRT_2 * triv.1 + s3_up).min(1.0),
        z_lower_trivial: weighted_jensen(i1, triv.0, s3_lo, params.rho, eps).value,
    })
}

/// One row of a bounds sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub params: NoiseParams,
    pub bounds: PairBounds,
    pub z_oracle: Option<f64>,
}

pub const BOUND_COLUMNS: [&str; 14] = [
    "alpha", "rho", "gamma_g", "gamma_s", "ds_norm", "i1", "s2_lo", "s2_up", "s3_lo", "s3_up", "z_lo", "z_up",
    "z_oracle", "branch_tag",
];

impl BoundReport {
    pub fn csv_header() -> String {
        csv_line(BOUND_COLUMNS)
    }

    pub fn csv_row(&self) -> String {
        let b = &self.bounds;
        let p = &self.params;
        let mut f: Vec<String> = [
            p.alpha, p.rho, p.gamma_g, p.gamma_s, b.ds_norm, b.i1, b.s2_lower, b.s2_upper, b.s3_lower, b.s3_upper,
            b.z_lower, b.z_upper,
        ]
        .iter()
        .map(|v| fmt12(*v))
        .collect();
        f.push(self.z_oracle.map(fmt12).unwrap_or_else(|| "nan".into()));
        f.push(b.branch.tag().into());
        csv_line(f)
    }
}

/// `-log2(sum p^2 + sum_{k<l} 2 p_k p_l z(|s_k - s_l|))`, evaluating `z` once per distinct distance.
pub fn cutoff_rate_with<F>(c: &Constellation, mut z: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    c.check_simplex()?;
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut inner: f64 = c.probs.iter().map(|p| p * p).sum();
    for k in 0..c.len() {
        for l in (k + 1)..c.len() {
            let w = 2.0 * c.probs[k] * c.probs[l];
            if w == 0.0 {
                continue;
            }
            let dx = c.points[k][0] - c.points[l][0];
            let dy = c.points[k][1] - c.points[l][1];
            let d = dx.hypot(dy);
            let v = match cache.get(&d.to_bits()) {
                Some(v) => *v,
                None => {
                    let v = z(d)?;
                    cache.insert(d.to_bits(), v);
                    v
                }
            };
            inner += w * v;
        }
    }
    Ok(-inner.min(1.0).log2())
}

/// Cutoff-rate lower bound (from `z_upper`).
pub fn cr_lower(c: &Constellation, params: &NoiseParams, cfg: &BoundsConfig) -> Result<f64> {
    cutoff_rate_with(c, |d| {
        let divs = Divisions::build(params, d, cfg)?;
        z_upper(d, params, &divs)
    })
}

/// Cutoff-rate upper bound (from `z_lower`).
pub fn cr_upper(c: &Constellation, params: &NoiseParams, cfg: &BoundsConfig) -> Result<f64> {
    cutoff_rate_with(c, |d| {
        let divs = Divisions::build(params, d, cfg)?;
        Ok(z_lower(d, params, &divs, cfg.eps_w)?.value)
    })
}

/// All cutoff-rate bound variants of one constellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrBounds {
    pub lower: f64,
    pub upper: f64,
    pub upper_plain_jensen: f64,
    pub lower_trivial: f64,
    pub upper_trivial: f64,
}

pub fn cr_bounds(c: &Constellation, params: &NoiseParams, cfg: &BoundsConfig) -> Result<CrBounds> {
    let mut cache: HashMap<u64, PairBounds> = HashMap::new();
    let mut get = |d: f64| -> Result<PairBounds> {
        if let Some(b) = cache.get(&d.to_bits()) {
            return Ok(*b);
        }
        let b = pair_bounds(d, params, cfg)?;
        cache.insert(d.to_bits(), b);
        Ok(b)
    };
    Ok(CrBounds {
        lower: cutoff_rate_with(c, |d| Ok(get(d)?.z_upper))?,
        upper: cutoff_rate_with(c, |d| Ok(get(d)?.z_lower))?,
        upper_plain_jensen: cutoff_rate_with(c, |d| Ok(get(d)?.z_lower_plain))?,
        lower_trivial: cutoff_rate_with(c, |d| Ok(get(d)?.z_upper_trivial))?,
        upper_trivial: cutoff_rate_with(c, |d| Ok(get(d)?.z_lower_trivial))?,
    })
}

/// Upper-bound surrogate `gauss_amp exp(-d^2 / gauss_scale) + rho1 d + rho0` on `[0, ds_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateCoeffs {
    pub rho1: f64,
    pub rho0: f64,
    pub gauss_amp: f64,
    pub gauss_scale: f64,
    pub valid_range: (f64, f64),
}

impl SurrogateCoeffs {
    /// Pure Gaussian surrogate (no impulsive part), exact for `rho = 1`.
    pub fn gaussian(params: &NoiseParams, ds_max: f64) -> Self {
        let g2 = params.gamma_g * params.gamma_g;
        Self {
            rho1: 0.0,
            rho0: 0.0,
            gauss_amp: 4.0 * norm_constants(params).k3 * PI * g2 * params.rho,
            gauss_scale: 16.0 * g2,
            valid_range: (0.0, ds_max),
        }
    }

    /// Unclamped surrogate value.
    pub fn raw(&self, d: f64) -> f64 {
        self.gauss_amp * (-d * d / self.gauss_scale).exp() + self.rho1 * d + self.rho0
    }

    /// `min(1, raw(d))`, an error outside `valid_range`.
    pub fn z_tilde(&self, d: f64) -> Result<f64> {
        let (lo, hi) = self.valid_range;
        if d < lo || d > hi * (1.0 + 1e-12) || d.is_nan() {
            return Err(Error::Range { ds: d, max: hi });
        }
        Ok(self.raw(d).min(1.0))
    }

    /// `kappa(d)` with `grad_s z_tilde(|s - t|) = kappa(d) (s - t)`; zero where clamped.
    pub fn kappa(&self, d: f64) -> f64 {
        if self.raw(d) > 1.0 {
            return 0.0;
        }
        let g = -2.0 * self.gauss_amp / self.gauss_scale * (-d * d / self.gauss_scale).exp();
        if d > 0.0 {
            g + self.rho1 / d
        } else {
            g
        }
    }

    /// `kappa'(d)`.
    pub fn kappa_prime(&self, d: f64) -> f64 {
        if self.raw(d) > 1.0 {
            return 0.0;
        }
        let g = 4.0 * self.gauss_amp * d / (self.gauss_scale * self.gauss_scale) * (-d * d / self.gauss_scale).exp();
        if d > 0.0 {
            g - self.rho1 / (d * d)
        } else {
            g
        }
    }
}

/// Quantity the surrogate is fitted to dominate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SurrogateTarget {
    /// The quadrature Bhattacharyya coefficient.
    #[default]
    Oracle,
    /// `min(1, z_upper)` from the piecewise-linear bounds.
    UpperBound,
}

/// Fits the surrogate on an `n`-cell grid over `[0, ds_max]` (see [`surrogate_grid`]).
///
/// With the target `T(d)` nonincreasing, on a cell `[d_i, d_{i+1}]` the remainder
/// `T(d) - rho e^{-d^2/16gg^2}` is at most `B_i = T(d_i) - rho e^{-d_{i+1}^2/16gg^2}`.
/// Every line above `B_i` at both ends of every cell gives a dominating surrogate;
/// among the upper-hull edges the one minimizing `sum_w w min(1, z_tilde(d))` over
/// the weighted distances `pairs` is kept. Values above 1 are clamped by
/// [`SurrogateCoeffs::z_tilde`].
pub fn surrogate_coeffs(
    params: &NoiseParams,
    cfg: &BoundsConfig,
    ds_max: f64,
    n: usize,
    target: SurrogateTarget,
    pairs: &[(f64, f64)],
) -> Result<SurrogateCoeffs> {
    params.validate()?;
    if !(ds_max > 0.0) || !ds_max.is_finite() || n < 1 {
        return Err(Error::InvalidParam(format!("surrogate range {ds_max} with {n} cells")));
    }
    let mut c = SurrogateCoeffs::gaussian(params, ds_max);
    if c.gauss_amp >= 1.0 {
        return Ok(c);
    }
    let grid = surrogate_grid(c.gauss_scale.sqrt(), ds_max, n);
    let spec = QuadSpec::fixture(params);
    let t: Vec<f64> = grid
        .iter()
        .map(|d| match target {
            SurrogateTarget::Oracle => Ok((bhattacharyya([*d, 0.0], params, &spec)? + SURROGATE_MARGIN).min(1.0)),
            SurrogateTarget::UpperBound => Ok(z_upper(*d, params, &Divisions::build(params, *d, cfg)?)?.min(1.0)),
        })
        .collect::<Result<_>>()?;
    let (rho1, rho0) = surrogate_line(&c, &cell_constraints(&c, &grid, &t), pairs);
    c.rho1 = rho1;
    c.rho0 = rho0;
    Ok(c)
}

/// `n` cells over `[0, ds_max]`: half uniform up to `2 sqrt(gauss_scale)`, the rest
/// geometric beyond it.
pub(crate) fn surrogate_grid(scale: f64, ds_max: f64, n: usize) -> Vec<f64> {
    let knee = 2.0 * scale;
    if ds_max <= knee || n < 2 {
        return (0..=n).map(|i| ds_max * i as f64 / n as f64).collect();
    }
    let nu = n / 2;
    let ng = n - nu;
    let ratio = (ds_max / knee).powf(1.0 / ng as f64);
    let mut grid: Vec<f64> = (0..=nu).map(|i| knee * i as f64 / nu as f64).collect();
    grid.extend((1..ng).map(|i| knee * ratio.powi(i as i32)));
    grid.push(ds_max);
    grid
}

/// Absolute slack added to oracle values, well above the quadrature error.
const SURROGATE_MARGIN: f64 = 1e-9;

/// `(d, B_i)` at both ends of every cell.
pub(crate) fn cell_constraints(c: &SurrogateCoeffs, grid: &[f64], target: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(2 * grid.len());
    for i in 0..grid.len() - 1 {
        let d1 = grid[i + 1];
        let b = target[i] - c.gauss_amp * (-d1 * d1 / c.gauss_scale).exp();
        pts.push((grid[i], b));
        pts.push((d1, b));
    }
    pts
}

/// Upper concave hull of `pts`, sorted by abscissa.
fn upper_hull(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = pts.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    sorted.dedup_by(|b, a| a.0 == b.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for p in sorted {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// `(slope, intercept)` of the upper-hull edge minimizing the clamped weighted objective.
pub(crate) fn surrogate_line(c: &SurrogateCoeffs, pts: &[(f64, f64)], pairs: &[(f64, f64)]) -> (f64, f64) {
    let hull = upper_hull(pts);
    let top = hull.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut best = (0.0, top);
    let mut best_obj = f64::INFINITY;
    let mut consider = |k: f64, b: f64| {
        let obj: f64 = pairs
            .iter()
            .map(|(d, w)| w * (c.gauss_amp * (-d * d / c.gauss_scale).exp() + k * d + b).min(1.0))
            .sum();
        if obj < best_obj {
            best = (k, b);
            best_obj = obj;
        }
    };
    if hull.len() < 2 {
        consider(0.0, top);
    }
    for e in hull.windows(2) {
        let k = (e[1].1 - e[0].1) / (e[1].0 - e[0].0);
        consider(k, e[0].1 - k * e[0].0);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg1() -> NoiseParams {
        NoiseParams::reference_configs()[0]
    }

    #[test]
    fn s1_closed_form() {
        let p = cfg1();
        assert!((s1_exact(0.0, &p) - 0.2).abs() < 1e-15);
        assert!((s1_exact(4.0, &p) - 0.2 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_mixtures_vanish() {
        for rho in [0.0, 1.0] {
            let p = cfg1().with_rho(rho);
            assert_eq!(s2_lower(3.0, &p), 0.0);
            assert_eq!(trivial_bounds(3.0, &p).unwrap(), (0.0, 0.0));
            let div = build_division_with(DivisionTarget::J1J2, &p, 3.0, &DivisionConfig::s2_default()).unwrap();
            assert_eq!(s2_upper(3.0, &p, &div).unwrap(), 0.0);
        }
        let p = cfg1().with_rho(1.0);
        let div = build_division_with(DivisionTarget::J3, &p, 3.0, &DivisionConfig::s3_default()).unwrap();
        assert_eq!(s3_upper(3.0, &p, &div).unwrap(), 0.0);
        assert_eq!(s3_lower(3.0, &p, &div).unwrap(), 0.0);
    }

    #[test]
    fn g_p_derivative_matches_integrand() {
        let p = NoiseParams::reference_configs()[1];
        let c0 = p.c0();
        for k in 0..3u32 {
            for x in [-40.0f64, -2.0, 0.3, 1.7, 9.0, 1e4] {
                let h = 1e-4 * (1.0f64).max(x.abs());
                let fd = (g_p(k, x + h, &p).unwrap() - g_p(k, x - h, &p).unwrap()) / (2.0 * h);
                let ex = x.powi(k as i32) * (c0 + x * x).powf(-0.25 * p.alpha);
                assert!((fd - ex).abs() <= 1e-5 * ex.abs().max(1e-12), "p={k} x={x}: {fd} vs {ex}");
            }
        }
    }

    #[test]
    fn erf_difference_is_stable() {
        assert!((erf_diff(6.0, 7.0) - (erfc_fn(6.0) - erfc_fn(7.0))).abs() < 1e-30);
        assert!((erf_diff(-1.0, 1.0) - 2.0 * erf_fn(1.0)).abs() < 1e-15);
        assert!(erf_diff(-7.0, -6.0) > 0.0);
    }

    #[test]
    fn mismatched_division_is_rejected() {
        let p = cfg1();
        let div = build_division_with(DivisionTarget::J1J2, &p, 1.0, &DivisionConfig::s2_default()).unwrap();
        assert!(s2_upper(2.0, &p, &div).is_err());
        assert!(s3_upper(1.0, &p, &div).is_err());
    }

    #[test]
    fn surrogate_grid_covers_the_range() {
        let g = surrogate_grid(4.0, 100.0, 8);
        assert_eq!(g.len(), 9);
        assert_eq!((g[0], g[4], g[8]), (0.0, 8.0, 100.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(surrogate_grid(4.0, 6.0, 3), vec![0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn surrogate_line_is_a_hull_edge() {
        let c = SurrogateCoeffs {
            rho1: 0.0,
            rho0: 0.0,
            gauss_amp: 0.0,
            gauss_scale: 16.0,
            valid_range: (0.0, 4.0),
        };
        let pts = [(0.0, 0.8), (1.0, 0.95), (2.0, 0.6), (3.0, 0.3), (4.0, 0.1)];
        assert_eq!(upper_hull(&pts), vec![(0.0, 0.8), (1.0, 0.95), (4.0, 0.1)]);
        let (k, b) = surrogate_line(&c, &pts, &[(3.0, 1.0)]);
        assert!(pts.iter().all(|(x, y)| k * x + b >= y - 1e-12));
        assert!((k * 3.0 + b - (0.95 - 2.0 * 0.85 / 3.0)).abs() < 1e-12);
        let (k, b) = surrogate_line(&c, &pts, &[(0.0, 1.0)]);
        assert!((b - 0.8).abs() < 1e-12 && (k - 0.15).abs() < 1e-12);
    }

    #[test]
    fn report_row_has_every_column() {
        let p = cfg1();
        let b = pair_bounds(4.0, &p, &BoundsConfig::default()).unwrap();
        let row = BoundReport {
            params: p,
            bounds: b,
            z_oracle: None,
        }
        .csv_row();
        assert_eq!(row.trim_end().split(',').count(), BOUND_COLUMNS.len());
        assert!(row.trim_end().ends_with(b.branch.tag()));
    }
}
