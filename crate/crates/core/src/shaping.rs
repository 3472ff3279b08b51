//! Joint probabilistic and geometric constellation shaping.
//!
//! The objective is the inner sum of the cutoff-rate lower bound with every
//! `Z(k, l)` replaced by the surrogate `z_tilde(|s_k - s_l|)`:
//! `J = sum_j p_j^2 + sum_{k != l} p_k p_l z_tilde`. Each iteration solves the
//! probability QP exactly, then takes one projected gradient step on the points.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{surrogate_coeffs, BoundsConfig, SurrogateCoeffs, SurrogateTarget};
use crate::error::{Error, Result};
use crate::noise::NoiseParams;
use crate::report::{csv_line, fmt12};

/// Points in the plane with a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<[f64; 2]>,
    pub probs: Vec<f64>,
}

impl Constellation {
    pub fn new(points: Vec<[f64; 2]>, probs: Vec<f64>) -> Result<Self> {
        if points.len() != probs.len() || points.is_empty() {
            return Err(Error::InvalidParam(format!(
                "{} points but {} probabilities",
                points.len(),
                probs.len()
            )));
        }
        let c = Self { points, probs };
        c.check_simplex()?;
        Ok(c)
    }

    pub fn uniform(points: Vec<[f64; 2]>) -> Self {
        let m = points.len();
        Self {
            points,
            probs: vec![1.0 / m as f64; m],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check_simplex(&self) -> Result<()> {
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 || self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParam(format!("probabilities not on the simplex (sum {s})")));
        }
        Ok(())
    }

    /// `sum_j p_j |s_j|^2`.
    pub fn power(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.probs)
            .map(|(s, p)| p * norm2(*s))
            .sum()
    }

    /// Number of points with probability above `ACTIVE_THRESHOLD`.
    pub fn active_points(&self) -> usize {
        self.probs.iter().filter(|p| **p > ACTIVE_THRESHOLD).count()
    }

    /// Largest pairwise distance.
    pub fn max_distance(&self) -> f64 {
        let mut m = 0.0f64;
        for k in 0..self.len() {
            for l in (k + 1)..self.len() {
                m = m.max(dist(self.points[k], self.points[l]));
            }
        }
        m
    }

    /// Smallest distance between distinct points, 0 if there is none.
    pub fn min_distance(&self) -> f64 {
        let mut m = f64::INFINITY;
        for k in 0..self.len() {
            for l in (k + 1)..self.len() {
                let d = dist(self.points[k], self.points[l]);
                if d > 0.0 {
                    m = m.min(d);
                }
            }
        }
        if m.is_finite() {
            m
        } else {
            0.0
        }
    }

    /// `index,x,y,prob` rows with a header.
    pub fn dump(&self) -> String {
        let mut out = csv_line(["index", "x", "y", "prob"]);
        for (j, (s, p)) in self.points.iter().zip(&self.probs).enumerate() {
            out.push_str(&csv_line([j.to_string(), fmt12(s[0]), fmt12(s[1]), fmt12(*p)]));
        }
        out
    }

    /// Parses the format written by [`Constellation::dump`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut probs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected 4 fields, found {}", f.len()),
                });
            }
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("not a number: {s}"),
                })
            };
            points.push([num(f[1])?, num(f[2])?]);
            probs.push(num(f[3])?);
        }
        let s: f64 = probs.iter().sum();
        if s > 0.0 && (s - 1.0).abs() <= 1e-9 {
            probs.iter_mut().for_each(|p| *p /= s);
        }
        Self::new(points, probs)
    }
}

pub const ACTIVE_THRESHOLD: f64 = 1e-3;

fn norm2(s: [f64; 2]) -> f64 {
    s[0] * s[0] + s[1] * s[1]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Square `m`-point layout (`m` a perfect square, or 4) scaled to average power `p0`, uniform probabilities.
pub fn square_layout(m: usize, p0: f64) -> Result<Constellation> {
    let side = (m as f64).sqrt().round() as usize;
    if side * side != m || m < 4 {
        return Err(Error::InvalidParam(format!("square layout needs a perfect square >= 4, got {m}")));
    }
    if !(p0 > 0.0) {
        return Err(Error::InvalidParam(format!("power budget {p0} must be > 0")));
    }
    let mut pts = Vec::with_capacity(m);
    for i in 0..side {
        for k in 0..side {
            pts.push([2.0 * k as f64 - (side - 1) as f64, (side - 1) as f64 - 2.0 * i as f64]);
        }
    }
    let c = Constellation::uniform(pts);
    let scale = (p0 / c.power()).sqrt();
    Ok(Constellation::uniform(c.points.iter().map(|s| [s[0] * scale, s[1] * scale]).collect()))
}

pub fn qpsk(p0: f64) -> Result<Constellation> {
    square_layout(4, p0)
}

pub fn qam16(p0: f64) -> Result<Constellation> {
    square_layout(16, p0)
}

/// `m` points drawn uniformly in the disc of radius `sqrt(p0)` with uniform probabilities.
pub fn random_layout(m: usize, p0: f64, seed: u64) -> Result<Constellation> {
    if m < 1 || !(p0 > 0.0) {
        return Err(Error::InvalidParam(format!("random layout with m = {m}, P0 = {p0}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = p0.sqrt();
    let pts = (0..m)
        .map(|_| {
            let r = r0 * rng.gen::<f64>().sqrt();
            let th = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            [r * th.cos(), r * th.sin()]
        })
        .collect();
    Ok(Constellation::uniform(pts))
}

/// Symmetric matrix with unit diagonal and `z_tilde(|s_k - s_l|)` (capped at 1) off the diagonal.
pub fn z_tilde_matrix(c: &Constellation, coeffs: &SurrogateCoeffs) -> Result<DMatrix<f64>> {
    let m = c.len();
    let mut z = DMatrix::identity(m, m);
    for k in 0..m {
        for l in (k + 1)..m {
            let v = coeffs.z_tilde(dist(c.points[k], c.points[l]))?.min(1.0);
            z[(k, l)] = v;
            z[(l, k)] = v;
        }
    }
    Ok(z)
}

/// `p^T Z p = sum p^2 + sum_{k != l} p_k p_l z_kl`.
pub fn inner_objective(probs: &[f64], zt: &DMatrix<f64>) -> f64 {
    let p = DVector::from_column_slice(probs);
    p.dot(&(zt * &p))
}

/// Euclidean projection onto the probability simplex (sorted-threshold construction).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projection onto the simplex intersected with `a . p <= b`, by bisection on the halfspace multiplier.
fn project_simplex_halfspace(v: &[f64], a: &[f64], b: f64) -> Vec<f64> {
    let dot = |p: &[f64]| p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
    let p = project_simplex(v);
    if dot(&p) <= b {
        return p;
    }
    let shifted = |lam: f64| -> Vec<f64> {
        let w: Vec<f64> = v.iter().zip(a).map(|(x, y)| x - lam * y).collect();
        project_simplex(&w)
    };
    let mut hi = 1.0;
    while dot(&shifted(hi)) > b && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dot(&shifted(mid)) > b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shifted(hi)
}

fn qp_lipschitz(zt: &DMatrix<f64>) -> f64 {
    // 2 * max absolute row sum bounds the Hessian norm of p^T Z p
    let mut m = 0.0f64;
    for i in 0..zt.nrows() {
        m = m.max(zt.row(i).iter().map(|x| x.abs()).sum::<f64>());
    }
    2.0 * m.max(1e-300)
}

/// Minimises `p^T Z p` over the simplex (optionally intersected with a power
/// halfspace) by accelerated projected gradient with monotone restarts.
fn solve_prob_qp(zt: &DMatrix<f64>, start: &[f64], power: Option<(&[f64], f64)>) -> Vec<f64> {
    let proj = |v: &[f64]| match power {
        Some((a, b)) => project_simplex_halfspace(v, a, b),
        None => project_simplex(v),
    };
    let step = 1.0 / qp_lipschitz(zt);
    let mut x = start.to_vec();
    let mut fx = inner_objective(&x, zt);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let yv = DVector::from_column_slice(&y);
        let g = zt * &yv * 2.0;
        let cand: Vec<f64> = y.iter().zip(g.iter()).map(|(a, b)| a - step * b).collect();
        let xn = proj(&cand);
        let fxn = inner_objective(&xn, zt);
        if fxn > fx {
            // restart from the last accepted point
            t = 1.0;
            let xv = DVector::from_column_slice(&x);
            let g = zt * &xv * 2.0;
            let cand: Vec<f64> = x.iter().zip(g.iter()).map(|(a, b)| a - step * b).collect();
            let xs = proj(&cand);
            let fxs = inner_objective(&xs, zt);
            if fxs >= fx {
                break;
            }
            let moved = xs.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            x = xs;
            fx = fxs;
            y = x.clone();
            if moved < 1e-15 {
                break;
            }
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = xn.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        y = xn.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / tn * (a - b)).collect();
        x = xn;
        fx = fxn;
        t = tn;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

/// Closed-form stationary point `Z^{-1} 1 / (1^T Z^{-1} 1)` of the
/// equality-constrained QP, projected onto the feasible set.
fn lagrange_candidate(zt: &DMatrix<f64>) -> Option<Vec<f64>> {
    let m = zt.nrows();
    let x = zt.clone().lu().solve(&DVector::from_element(m, 1.0))?;
    let s = x.sum();
    if !s.is_finite() || s == 0.0 {
        return None;
    }
    Some((x / s).iter().copied().collect())
}

/// Probability update on the simplex: exact minimiser of `p^T Z p`, warm
/// started from the better of the Lagrange closed form and `probs_prev`.
/// The objective never exceeds its value at `probs_prev`.
pub fn optimal_probs(zt: &DMatrix<f64>, probs_prev: &[f64]) -> Vec<f64> {
    optimal_probs_inner(zt, probs_prev, None)
}

/// As [`optimal_probs`], also keeping `sum_j p_j sq_norms_j <= p0`.
pub fn optimal_probs_with_power(zt: &DMatrix<f64>, probs_prev: &[f64], sq_norms: &[f64], p0: f64) -> Vec<f64> {
    optimal_probs_inner(zt, probs_prev, Some((sq_norms, p0)))
}

fn optimal_probs_inner(zt: &DMatrix<f64>, probs_prev: &[f64], power: Option<(&[f64], f64)>) -> Vec<f64> {
    let proj = |v: &[f64]| match power {
        Some((a, b)) => project_simplex_halfspace(v, a, b),
        None => project_simplex(v),
    };
    let f_prev = inner_objective(probs_prev, zt);
    let mut start = probs_prev.to_vec();
    if let Some(c) = lagrange_candidate(zt) {
        let c = proj(&c);
        if inner_objective(&c, zt) < f_prev {
            start = c;
        }
    }
    let p = solve_prob_qp(zt, &start, power);
    if inner_objective(&p, zt) <= f_prev {
        p
    } else {
        probs_prev.to_vec()
    }
}

/// `grad_{s_j} sum_{k<l} p_k p_l z_tilde(|s_k - s_l|)`; the kink of the linear
/// term at coincident points contributes the zero subgradient.
pub fn grad_points(c: &Constellation, coeffs: &SurrogateCoeffs) -> Vec<[f64; 2]> {
    let m = c.len();
    let mut g = vec![[0.0; 2]; m];
    for j in 0..m {
        for k in 0..m {
            if k == j {
                continue;
            }
            let w = c.probs[j] * c.probs[k];
            if w == 0.0 {
                continue;
            }
            let dx = [c.points[j][0] - c.points[k][0], c.points[j][1] - c.points[k][1]];
            let kap = coeffs.kappa(dx[0].hypot(dx[1]));
            g[j][0] += w * kap * dx[0];
            g[j][1] += w * kap * dx[1];
        }
    }
    g
}

/// Per-point projection onto `{s : p_j |s|^2 <= P0 - sum_{k != j} p_k |s_k|^2}`.
pub fn project_power(candidate: [f64; 2], j: usize, c: &Constellation, p0: f64) -> Result<[f64; 2]> {
    let others: f64 = c
        .points
        .iter()
        .zip(&c.probs)
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, (s, p))| p * norm2(*s))
        .sum();
    let residual = p0 - others;
    if residual < 0.0 {
        return Err(Error::InfeasibleResidual(residual));
    }
    let pj = c.probs[j];
    let n2 = norm2(candidate);
    if pj == 0.0 || pj * n2 <= residual {
        return Ok(candidate);
    }
    let f = (residual / pj).sqrt() / n2.sqrt();
    Ok([candidate[0] * f, candidate[1] * f])
}

/// Joint projection of all points onto `{sum_j p_j |s_j|^2 <= P0}`:
/// `s_j = c_j / (1 + lambda p_j)` with the multiplier from a monotone root solve.
pub fn project_power_joint(cands: &[[f64; 2]], probs: &[f64], p0: f64) -> Vec<[f64; 2]> {
    let pw = |lam: f64| -> f64 {
        cands
            .iter()
            .zip(probs)
            .map(|(s, p)| p * norm2(*s) / ((1.0 + lam * p) * (1.0 + lam * p)))
            .sum()
    };
    if pw(0.0) <= p0 {
        return cands.to_vec();
    }
    let mut hi = 1.0;
    while pw(hi) > p0 && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pw(mid) > p0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    cands
        .iter()
        .zip(probs)
        .map(|(s, p)| {
            let f = 1.0 / (1.0 + hi * p);
            [s[0] * f, s[1] * f]
        })
        .collect()
}

const LIPSCHITZ_GRID: usize = 512;

/// `sum_{k<l} p_k p_l (max(z_tilde(0), |kappa'(0)|) + sup_grid |kappa'(d)| d)`
/// over a 512-point grid of `(0, min(ds_max, 2 sqrt(P0 M))]`.
pub fn lipschitz_bound(coeffs: &SurrogateCoeffs, p0: f64, probs: &[f64]) -> f64 {
    lipschitz_bound_grid(coeffs, p0, probs, LIPSCHITZ_GRID)
}

pub fn lipschitz_bound_grid(coeffs: &SurrogateCoeffs, p0: f64, probs: &[f64], n: usize) -> f64 {
    let m = probs.len() as f64;
    let top = coeffs.valid_range.1.min(2.0 * (p0 * m).sqrt());
    let sup = (1..=n)
        .map(|i| {
            let d = top * i as f64 / n as f64;
            coeffs.kappa_prime(d).abs() * d
        })
        .fold(0.0f64, f64::max);
    let pair = coeffs.raw(0.0).min(1.0).abs().max(coeffs.kappa_prime(0.0).abs()) + sup;
    let s: f64 = probs.iter().sum();
    let sq: f64 = probs.iter().map(|p| p * p).sum();
    let weight = 0.5 * (s * s - sq);
    (pair * weight).max(1e-300)
}

fn simplex_residual(p: &[f64]) -> f64 {
    let s: f64 = p.iter().sum();
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    (s - 1.0).abs().max(-lo).max(0.0)
}

/// `sum_{k<l} p_k p_l z_tilde`, the part of the objective that depends on the points.
pub fn pair_objective(c: &Constellation, coeffs: &SurrogateCoeffs) -> Result<f64> {
    zbar(c, coeffs)
}

fn zbar(c: &Constellation, coeffs: &SurrogateCoeffs) -> Result<f64> {
    let zt = z_tilde_matrix(c, coeffs)?;
    let sq: f64 = c.probs.iter().map(|p| p * p).sum();
    Ok(0.5 * (inner_objective(&c.probs, &zt) - sq))
}

/// `max_j |(s_j - Proj(s - mu grad)_j)| / mu` with `mu = 1/L`.
pub fn stationarity_residual(c: &Constellation, coeffs: &SurrogateCoeffs, p0: f64) -> f64 {
    let mu = 1.0 / lipschitz_bound(coeffs, p0, &c.probs);
    let g = grad_points(c, coeffs);
    let cands: Vec<[f64; 2]> = c
        .points
        .iter()
        .zip(&g)
        .map(|(s, d)| [s[0] - mu * d[0], s[1] - mu * d[1]])
        .collect();
    let proj = project_power_joint(&cands, &c.probs, p0);
    c.points
        .iter()
        .zip(&proj)
        .map(|(s, q)| dist(*s, *q) / mu)
        .fold(0.0, f64::max)
}

/// How the point positions are updated within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// All points from a frozen snapshot, then one joint power projection.
    Jacobi,
    /// Points one at a time, each projected with [`project_power`].
    GaussSeidel,
}

/// Which variables the loop is allowed to change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    None,
    Probs,
    Points,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingConfig {
    pub p0: f64,
    /// Step size; 0 selects `1/L` automatically.
    pub mu: f64,
    pub i_max: usize,
    pub eps_stop: f64,
    pub eps_w: f64,
    pub bounds: BoundsConfig,
    /// Grid cells used to fit the surrogate.
    pub surrogate_cells: usize,
    pub target: SurrogateTarget,
    pub inner_steps: usize,
    pub mode: UpdateMode,
    pub freeze: Freeze,
}

impl ShapingConfig {
    pub fn new(p0: f64) -> Self {
        Self {
            p0,
            mu: 0.0,
            i_max: 500,
            eps_stop: 1e-4,
            eps_w: 1e-3,
            bounds: BoundsConfig::default(),
            surrogate_cells: 128,
            target: SurrogateTarget::Oracle,
            inner_steps: 1,
            mode: UpdateMode::Jacobi,
            freeze: Freeze::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0) || self.i_max < 1 || !(self.eps_stop > 0.0) || !(self.mu >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "shaping config needs P0 > 0, I_max >= 1, eps_stop > 0, mu >= 0 (got {}, {}, {}, {})",
                self.p0, self.i_max, self.eps_stop, self.mu
            )));
        }
        if self.inner_steps < 1 || self.surrogate_cells < 1 {
            return Err(Error::InvalidParam("inner_steps and surrogate_cells must be >= 1".into()));
        }
        Ok(())
    }
}

/// One iteration of the shaping loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Inner objective `sum p^2 + sum_{k != l} p_k p_l z_tilde`.
    pub objective: f64,
    pub cr_lower_bits: f64,
    pub e: f64,
    pub power_slack: f64,
    pub active_points: usize,
    /// Realised gradient-mapping norm `max_j |s_j^{t+1} - s_j^t| / mu_t`.
    pub pg_residual: f64,
    pub mu: f64,
    /// `max(|sum p - 1|, -min p)`; not part of the CSV.
    pub simplex_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShapingTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
}

pub const TRACE_COLUMNS: [&str; 7] = [
    "iter",
    "objective",
    "cr_lower_bits",
    "e",
    "power_slack",
    "active_points",
    "pg_residual",
];

impl ShapingTrace {
    pub fn to_csv(&self) -> String {
        let mut out = csv_line(TRACE_COLUMNS);
        for r in &self.records {
            out.push_str(&csv_line([
                r.iter.to_string(),
                fmt12(r.objective),
                fmt12(r.cr_lower_bits),
                fmt12(r.e),
                fmt12(r.power_slack),
                r.active_points.to_string(),
                fmt12(r.pg_residual),
            ]));
        }
        out
    }

    /// True when the inner objective never increases (up to `tol` relative).
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective + tol * w[0].objective.abs())
    }

    /// Checks `min_{t <= T} r_t^2 <= C / T` with `C = (J_0 - J_final) / mu_min`.
    pub fn envelope_constant(&self) -> Option<f64> {
        let first = self.records.first()?;
        let last = self.records.last()?;
        let mu_min = self.records.iter().skip(1).map(|r| r.mu).filter(|m| *m > 0.0).fold(f64::INFINITY, f64::min);
        if !mu_min.is_finite() {
            return None;
        }
        Some((first.objective - last.objective).max(0.0) / mu_min)
    }

    pub fn satisfies_envelope(&self) -> bool {
        let Some(c) = self.envelope_constant() else {
            return true;
        };
        let mut best = f64::INFINITY;
        for (t, r) in self.records.iter().skip(1).enumerate() {
            best = best.min(r.pg_residual * r.pg_residual);
            let bound = c / (t + 1) as f64;
            if best > bound * (1.0 + 1e-9) + 1e-300 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingResult {
    pub constellation: Constellation,
    pub trace: ShapingTrace,
    pub coeffs: SurrogateCoeffs,
}

/// Default surrogate validity range `2 sqrt(P0 M)`.
pub fn default_ds_max(p0: f64, m: usize) -> f64 {
    2.0 * (p0 * m as f64).sqrt()
}

/// Surrogate over `[0, max(2 sqrt(P0 M), max distance)]`, its line chosen for the pair
/// distances and weights of `initial`.
pub fn fit_surrogate(initial: &Constellation, params: &NoiseParams, config: &ShapingConfig) -> Result<SurrogateCoeffs> {
    let ds_max = default_ds_max(config.p0, initial.len()).max(1.0001 * initial.max_distance());
    let bcfg = BoundsConfig {
        eps_w: config.eps_w,
        ..config.bounds
    };
    let mut pairs = Vec::new();
    for k in 0..initial.len() {
        for l in (k + 1)..initial.len() {
            pairs.push((dist(initial.points[k], initial.points[l]), initial.probs[k] * initial.probs[l]));
        }
    }
    surrogate_coeffs(params, &bcfg, ds_max, config.surrogate_cells, config.target, &pairs)
}

/// Fits the surrogate for `params` and runs [`shape_with`].
pub fn shape(initial: &Constellation, params: &NoiseParams, config: &ShapingConfig) -> Result<ShapingResult> {
    config.validate()?;
    let coeffs = fit_surrogate(initial, params, config)?;
    shape_with(initial, &coeffs, config)
}

fn record(c: &Constellation, coeffs: &SurrogateCoeffs, p0: f64, iter: usize, e: f64, pg: f64, mu: f64) -> Result<TraceRecord> {
    let zt = z_tilde_matrix(c, coeffs)?;
    let obj = inner_objective(&c.probs, &zt);
    Ok(TraceRecord {
        iter,
        objective: obj,
        cr_lower_bits: -obj.min(1.0).log2(),
        e,
        power_slack: p0 - c.power(),
        active_points: c.active_points(),
        pg_residual: pg,
        mu,
        simplex_residual: simplex_residual(&c.probs),
    })
}

/// The shaping loop for a fixed surrogate.
pub fn shape_with(initial: &Constellation, coeffs: &SurrogateCoeffs, config: &ShapingConfig) -> Result<ShapingResult> {
    config.validate()?;
    initial.check_simplex()?;
    let p0 = config.p0;
    if initial.power() > p0 * (1.0 + 1e-9) {
        return Err(Error::InvalidParam(format!(
            "initial power {} exceeds the budget {p0}",
            initial.power()
        )));
    }
    let mut c = initial.clone();
    let mut trace = ShapingTrace::default();
    trace.records.push(record(&c, coeffs, p0, 0, f64::INFINITY, f64::NAN, 0.0)?);
    for t in 1..=config.i_max {
        let prev = c.clone();
        if config.freeze != Freeze::Probs {
            let zt = z_tilde_matrix(&c, coeffs)?;
            let sq: Vec<f64> = c.points.iter().map(|s| norm2(*s)).collect();
            c.probs = optimal_probs_with_power(&zt, &c.probs, &sq, p0);
        }
        let mut pg = 0.0f64;
        let mut mu_used = 0.0;
        if config.freeze != Freeze::Points {
            let l = lipschitz_bound(coeffs, p0, &c.probs);
            let mu = if config.mu > 0.0 { config.mu.min(1.0 / l) } else { 1.0 / l };
            for _ in 0..config.inner_steps {
                let (next, r, m) = point_step(&c, coeffs, p0, mu, config.mode)?;
                c = next;
                pg = pg.max(r);
                mu_used = m;
            }
        }
        let e = prev
            .points
            .iter()
            .zip(&c.points)
            .zip(prev.probs.iter().zip(&c.probs))
            .map(|((a, b), (pa, pb))| dist(*a, *b).max((pa - pb).abs()))
            .fold(0.0, f64::max);
        trace.records.push(record(&c, coeffs, p0, t, e, pg, mu_used)?);
        if e < config.eps_stop {
            trace.converged = true;
            break;
        }
    }
    Ok(ShapingResult {
        constellation: c,
        trace,
        coeffs: *coeffs,
    })
}

const MAX_BACKTRACK: usize = 60;

/// One projected gradient step with sufficient-decrease backtracking.
/// Returns the new constellation, the realised gradient-mapping norm and the accepted step.
fn point_step(
    c: &Constellation,
    coeffs: &SurrogateCoeffs,
    p0: f64,
    mu: f64,
    mode: UpdateMode,
) -> Result<(Constellation, f64, f64)> {
    let f0 = zbar(c, coeffs)?;
    let grad = grad_points(c, coeffs);
    let mut step = mu;
    for _ in 0..MAX_BACKTRACK {
        let next = match mode {
            UpdateMode::Jacobi => {
                let cands: Vec<[f64; 2]> = c
                    .points
                    .iter()
                    .zip(&grad)
                    .map(|(s, g)| [s[0] - step * g[0], s[1] - step * g[1]])
                    .collect();
                Constellation {
                    points: project_power_joint(&cands, &c.probs, p0),
                    probs: c.probs.clone(),
                }
            }
            UpdateMode::GaussSeidel => gauss_seidel_sweep(c, coeffs, p0, step)?,
        };
        let moved2: f64 = c.points.iter().zip(&next.points).map(|(a, b)| dist(*a, *b).powi(2)).sum();
        if moved2 == 0.0 {
            return Ok((next, 0.0, step));
        }
        if let Ok(f1) = zbar(&next, coeffs) {
            if f1 <= f0 - moved2 / (2.0 * step) {
                let r = c
                    .points
                    .iter()
                    .zip(&next.points)
                    .map(|(a, b)| dist(*a, *b))
                    .fold(0.0, f64::max)
                    / step;
                return Ok((next, r, step));
            }
        }
        step *= 0.5;
    }
    Ok((c.clone(), 0.0, step))
}

fn gauss_seidel_sweep(c: &Constellation, coeffs: &SurrogateCoeffs, p0: f64, step: f64) -> Result<Constellation> {
    let mut cur = c.clone();
    for j in 0..cur.len() {
        let g = grad_points(&cur, coeffs)[j];
        let cand = [cur.points[j][0] - step * g[0], cur.points[j][1] - step * g[1]];
        cur.points[j] = project_power(cand, j, &cur, p0)?;
    }
    Ok(cur)
}

/// The shaped constellation against the four reference schemes, all scored
/// by the surrogate objective of the mixed-noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub proposed: ShapingResult,
    pub conventional: Constellation,
    pub only_geo: ShapingResult,
    pub only_pro: ShapingResult,
    pub wgnc: ShapingResult,
}

/// Surrogate cutoff-rate lower bound `-log2(p^T Z p)` of a constellation.
pub fn surrogate_cr(c: &Constellation, coeffs: &SurrogateCoeffs) -> Result<f64> {
    let zt = z_tilde_matrix(c, coeffs)?;
    Ok(-inner_objective(&c.probs, &zt).min(1.0).log2())
}

/// Runs the proposed shaping and the Conventional / Only-geo / Only-pro / WGNC baselines.
pub fn shape_with_baselines(
    initial: &Constellation,
    params: &NoiseParams,
    config: &ShapingConfig,
) -> Result<BaselineReport> {
    config.validate()?;
    let coeffs = fit_surrogate(initial, params, config)?;
    let gauss = SurrogateCoeffs::gaussian(&params.with_rho(1.0), coeffs.valid_range.1);
    let run = |freeze: Freeze, k: &SurrogateCoeffs| shape_with(initial, k, &ShapingConfig { freeze, ..*config });
    Ok(BaselineReport {
        proposed: run(Freeze::None, &coeffs)?,
        conventional: initial.clone(),
        only_geo: run(Freeze::Probs, &coeffs)?,
        only_pro: run(Freeze::Points, &coeffs)?,
        wgnc: run(Freeze::None, &gauss)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(rho1: f64) -> SurrogateCoeffs {
        SurrogateCoeffs {
            rho1,
            rho0: 0.8,
            gauss_amp: 0.2,
            gauss_scale: 16.0,
            valid_range: (0.0, 40.0),
        }
    }

    #[test]
    fn simplex_projection_examples() {
        let p = project_simplex(&[1.2, -0.1, -0.1]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let q = [0.2, 0.3, 0.5];
        let r = project_simplex(&q);
        for (a, b) in r.iter().zip(q) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn halfspace_projection_is_feasible() {
        let v = [0.1, 0.2, 0.7];
        let a = [1.0, 2.0, 10.0];
        let p = project_simplex_halfspace(&v, &a, 3.0);
        let s: f64 = p.iter().sum();
        let dot: f64 = p.iter().zip(a).map(|(x, y)| x * y).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(dot <= 3.0 + 1e-12);
        assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn identity_quadratic_gives_uniform() {
        let zt = DMatrix::identity(5, 5);
        let p = optimal_probs(&zt, &[0.6, 0.1, 0.1, 0.1, 0.1]);
        for x in p {
            assert!((x - 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_objective_keeps_feasibility() {
        let zt = DMatrix::from_element(2, 2, 1.0);
        let p = optimal_probs(&zt, &[0.3, 0.7]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((inner_objective(&p, &zt) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_layouts_meet_the_budget() {
        let c = qam16(3.0).unwrap();
        assert_eq!(c.len(), 16);
        assert!((c.power() - 3.0).abs() < 1e-12);
        let q = qpsk(2.0).unwrap();
        assert!((q.points[0][0].abs() - 1.0).abs() < 1e-12);
        assert!(square_layout(8, 1.0).is_err());
    }

    #[test]
    fn power_projection_rules() {
        let c = Constellation::uniform(vec![[1.0, 0.0], [-1.0, 0.0]]);
        assert_eq!(project_power([0.5, 0.0], 0, &c, 1.0).unwrap(), [0.5, 0.0]);
        let s = project_power([4.0, 0.0], 0, &c, 1.0).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!(matches!(project_power([1.0, 0.0], 0, &c, 0.1), Err(Error::InfeasibleResidual(_))));
        let j = project_power_joint(&[[2.0, 0.0], [-2.0, 0.0]], &c.probs, 1.0);
        let pw: f64 = j.iter().zip(&c.probs).map(|(s, p)| p * norm2(*s)).sum();
        assert!(pw <= 1.0 && pw > 1.0 - 1e-12);
    }

    #[test]
    fn coincident_points_have_zero_gradient() {
        let c = Constellation::uniform(vec![[0.3, 0.3]; 3]);
        for g in grad_points(&c, &coeffs(-0.05)) {
            assert_eq!(g, [0.0, 0.0]);
        }
        let z = z_tilde_matrix(&c, &coeffs(-0.05)).unwrap();
        assert_eq!(z[(0, 1)], 1.0);
    }

    #[test]
    fn antipodal_pair_is_stationary() {
        let k = coeffs(-0.02);
        let c = Constellation::uniform(vec![[1.0, 0.0], [-1.0, 0.0]]);
        let g = grad_points(&c, &k);
        assert_eq!(g[0], [-g[1][0], -g[1][1]]);
        assert!(stationarity_residual(&c, &k, 1.0) < 1e-8);
        let cfg = ShapingConfig::new(1.0);
        let r = shape_with(&c, &k, &cfg).unwrap();
        assert!(r.trace.converged);
        assert!(r.trace.records.len() <= 3);
    }

    #[test]
    fn gaussian_lipschitz_matches_calculus() {
        let k = SurrogateCoeffs {
            rho1: 0.0,
            rho0: 0.0,
            gauss_amp: 1.0,
            gauss_scale: 16.0,
            valid_range: (0.0, 40.0),
        };
        let probs = [0.5, 0.5];
        let sup = 4.0 / (16.0 * std::f64::consts::E);
        let expect = 0.25 * (1.0 + sup);
        let l = lipschitz_bound(&k, 400.0, &probs);
        assert!((l - expect).abs() < 0.01 * expect);
        let fine = lipschitz_bound_grid(&k, 400.0, &probs, 2048);
        assert!((l - fine).abs() < 0.01 * fine);
    }

    #[test]
    fn dump_round_trips() {
        let c = qam16(2.0).unwrap();
        let back = Constellation::parse(&c.dump()).unwrap();
        for (a, b) in c.points.iter().zip(&back.points) {
            assert!(dist(*a, *b) < 1e-10);
        }
    }
}
