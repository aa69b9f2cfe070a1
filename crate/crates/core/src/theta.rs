//! The diffusion constant `theta(d, nu) = 1 - Delta / beta` and the quantities
//! derived from the continued fraction
//!
//! ```text
//! Delta = 1 / (b_1 - 1 / (b_2 - 1 / (b_3 - ...))),   b_k = (2 + k nu) / rho
//! ```
//!
//! with `beta = sqrt(d - 1)` and `rho = 2 sqrt(d - 1) / d`. Every partial
//! denominator is at least 2, so the fraction converges for all `d >= 2` and
//! `nu >= 0`.
//!
//! Two evaluation routes are kept: a backward recurrence (the primary one) and
//! forward convergents `A_k / B_k`. Both start the tail from the minimal root of
//! the local quadratic `x^2 - b x + 1 = 0`, which is the exact tail when
//! `nu = 0` and a strong approximation otherwise.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
/// Default `delta` in `hbar = floor(delta * log_d n)`.
pub const DEFAULT_HEIGHT_DELTA: f64 = 0.02;

const START_DEPTH: usize = 64;
const MAX_DEPTH: usize = 1 << 20;
const SERIES_MAX_TERMS: usize = 1 << 16;
const SERIES_REL_EPS: f64 = 1e-16;
const SERIES_QUIET_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConst {
    pub d: u32,
    pub nu: f64,
    pub beta: f64,
    pub rho: f64,
}

impl ModelConst {
    pub fn new(d: u32, nu: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("degree d={d} must be >= 2")));
        }
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(invalid(format!("rewiring rate nu={nu} must be finite and >= 0")));
        }
        let beta = f64::from(d - 1).sqrt();
        let rho = 2.0 * beta / f64::from(d);
        Ok(ModelConst { d, nu, beta, rho })
    }

    /// Partial denominator `b_k = (2 + k nu) / rho`, `k >= 1`.
    #[inline]
    fn denom(&self, k: usize) -> f64 {
        (2.0 + k as f64 * self.nu) / self.rho
    }

    /// `theta` at `nu = 0`, i.e. `(d - 2) / (d - 1)`.
    pub fn static_theta(&self) -> f64 {
        f64::from(self.d - 2) / f64::from(self.d - 1)
    }
}

pub fn make_consts(d: u32, nu: f64) -> Result<ModelConst> {
    ModelConst::new(d, nu)
}

/// Minimal root of `x^2 - b x + 1 = 0` for `b >= 2`, written to avoid cancellation.
#[inline]
fn tail_root(b: f64) -> f64 {
    let disc = (b * b - 4.0).max(0.0).sqrt();
    2.0 / (b + disc)
}

/// `Delta(offset)`: the fraction whose first denominator is `b_{offset+1}`,
/// truncated after `depth` levels.
fn backward_at(c: &ModelConst, offset: usize, depth: usize) -> f64 {
    let top = offset + depth;
    let mut x = tail_root(c.denom(top + 1));
    for k in (offset + 1..=top).rev() {
        x = 1.0 / (c.denom(k) - x);
    }
    x
}

/// Same truncation as [`backward_at`] but via forward convergents.
fn forward_at(c: &ModelConst, offset: usize, depth: usize) -> f64 {
    // A_0 = 0, B_0 = 1, A_1 = 1, B_1 = b_1; A_k = b_k A_{k-1} - A_{k-2}.
    let (mut a_prev, mut b_prev) = (0.0_f64, 1.0_f64);
    let (mut a_cur, mut b_cur) = (1.0_f64, c.denom(offset + 1));
    for k in 2..=depth {
        let bk = c.denom(offset + k);
        let a_next = bk * a_cur - a_prev;
        let b_next = bk * b_cur - b_prev;
        a_prev = a_cur;
        b_prev = b_cur;
        a_cur = a_next;
        b_cur = b_next;
        let scale = b_cur.abs();
        if scale > 1e100 {
            a_prev /= scale;
            b_prev /= scale;
            a_cur /= scale;
            b_cur /= scale;
        }
    }
    let w = tail_root(c.denom(offset + depth + 1));
    (a_cur - w * a_prev) / (b_cur - w * b_prev)
}

/// Doubles the depth from 64 until two successive backward evaluations of
/// `Delta(offset)` differ by less than `tol`.
fn converge_at(c: &ModelConst, offset: usize, tol: f64) -> Result<(f64, usize)> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance {tol} must be > 0")));
    }
    let mut depth = START_DEPTH;
    let mut prev = backward_at(c, offset, depth);
    while depth < MAX_DEPTH {
        depth *= 2;
        let next = backward_at(c, offset, depth);
        if (next - prev).abs() < tol {
            return Ok((next, depth));
        }
        prev = next;
    }
    Err(Error::NumericalFailure(format!(
        "continued fraction for d={}, nu={} did not settle within depth {MAX_DEPTH}",
        c.d, c.nu
    )))
}

/// `Delta_{d,nu}` with the depth that achieved `tol`. The backward value is
/// cross-checked against forward convergents at the same depth.
pub fn delta_cf(c: &ModelConst, tol: f64) -> Result<(f64, usize)> {
    let (value, depth) = converge_at(c, 0, tol)?;
    let forward = forward_at(c, 0, depth);
    if !((forward - value).abs() <= 10.0 * tol) {
        return Err(Error::NumericalFailure(format!(
            "backward {value} and forward {forward} evaluations disagree (d={}, nu={})",
            c.d, c.nu
        )));
    }
    Ok((value, depth))
}

/// Forward-convergent evaluation of `Delta(offset)` at a fixed depth.
pub fn delta_forward(c: &ModelConst, offset: usize, depth: usize) -> f64 {
    forward_at(c, offset, depth.max(1))
}

/// Backward-recurrence evaluation of `Delta(offset)` at a fixed depth.
pub fn delta_backward(c: &ModelConst, offset: usize, depth: usize) -> f64 {
    backward_at(c, offset, depth)
}

pub fn theta(c: &ModelConst) -> Result<f64> {
    theta_with_tol(c, DEFAULT_TOL)
}

pub fn theta_with_tol(c: &ModelConst, tol: f64) -> Result<f64> {
    let (delta0, _) = delta_cf(c, tol)?;
    Ok(1.0 - delta0 / c.beta)
}

/// `Delta(0), ..., Delta(i_max)`, each evaluated as its own (shifted) fraction.
pub fn delta_seq(c: &ModelConst, i_max: usize) -> Result<Vec<f64>> {
    (0..=i_max)
        .map(|i| converge_at(c, i, DEFAULT_TOL).map(|(v, _)| v))
        .collect()
}

/// Max over `i < len - 1` of `|Delta(i) (b_{i+1} - Delta(i+1)) - 1|`.
pub fn recursion_residual(c: &ModelConst, seq: &[f64]) -> f64 {
    seq.windows(2)
        .enumerate()
        .map(|(i, w)| (w[0] * (c.denom(i + 1) - w[1]) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `Delta(0..count)` from one backward sweep, deepened until both ends settle.
fn delta_sweep(c: &ModelConst, count: usize) -> Result<Vec<f64>> {
    let sweep = |extra: usize| {
        let top = count + extra;
        let mut out = vec![0.0; count];
        let mut x = tail_root(c.denom(top + 1));
        for k in (1..=top).rev() {
            x = 1.0 / (c.denom(k) - x);
            if k - 1 < count {
                out[k - 1] = x;
            }
        }
        out
    };
    let mut extra = START_DEPTH;
    let mut prev = sweep(extra);
    while extra < MAX_DEPTH {
        extra *= 2;
        let next = sweep(extra);
        let settled = prev
            .iter()
            .zip(&next)
            .all(|(a, b)| (a - b).abs() < DEFAULT_TOL * b.abs().max(1e-300) || a == b);
        if settled {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NumericalFailure(format!(
        "Delta sweep for d={}, nu={} did not settle",
        c.d, c.nu
    )))
}

/// Probability that two walks at tree distance `ell` in the killed toy chain
/// ever meet: `q(ell) = prod_{i < ell} Delta(i) / beta`.
pub fn meet_prob_q(c: &ModelConst, ell: usize) -> Result<f64> {
    if ell == 0 {
        return Ok(1.0);
    }
    let seq = delta_seq(c, ell - 1)?;
    Ok(seq.iter().map(|x| x / c.beta).product())
}

/// Expected collision local time `R(i)` of the killed toy chain started at distance `i`.
pub fn local_time_r(c: &ModelConst, i: usize) -> Result<f64> {
    let th = theta(c)?;
    if th <= 0.0 {
        return Err(invalid(format!(
            "collision local time is infinite for d={}, nu={} (theta = 0)",
            c.d, c.nu
        )));
    }
    Ok(meet_prob_q(c, i)? / (2.0 * th))
}

/// `sum_{l >= 1} l * chi_{l-1}` with `chi_i = prod_{j <= i} beta Delta(j)`.
///
/// Stops once the term falls below `1e-16` of the partial sum for five
/// consecutive `l`.
pub fn collision_series(c: &ModelConst) -> Result<f64> {
    let mut count = 256;
    loop {
        let seq = delta_sweep(c, count)?;
        let mut chi = 1.0;
        let mut sum = 0.0;
        let mut quiet = 0;
        for (idx, delta) in seq.iter().enumerate() {
            let ell = (idx + 1) as f64;
            chi *= c.beta * delta;
            let term = ell * chi;
            sum += term;
            if term < SERIES_REL_EPS * sum {
                quiet += 1;
                if quiet >= SERIES_QUIET_RUN {
                    return Ok(sum);
                }
            } else {
                quiet = 0;
            }
        }
        if count >= SERIES_MAX_TERMS {
            return Err(Error::NumericalFailure(format!(
                "collision series for d={}, nu={} did not converge in {count} terms",
                c.d, c.nu
            )));
        }
        count *= 2;
    }
}

/// `|(d nu / (d-1)) S - 2 (1 - Delta(0)/beta)|`; only meaningful for `nu > 0`.
pub fn identity_residual(c: &ModelConst) -> Result<f64> {
    if !(c.nu > 0.0) {
        return Err(invalid("identity residual requires nu > 0"));
    }
    let s = collision_series(c)?;
    let d = f64::from(c.d);
    let lhs = d * c.nu / (d - 1.0) * s;
    let rhs = 2.0 * theta(c)?;
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaRate {
    /// Thinned nice-pair rate `gamma_n` of the two-tree model (per unit time).
    pub gamma_n: f64,
    pub hbar: u32,
    /// `lim n gamma_n`, which equals `2 theta`.
    pub gamma_inf: f64,
}

/// `floor(delta * log_d n)`.
pub fn tree_height(d: u32, n: u64, delta: f64) -> u32 {
    let h = delta * (n as f64).ln() / f64::from(d).ln();
    // guard against ln rounding just below an integer
    (h + 1e-12).floor().max(0.0) as u32
}

pub fn gamma_rate(c: &ModelConst, n: u64, delta: f64) -> Result<GammaRate> {
    if !(delta > 0.0 && delta < 1.0 / 48.0) {
        return Err(invalid(format!("delta={delta} must lie in (0, 1/48)")));
    }
    if n < u64::from(c.d) + 1 {
        return Err(invalid(format!("n={n} must be >= d+1")));
    }
    let hbar = tree_height(c.d, n, delta);
    if hbar < 1 {
        return Err(Error::DegenerateHeight { n, delta, hbar });
    }
    gamma_rate_with_height(c, n, hbar)
}

/// [`gamma_rate`] with the tree height given directly.
pub fn gamma_rate_with_height(c: &ModelConst, n: u64, hbar: u32) -> Result<GammaRate> {
    if hbar < 1 {
        return Err(Error::DegenerateHeight { n, delta: f64::NAN, hbar });
    }
    let d = f64::from(c.d);
    let max_ell = 2 * hbar as usize - 1;
    let seq = delta_seq(c, max_ell - 1)?;
    let mut q = 1.0;
    let mut weight = 1.0;
    let mut sum = 0.0;
    for ell in 1..=max_ell {
        q *= seq[ell - 1] / c.beta;
        weight *= d - 1.0;
        sum += ell as f64 * weight * q;
    }
    let gamma_n = c.nu / (d * n as f64 - 1.0) * d * d / (d - 1.0) * sum;
    let gamma_inf = if c.nu == 0.0 {
        0.0
    } else {
        d * c.nu / (d - 1.0) * collision_series(c)?
    };
    Ok(GammaRate { gamma_n, hbar, gamma_inf })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaBundle {
    pub consts: ModelConst,
    pub delta0: f64,
    pub theta: f64,
    pub delta_seq: Vec<f64>,
    pub depth_used: usize,
    pub residual: f64,
}

impl ThetaBundle {
    pub const DEFAULT_SEQ_LEN: usize = 32;

    pub fn compute(c: ModelConst, tol: f64) -> Result<Self> {
        let (delta0, depth_used) = delta_cf(&c, tol)?;
        let delta_seq = delta_seq(&c, Self::DEFAULT_SEQ_LEN)?;
        let residual = recursion_residual(&c, &delta_seq);
        Ok(ThetaBundle {
            consts: c,
            delta0,
            theta: 1.0 - delta0 / c.beta,
            delta_seq,
            depth_used,
            residual,
        })
    }

    /// `q(ell)` from the cached sequence, extending it when `ell` runs past it.
    pub fn q(&self, ell: usize) -> Result<f64> {
        if ell <= self.delta_seq.len() {
            Ok(self.delta_seq[..ell].iter().map(|x| x / self.consts.beta).product())
        } else {
            meet_prob_q(&self.consts, ell)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRow {
    pub d: u32,
    pub nu: f64,
    pub theta: f64,
    /// `nu (1 - theta)`, tends to `2/d` as `nu -> inf`.
    pub nu_gap: f64,
    /// `d (1 - theta)`, tends to `2/(nu+2)` as `d -> inf`.
    pub d_gap: f64,
    /// `(theta - theta_0) / nu`, tends to `d / (2 (d-2)^2)` as `nu -> 0`. NaN at `nu = 0`.
    pub slope: f64,
}

pub fn asymptotic_table(d_grid: &[u32], nu_grid: &[f64]) -> Result<Vec<AsymptoticRow>> {
    if d_grid.is_empty() || nu_grid.is_empty() {
        return Err(invalid("asymptotic table needs nonempty grids"));
    }
    let mut rows = Vec::with_capacity(d_grid.len() * nu_grid.len());
    for &d in d_grid {
        for &nu in nu_grid {
            let c = ModelConst::new(d, nu)?;
            let (delta0, _) = delta_cf(&c, DEFAULT_TOL)?;
            let gap = delta0 / c.beta;
            let theta = 1.0 - gap;
            let slope = if nu > 0.0 {
                (theta - c.static_theta()) / nu
            } else {
                f64::NAN
            };
            rows.push(AsymptoticRow {
                d,
                nu,
                theta,
                nu_gap: nu * gap,
                d_gap: f64::from(d) * gap,
                slope,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit reference, evaluated independently by a high-precision backward
    // recurrence at depth 4000.
    const DELTA_3_03: f64 = 0.494_582_327_854_751_3;
    const THETA_3_03: f64 = 0.650_277_482_118_877;

    fn c(d: u32, nu: f64) -> ModelConst {
        ModelConst::new(d, nu).unwrap()
    }

    #[test]
    fn consts_examples() {
        let k = c(2, 0.0);
        assert_eq!((k.beta, k.rho), (1.0, 1.0));
        let k = c(5, 0.0);
        assert_eq!(k.beta, 2.0);
        assert!((k.rho - 0.8).abs() < 1e-15);
        let k = c(3, 0.3);
        assert!((k.beta * k.beta - 2.0).abs() < 1e-14);
        assert!((k.rho - 0.942_809_04).abs() < 1e-8);
        for d in 2..50 {
            let k = c(d, 1.0);
            assert!(k.beta >= 1.0 && k.rho > 0.0 && k.rho <= 1.0);
            assert!((k.rho - 2.0 * k.beta / f64::from(d)).abs() < 1e-15);
        }
    }

    #[test]
    fn consts_reject_bad_input() {
        assert!(matches!(ModelConst::new(1, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(ModelConst::new(3, -0.1), Err(Error::InvalidParameter(_))));
        assert!(ModelConst::new(3, f64::NAN).is_err());
    }

    #[test]
    fn delta_static_is_inverse_beta() {
        let (v, _) = delta_cf(&c(3, 0.0), DEFAULT_TOL).unwrap();
        assert!((v - 1.0 / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn delta_parabolic_case_converges() {
        // d = 2, nu = 0 has all denominators equal to 2.
        let (v, _) = delta_cf(&c(2, 0.0), DEFAULT_TOL).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(theta(&c(2, 0.0)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn delta_large_nu_leading_order() {
        let k = c(3, 1e6);
        let (v, _) = delta_cf(&k, DEFAULT_TOL).unwrap();
        let lead = k.rho / k.nu;
        assert!(((v - lead) / lead).abs() < 1e-5);
    }

    #[test]
    fn delta_reference_value_two_routes() {
        let k = c(3, 0.3);
        let (bwd, depth) = delta_cf(&k, DEFAULT_TOL).unwrap();
        let fwd = delta_forward(&k, 0, depth);
        assert!((bwd - fwd).abs() < 1e-12);
        assert!((bwd - DELTA_3_03).abs() < 1e-13);
        // plain forward convergents without the tail start also converge there
        let mut plain = 0.0;
        let mut x = 0.0;
        for kk in (1..=400).rev() {
            x = 1.0 / (k.denom(kk) - x);
            plain = x;
        }
        assert!((plain - DELTA_3_03).abs() < 1e-13);
    }

    #[test]
    fn theta_examples() {
        assert!((theta(&c(3, 0.0)).unwrap() - 0.5).abs() < 1e-12);
        assert!((theta(&c(4, 0.0)).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let t = theta(&c(3, 0.3)).unwrap();
        assert!(t > 0.5 && t < 1.0);
        assert!((t - THETA_3_03).abs() < 1e-12);
    }

    #[test]
    fn delta_seq_examples() {
        let s = delta_seq(&c(3, 0.0), 20).unwrap();
        assert!(s.iter().all(|x| (x - 1.0 / 2f64.sqrt()).abs() < 1e-12));

        let k = c(3, 1.0);
        let s = delta_seq(&k, 50).unwrap();
        assert!(s[..=10].windows(2).all(|w| w[1] < w[0]));
        // Delta(i) ~ rho / (2 + (i + 1) nu) for large i
        let tail = k.rho / (2.0 + 51.0 * k.nu);
        assert!((s[50] / tail - 1.0).abs() < 1e-3, "{} vs {tail}", s[50]);
        assert!(s[50] < 0.02);
        assert!(s.iter().all(|&x| x > 0.0));
        assert!(recursion_residual(&k, &s) < 1e-10);
    }

    #[test]
    fn q_examples() {
        assert_eq!(meet_prob_q(&c(3, 0.3), 0).unwrap(), 1.0);
        assert_eq!(meet_prob_q(&c(7, 2.0), 0).unwrap(), 1.0);
        assert!((meet_prob_q(&c(3, 0.0), 2).unwrap() - 0.25).abs() < 1e-12);
        let q1 = meet_prob_q(&c(3, 0.3), 1).unwrap();
        assert!(q1 >= (2.0 / 3.0) / 2.3);
        assert!((q1 - DELTA_3_03 / 2f64.sqrt()).abs() < 1e-12);
        let k = c(3, 0.3);
        let qs: Vec<f64> = (0..10).map(|l| meet_prob_q(&k, l).unwrap()).collect();
        assert!(qs.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn local_time_examples() {
        assert!((local_time_r(&c(3, 0.0), 0).unwrap() - 1.0).abs() < 1e-12);
        assert!((local_time_r(&c(4, 0.0), 0).unwrap() - 0.75).abs() < 1e-12);
        let k = c(3, 0.3);
        let r0 = local_time_r(&k, 0).unwrap();
        let r2 = local_time_r(&k, 2).unwrap();
        assert!((r2 - r0 * meet_prob_q(&k, 2).unwrap()).abs() < 1e-14);
        // the two closed forms for R(0) and R(1)
        let (d0, _) = delta_cf(&k, DEFAULT_TOL).unwrap();
        assert!((r0 - 0.5 * k.beta / (k.beta - d0)).abs() < 1e-12);
        let r1 = local_time_r(&k, 1).unwrap();
        assert!((r1 - 0.5 / (k.beta / d0 - 1.0)).abs() < 1e-12);
        assert!(local_time_r(&c(2, 0.0), 0).is_err());
    }

    #[test]
    fn gamma_limit_matches_two_theta() {
        let k = c(3, 0.3);
        let g = gamma_rate_with_height(&k, 1_000_000, 6).unwrap();
        assert!((g.gamma_inf - 2.0 * THETA_3_03).abs() < 1e-8);
        assert!(((1e6 * g.gamma_n) / (2.0 * THETA_3_03) - 1.0).abs() < 0.02);
        let z = gamma_rate_with_height(&c(5, 0.0), 1000, 3).unwrap();
        assert_eq!(z.gamma_inf, 0.0);
        assert_eq!(z.gamma_n, 0.0);
    }

    #[test]
    fn gamma_small_n_is_degenerate() {
        // floor(0.02 * log_3 1e6) = 0
        let err = gamma_rate(&c(3, 0.3), 1_000_000, DEFAULT_HEIGHT_DELTA).unwrap_err();
        assert!(matches!(err, Error::DegenerateHeight { hbar: 0, .. }));
        assert!(gamma_rate(&c(3, 0.3), 1000, 0.5).is_err());
        assert!(gamma_rate(&c(3, 0.3), 3, 0.01).is_err());
    }

    #[test]
    fn gamma_from_delta_when_n_is_huge() {
        assert_eq!(tree_height(3, 3u64.pow(40), 0.02), 0);
        assert_eq!(tree_height(3, 3u64.pow(40), 0.05), 2);
    }

    #[test]
    fn identity_residual_examples() {
        assert!(identity_residual(&c(3, 1.0)).unwrap() < 1e-10);
        assert!(identity_residual(&c(10, 0.1)).unwrap() < 1e-10);
        assert!(matches!(identity_residual(&c(3, 0.0)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn asymptotic_table_examples() {
        let rows = asymptotic_table(&[3], &[1e4, 1e-4]).unwrap();
        assert!((rows[0].nu_gap / (2.0 / 3.0) - 1.0).abs() < 0.01);
        assert!((rows[1].slope - 1.5).abs() < 1e-2);
        let rows = asymptotic_table(&[10_000], &[1.0]).unwrap();
        assert!((rows[0].d_gap / (2.0 / 3.0) - 1.0).abs() < 0.01);
        assert!(asymptotic_table(&[], &[1.0]).is_err());
        assert!(asymptotic_table(&[3], &[0.0]).unwrap()[0].slope.is_nan());
    }

    #[test]
    fn theta_monotone_and_bounded_on_grid() {
        let nus = [0.0, 0.1, 0.3, 1.0, 3.0, 10.0];
        for d in [3u32, 4, 5, 10] {
            let ts: Vec<f64> = nus.iter().map(|&nu| theta(&c(d, nu)).unwrap()).collect();
            assert!(ts.windows(2).all(|w| w[1] > w[0]), "d={d}: {ts:?}");
            let lo = c(d, 0.0).static_theta();
            assert!((ts[0] - lo).abs() < 1e-12);
            assert!(ts[1..].iter().all(|&t| t > lo && t < 1.0));
        }
        for nu in [0.1, 1.0, 10.0] {
            let ts: Vec<f64> = (3..=10).map(|d| theta(&c(d, nu)).unwrap()).collect();
            assert!(ts.windows(2).all(|w| w[1] > w[0]), "nu={nu}: {ts:?}");
        }
    }

    #[test]
    fn bundle_fields_consistent() {
        let b = ThetaBundle::compute(c(3, 0.3), DEFAULT_TOL).unwrap();
        assert!(b.delta0 > 0.0 && b.delta0 < b.consts.beta);
        assert_eq!(b.theta, 1.0 - b.delta0 / b.consts.beta);
        assert!(b.residual < 1e-10);
        assert!((b.q(3).unwrap() - meet_prob_q(&b.consts, 3).unwrap()).abs() < 1e-14);
        assert!((b.q(40).unwrap() - meet_prob_q(&b.consts, 40).unwrap()).abs() < 1e-14);
    }
}
