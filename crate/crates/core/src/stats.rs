//! Estimators and gates tying simulation output to closed forms.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::sim::{simulate_two_walks, MeetingResult, StartMode, VoterTrace};

/// Sample mean and standard error of the mean. The SE is 0 for fewer than two
/// samples; an empty slice gives `(NaN, NaN)`.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (v / n as f64).sqrt())
}

/// Sup-norm distance between the empirical CDF of `samples` and `cdf`.
///
/// Both one-sided gaps are taken at every order statistic, so atoms in the
/// reference are handled through `cdf` itself.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len() as f64;
    let mut sup = 0.0_f64;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let f = cdf(x);
        let below = i as f64 / m;
        let at = j as f64 / m;
        // left limit of the reference is approximated by F(x) at a continuity point
        let f_left = cdf(prev_float(x)).min(f);
        sup = sup.max((at - f).abs()).max((f_left - below).abs());
        i = j;
    }
    Ok(sup)
}

fn prev_float(x: f64) -> f64 {
    if x == 0.0 {
        -f64::MIN_POSITIVE
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// Limiting Kolmogorov distribution `P(sqrt(m) D_m <= x)`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        // theta-function form, fast for small x
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (0..50).map(|k| (-((2 * k + 1) as f64).powi(2) * c).exp()).sum();
        return (2.0 * std::f64::consts::PI).sqrt() / x * s;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    1.0 - 2.0 * s
}

/// Critical value `c` with `P(D_m > c) ~ alpha`, from the limiting law with
/// the usual `sqrt(m) + 0.12 + 0.11 / sqrt(m)` finite-sample correction.
pub fn ks_critical_value(m: usize, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - kolmogorov_cdf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sm = (m as f64).sqrt();
    0.5 * (lo + hi) / (sm + 0.12 + 0.11 / sm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Exponential MLE `1 / mean` with a 95% normal-approximation interval.
pub fn exp_rate_fit(samples: &[f64]) -> Result<RateFit> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(k) = samples.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NonPositiveSample(k));
    }
    let m = samples.len() as f64;
    let rate = m / samples.iter().sum::<f64>();
    let half = 1.96 * rate / m.sqrt();
    Ok(RateFit { rate, ci_low: rate - half, ci_high: rate + half })
}

/// Empirical survival of `tau / n` against `exp(-rate s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub grid: Vec<f64>,
    pub empirical: Vec<f64>,
    pub reference: Vec<f64>,
    pub sup_gap: f64,
}

impl SurvivalCurve {
    /// Evaluates on `grid`; `sup_gap` is the KS distance over all samples, not
    /// just over the grid.
    pub fn new(samples: &[f64], rate: f64, grid: &[f64]) -> Result<Self> {
        let sup_gap = ks_statistic(samples, |s| exp_cdf(rate, s))?;
        let mut xs = samples.to_vec();
        xs.sort_by(|a, b| a.total_cmp(b));
        let m = xs.len() as f64;
        let empirical = grid
            .iter()
            .map(|&s| 1.0 - xs.partition_point(|&x| x <= s) as f64 / m)
            .collect();
        let reference = grid.iter().map(|&s| (-rate * s.max(0.0)).exp()).collect();
        Ok(SurvivalCurve { grid: grid.to_vec(), empirical, reference, sup_gap })
    }
}

pub fn exp_cdf(rate: f64, s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        1.0 - (-rate * s).exp()
    }
}

/// `alpha_n = n / (2 theta)`.
pub fn homogenisation_scale(n: usize, theta: f64) -> f64 {
    n as f64 / (2.0 * theta)
}

/// `(alpha/n) int_0^T D_{alpha s} ds - int_0^T O(1-O)_{alpha s} ds`, i.e.
/// `(1/n) int_0^{alpha T} D dt - (1/alpha) int_0^{alpha T} O(1-O) dt`.
pub fn homogenisation_functional(trace: &VoterTrace, theta: f64, n: usize, t_end: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(invalid(format!("theta={theta} must be > 0")));
    }
    let alpha = homogenisation_scale(n, theta);
    let need = alpha * t_end;
    if trace.horizon < need * (1.0 - 1e-12) {
        return Err(Error::InsufficientHorizon { have: trace.horizon, need });
    }
    let (int_d, int_h) = trace
        .cumulative_at(need.min(trace.horizon))
        .ok_or(Error::InsufficientHorizon { have: trace.horizon, need })?;
    Ok(int_d / n as f64 - int_h / alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogenisationReport {
    pub n: usize,
    pub t_end: f64,
    pub values: Vec<f64>,
    pub mean: f64,
    pub se: f64,
}

impl HomogenisationReport {
    pub fn new(n: usize, t_end: f64, values: Vec<f64>) -> Self {
        let (mean, se) = mean_se(&values);
        HomogenisationReport { n, t_end, values, mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeTail {
    pub phat: f64,
    pub se: f64,
    pub reps: usize,
}

/// Fraction of edge-started meeting runs with `tau > s_n`. Replica `r` draws
/// from `rng_for(r)`.
pub fn edge_tail_estimate<F, R>(n: usize, d: usize, nu: f64, s_n: f64, reps: usize, rng_for: F) -> Result<EdgeTail>
where
    F: Fn(u64) -> R + Sync,
    R: Rng,
{
    Ok(edge_tail_runs(n, d, nu, s_n, reps, rng_for)?.1)
}

/// As [`edge_tail_estimate`], also returning the runs, each censored just
/// past `s_n`.
pub fn edge_tail_runs<F, R>(
    n: usize,
    d: usize,
    nu: f64,
    s_n: f64,
    reps: usize,
    rng_for: F,
) -> Result<(Vec<MeetingResult>, EdgeTail)>
where
    F: Fn(u64) -> R + Sync,
    R: Rng,
{
    if reps == 0 {
        return Err(Error::EmptySample);
    }
    if s_n != 0.0 {
        let (lo, hi) = ((n as f64).powf(0.3), (n as f64).powf(0.7));
        if !(s_n >= lo && s_n <= hi) {
            return Err(invalid(format!("s_n={s_n} outside [n^0.3, n^0.7] = [{lo:.3}, {hi:.3}]")));
        }
    }
    let cap = if s_n > 0.0 { s_n * (1.0 + 1e-9) + 1e-9 } else { 1e-9 };
    let runs: Vec<MeetingResult> = (0..reps as u64)
        .into_par_iter()
        .map(|r| simulate_two_walks(n, d, nu, StartMode::Edge, cap, &mut rng_for(r)))
        .collect::<Result<_>>()?;
    let exceed = runs.iter().filter(|r| r.censored || r.tau > s_n).count();
    let phat = exceed as f64 / reps as f64;
    let se = (phat * (1.0 - phat) / reps as f64).sqrt();
    Ok((runs, EdgeTail { phat, se, reps }))
}

/// One named pass/fail check in a JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Gate {
    /// Passes when `value < threshold`.
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Gate { name: name.to_string(), value, threshold, pass: value < threshold }
    }
}

/// `|x - target| < k * se`, with `se` floored so that an exact match passes.
pub fn within_se(x: f64, target: f64, se: f64, k: f64) -> bool {
    (x - target).abs() < k * se.max(1e-300) || x == target
}
