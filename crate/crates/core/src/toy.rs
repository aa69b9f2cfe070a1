//! The two idealised tree models: the killed distance chain and the
//! two-phase renewal model built on it.

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::theta::{tree_height, ModelConst};

/// State of the distance chain on `{0, 1, 2, ...} U {dagger}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainPos {
    At(u64),
    Dagger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainState {
    pub position: ChainPos,
    pub clock: f64,
    pub local_time_at_0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainOutcome {
    Hit0,
    Dagger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRun {
    pub outcome: ChainOutcome,
    pub elapsed: f64,
    pub local_time_at_0: f64,
}

/// Distance between two rate-1 walks on the `d`-regular tree whose connecting
/// path loses each edge at rate `nu`.
#[derive(Debug, Clone, Copy)]
pub struct DistanceChain {
    d: f64,
    nu: f64,
}

impl DistanceChain {
    pub fn new(d: u32, nu: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("d={d} must be >= 2")));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(invalid(format!("the killed chain needs 0 < nu < inf, got {nu}")));
        }
        Ok(DistanceChain { d: f64::from(d), nu })
    }

    pub fn start(&self, i0: u64) -> ChainState {
        ChainState { position: ChainPos::At(i0), clock: 0.0, local_time_at_0: 0.0 }
    }

    /// Rates `(right, left, kill)` out of `i`.
    pub fn rates(&self, i: u64) -> (f64, f64, f64) {
        if i == 0 {
            (2.0, 0.0, 0.0)
        } else {
            (2.0 * (self.d - 1.0) / self.d, 2.0 / self.d, self.nu * i as f64)
        }
    }

    /// One jump; a no-op once absorbed.
    pub fn step<R: Rng + ?Sized>(&self, st: &mut ChainState, rng: &mut R) {
        let ChainPos::At(i) = st.position else { return };
        let (right, left, kill) = self.rates(i);
        let total = right + left + kill;
        let hold = rng.sample::<f64, _>(Exp1) / total;
        st.clock += hold;
        if i == 0 {
            st.local_time_at_0 += hold;
        }
        let u = rng.random::<f64>() * total;
        st.position = if u < right {
            ChainPos::At(i + 1)
        } else if u < right + left {
            ChainPos::At(i - 1)
        } else {
            ChainPos::Dagger
        };
    }

    /// From `i0 >= 1`: runs until the chain hits 0 or dagger. From `i0 = 0`:
    /// runs to dagger, accumulating the local time at 0 over all excursions.
    pub fn run<R: Rng + ?Sized>(&self, i0: u64, rng: &mut R) -> ChainRun {
        let mut st = self.start(i0);
        loop {
            self.step(&mut st, rng);
            match st.position {
                ChainPos::Dagger => {
                    return ChainRun {
                        outcome: ChainOutcome::Dagger,
                        elapsed: st.clock,
                        local_time_at_0: st.local_time_at_0,
                    }
                }
                ChainPos::At(0) if i0 > 0 => {
                    return ChainRun {
                        outcome: ChainOutcome::Hit0,
                        elapsed: st.clock,
                        local_time_at_0: 0.0,
                    }
                }
                _ => {}
            }
        }
    }
}

pub fn chain_run<R: Rng + ?Sized>(i0: u64, d: u32, nu: f64, rng: &mut R) -> Result<ChainRun> {
    Ok(DistanceChain::new(d, nu)?.run(i0, rng))
}

fn mean_se_of<I: Iterator<Item = f64>>(it: I) -> (f64, f64) {
    let xs: Vec<f64> = it.collect();
    crate::stats::mean_se(&xs)
}

/// Monte Carlo collision local time from 0, `(mean, standard error)`.
pub fn mc_r0<R: Rng + ?Sized>(d: u32, nu: f64, reps: usize, rng: &mut R) -> Result<(f64, f64)> {
    if reps == 0 {
        return Err(invalid("reps must be >= 1"));
    }
    let chain = DistanceChain::new(d, nu)?;
    Ok(mean_se_of((0..reps).map(|_| chain.run(0, rng).local_time_at_0)))
}

/// Monte Carlo probability of ever reaching 0 from distance `ell >= 1`.
pub fn mc_q<R: Rng + ?Sized>(d: u32, nu: f64, ell: u64, reps: usize, rng: &mut R) -> Result<(f64, f64)> {
    if reps == 0 || ell == 0 {
        return Err(invalid("need reps >= 1 and ell >= 1"));
    }
    let chain = DistanceChain::new(d, nu)?;
    Ok(mean_se_of((0..reps).map(|_| {
        if chain.run(ell, rng).outcome == ChainOutcome::Hit0 {
            1.0
        } else {
            0.0
        }
    })))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeHeight {
    /// `hbar = floor(delta * log_d n)`, `delta` in `(0, 1/48)`.
    Delta(f64),
    Explicit(u32),
}

impl TreeHeight {
    pub fn resolve(&self, d: u32, n: u64) -> Result<u32> {
        match *self {
            TreeHeight::Delta(delta) => {
                if !(delta > 0.0 && delta < 1.0 / 48.0) {
                    return Err(invalid(format!("delta={delta} must lie in (0, 1/48)")));
                }
                let hbar = tree_height(d, n, delta);
                if hbar < 1 {
                    return Err(Error::DegenerateHeight { n, delta, hbar });
                }
                Ok(hbar)
            }
            TreeHeight::Explicit(h) if h >= 1 => Ok(h),
            TreeHeight::Explicit(h) => Err(Error::DegenerateHeight { n, delta: f64::NAN, hbar: h }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPhaseSample {
    pub tau_first_total: f64,
    pub tau_second_total: f64,
    pub tau_final: f64,
    pub iterations: u64,
}

/// Two trees of height `hbar` merge at the arrivals of nice stub pairs; the
/// merged phase is the killed distance chain started at the pair's distance.
#[derive(Debug, Clone)]
pub struct TwoPhaseModel {
    pub n: u64,
    pub hbar: u32,
    chain: DistanceChain,
    /// Total (unthinned) arrival rate of nice pairs.
    nice_rate: f64,
    distance: WeightedIndex<f64>,
}

impl TwoPhaseModel {
    pub fn new(d: u32, nu: f64, n: u64, height: TreeHeight) -> Result<Self> {
        let c = ModelConst::new(d, nu)?;
        if n < u64::from(d) + 1 {
            return Err(invalid(format!("n={n} must be >= d+1")));
        }
        let hbar = height.resolve(d, n)?;
        let chain = DistanceChain::new(d, nu)?;
        let df = f64::from(c.d);
        let weights: Vec<f64> = (1..=2 * hbar - 1)
            .map(|ell| f64::from(ell) * (df - 1.0).powi(ell as i32))
            .collect();
        let total: f64 = weights.iter().sum();
        let nice_rate = nu / (df * n as f64 - 1.0) * df * df / (df - 1.0) * total;
        let distance = WeightedIndex::new(&weights).map_err(|e| invalid(e.to_string()))?;
        Ok(TwoPhaseModel { n, hbar, chain, nice_rate, distance })
    }

    pub fn nice_rate(&self) -> f64 {
        self.nice_rate
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TwoPhaseSample {
        let mut first = 0.0;
        let mut second = 0.0;
        let mut iterations = 0;
        loop {
            iterations += 1;
            first += rng.sample::<f64, _>(Exp1) / self.nice_rate;
            let ell = self.distance.sample(rng) as u64 + 1;
            let run = self.chain.run(ell, rng);
            second += run.elapsed;
            if run.outcome == ChainOutcome::Hit0 {
                return TwoPhaseSample {
                    tau_first_total: first,
                    tau_second_total: second,
                    tau_final: first + second,
                    iterations,
                };
            }
        }
    }
}

pub fn two_phase_sample<R: Rng + ?Sized>(
    d: u32,
    nu: f64,
    n: u64,
    height: TreeHeight,
    rng: &mut R,
) -> Result<TwoPhaseSample> {
    Ok(TwoPhaseModel::new(d, nu, n, height)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_se;
    use crate::theta::{local_time_r, meet_prob_q, theta};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn holding_time_at_zero_is_exp2() {
        let chain = DistanceChain::new(3, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let holds: Vec<f64> = (0..50_000)
            .map(|_| {
                let mut st = chain.start(0);
                chain.step(&mut st, &mut rng);
                assert_eq!(st.position, ChainPos::At(1));
                st.clock
            })
            .collect();
        let (m, se) = mean_se(&holds);
        assert!((m - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn kill_probability_from_one() {
        let nu = 0.3;
        let chain = DistanceChain::new(3, nu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hits: Vec<f64> = (0..100_000)
            .map(|_| {
                let mut st = chain.start(1);
                chain.step(&mut st, &mut rng);
                f64::from(u8::from(st.position == ChainPos::Dagger))
            })
            .collect();
        let (m, se) = mean_se(&hits);
        assert!((m - nu / (2.0 + nu)).abs() < 3.0 * se);
    }

    #[test]
    fn jump_law_from_several_states() {
        let (d, nu) = (4u32, 0.7);
        let chain = DistanceChain::new(d, nu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in [1u64, 2, 5] {
            let reps = 40_000;
            let mut counts = [0usize; 3];
            for _ in 0..reps {
                let mut st = chain.start(i);
                chain.step(&mut st, &mut rng);
                match st.position {
                    ChainPos::At(j) if j == i + 1 => counts[0] += 1,
                    ChainPos::At(_) => counts[1] += 1,
                    ChainPos::Dagger => counts[2] += 1,
                }
            }
            let (r, l, k) = chain.rates(i);
            let tot = r + l + k;
            for (c, p) in counts.iter().zip([r / tot, l / tot, k / tot]) {
                let phat = *c as f64 / reps as f64;
                let se = (p * (1.0 - p) / reps as f64).sqrt();
                assert!((phat - p).abs() < 3.5 * se, "i={i}: {phat} vs {p}");
            }
        }
    }

    #[test]
    fn hit_probability_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (m, se) = mc_q(3, 0.3, 1, 100_000, &mut rng).unwrap();
        let q1 = meet_prob_q(&ModelConst::new(3, 0.3).unwrap(), 1).unwrap();
        assert!((m - q1).abs() < 3.0 * se, "{m} vs {q1}");
    }

    #[test]
    fn local_time_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, se) = mc_r0(10, 1.0, 100_000, &mut rng).unwrap();
        let r0 = local_time_r(&ModelConst::new(10, 1.0).unwrap(), 0).unwrap();
        assert!((m - r0).abs() < 3.0 * se, "{m} vs {r0}");
        // nu -> inf: one visit of mean 1/2, then immediate killing
        let (m, se) = mc_r0(3, 1e3, 100_000, &mut rng).unwrap();
        assert!((m - 0.5).abs() < 3.0 * se + 2e-3, "{m}");
    }

    #[test]
    fn chain_needs_positive_nu() {
        assert!(DistanceChain::new(3, 0.0).is_err());
        assert!(mc_r0(3, 0.3, 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn height_resolution() {
        assert!(matches!(
            TreeHeight::Delta(0.02).resolve(3, 100_000),
            Err(Error::DegenerateHeight { hbar: 0, .. })
        ));
        assert!(TreeHeight::Delta(0.5).resolve(3, 100_000).is_err());
        assert_eq!(TreeHeight::Explicit(4).resolve(3, 10).unwrap(), 4);
        assert!(TreeHeight::Explicit(0).resolve(3, 10).is_err());
    }

    #[test]
    fn two_phase_sample_invariants_and_fast_rewiring_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let model = TwoPhaseModel::new(3, 5.0, n, TreeHeight::Explicit(4)).unwrap();
        let samples: Vec<TwoPhaseSample> = (0..1500).map(|_| model.sample(&mut rng)).collect();
        for s in &samples {
            assert!(s.iterations >= 1);
            assert_eq!(s.tau_final, s.tau_first_total + s.tau_second_total);
        }
        let scaled: Vec<f64> = samples.iter().map(|s| s.tau_final / n as f64).collect();
        let (m, se) = mean_se(&scaled);
        let th = theta(&ModelConst::new(3, 5.0).unwrap()).unwrap();
        assert!(th > 0.9);
        // finite-height truncation biases the mean up by under 1% here
        assert!((m - 1.0 / (2.0 * th)).abs() < 3.0 * se + 0.01 / (2.0 * th), "{m} vs {}", 1.0 / (2.0 * th));
    }

    #[test]
    fn chain_outcome_is_the_bernoulli() {
        // success frequency of the unconditioned chain is q(ell)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = ModelConst::new(3, 0.3).unwrap();
        for ell in 1..=3u64 {
            let (m, se) = mc_q(3, 0.3, ell, 40_000, &mut rng).unwrap();
            let q = meet_prob_q(&c, ell as usize).unwrap();
            assert!((m - q).abs() < 3.5 * se, "ell={ell}: {m} vs {q}");
        }
    }
}
