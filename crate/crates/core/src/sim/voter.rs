//! Voter model on the rewiring graph with an incrementally maintained
//! discordance counter.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp1};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::graph::{rewire_total_rate, GraphState, Stub};

#[derive(Debug, Clone, PartialEq)]
pub enum VoterInit {
    /// i.i.d. Bernoulli(u) opinions.
    Density(f64),
    Explicit(Vec<u8>),
}

/// Grid samples of the opinion density `O` and discordance density `D`,
/// together with the exact running integrals of `D` and `O (1 - O)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoterTrace {
    pub n: usize,
    pub d: usize,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub ones: Vec<u32>,
    pub discordance: Vec<f64>,
    /// `int_0^t D_s ds` at each sample time.
    pub int_discordance: Vec<f64>,
    /// `int_0^t O_s (1 - O_s) ds` at each sample time.
    pub int_heterozygosity: Vec<f64>,
    pub consensus_time: Option<f64>,
    /// Whether the incremental discordance counter matched a full recount at
    /// every sample taken before consensus.
    pub recount_ok: bool,
}

impl VoterTrace {
    pub fn opinion(&self, k: usize) -> f64 {
        f64::from(self.ones[k]) / self.n as f64
    }

    pub fn opinions(&self) -> Vec<f64> {
        (0..self.times.len()).map(|k| self.opinion(k)).collect()
    }

    pub fn initial_opinion(&self) -> f64 {
        self.opinion(0)
    }

    fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// `(int_0^t D, int_0^t O(1-O))`.
    ///
    /// Exact when `t` is a sample time or lies after consensus; otherwise
    /// interpolated linearly between the neighbouring samples.
    pub fn cumulative_at(&self, t: f64) -> Option<(f64, f64)> {
        if t < 0.0 || t > self.horizon * (1.0 + 1e-12) {
            return None;
        }
        if let Some(k) = self.index_of(t) {
            return Some((self.int_discordance[k], self.int_heterozygosity[k]));
        }
        let last = self.times.len() - 1;
        if let Some(tc) = self.consensus_time {
            if t >= tc {
                return Some((self.int_discordance[last], self.int_heterozygosity[last]));
            }
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let lerp = |v: &[f64]| v[k - 1] + w * (v[k] - v[k - 1]);
        Some((lerp(&self.int_discordance), lerp(&self.int_heterozygosity)))
    }

    /// Sample index for an exact grid time.
    pub fn sample_at(&self, t: f64) -> Option<usize> {
        self.index_of(t)
    }
}

struct VoterState {
    graph: GraphState,
    eta: Vec<u8>,
    ones: u32,
    /// Number of stubs whose edge is discordant (twice the discordant edge count).
    disc_stubs: u64,
}

impl VoterState {
    fn new(graph: GraphState, eta: Vec<u8>) -> Self {
        let ones = eta.iter().map(|&v| u32::from(v)).sum();
        let mut s = VoterState { graph, eta, ones, disc_stubs: 0 };
        s.disc_stubs = s.recount();
        s
    }

    #[inline]
    fn discordant(&self, s: Stub) -> bool {
        self.eta[self.graph.vertex(s) as usize] != self.eta[self.graph.neighbor_via(s) as usize]
    }

    fn recount(&self) -> u64 {
        (0..self.graph.num_stubs() as Stub)
            .filter(|&s| self.discordant(s))
            .count() as u64
    }

    fn density(&self) -> f64 {
        self.disc_stubs as f64 / self.graph.num_stubs() as f64
    }

    fn heterozygosity(&self) -> f64 {
        let o = f64::from(self.ones) / self.graph.n() as f64;
        o * (1.0 - o)
    }

    fn consensus(&self) -> bool {
        self.ones == 0 || self.ones as usize == self.graph.n()
    }

    /// Fires the clock of stub `s`: its vertex copies the opinion across `s`.
    #[inline]
    fn voter_step(&mut self, s: Stub) {
        let x = self.graph.vertex(s);
        let y = self.graph.neighbor_via(s);
        let new = self.eta[y as usize];
        if self.eta[x as usize] == new {
            return;
        }
        self.eta[x as usize] = new;
        if new == 1 {
            self.ones += 1;
        } else {
            self.ones -= 1;
        }
        for t in self.graph.stubs_of(x) {
            let w = self.graph.neighbor_via(t);
            if w == x {
                continue;
            }
            if self.eta[w as usize] == new {
                self.disc_stubs -= 2;
            } else {
                self.disc_stubs += 2;
            }
        }
    }

    #[inline]
    fn rewire_step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let m = self.graph.num_stubs() as Stub;
        let a = rng.random_range(0..m);
        let mut b = rng.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        let a2 = self.graph.partner(a);
        if a2 == b {
            return;
        }
        let b2 = self.graph.partner(b);
        let before = u64::from(self.discordant(a)) + u64::from(self.discordant(b));
        self.graph.apply_rewire(a, b);
        let after = u64::from(self.discordant(a)) + u64::from(self.discordant(a2));
        debug_assert_eq!(self.graph.partner(a2), b2);
        self.disc_stubs = self.disc_stubs + 2 * after - 2 * before;
    }
}

/// Runs the voter model on a uniform initial graph up to `horizon` or
/// consensus, sampling on the grid `0, grid_step, 2 grid_step, ...` plus the
/// horizon itself.
pub fn simulate_voter<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    nu: f64,
    init: &VoterInit,
    horizon: f64,
    grid_step: f64,
    rng: &mut R,
) -> Result<VoterTrace> {
    let graph = GraphState::sample_matching(n, d, rng)?;
    simulate_voter_on(graph, nu, init, horizon, grid_step, rng)
}

pub fn simulate_voter_on<R: Rng + ?Sized>(
    graph: GraphState,
    nu: f64,
    init: &VoterInit,
    horizon: f64,
    grid_step: f64,
    rng: &mut R,
) -> Result<VoterTrace> {
    let n = graph.n();
    let d = graph.d();
    if !(horizon > 0.0) || !(grid_step > 0.0) {
        return Err(invalid("horizon and grid step must be > 0"));
    }
    if !(nu >= 0.0) {
        return Err(invalid(format!("nu={nu} must be >= 0")));
    }
    let eta = match init {
        VoterInit::Density(u) => {
            let coin = Bernoulli::new(*u).map_err(|_| invalid(format!("density u={u} outside [0,1]")))?;
            (0..n).map(|_| u8::from(coin.sample(rng))).collect()
        }
        VoterInit::Explicit(xi) => {
            if xi.len() != n || xi.iter().any(|&v| v > 1) {
                return Err(invalid("explicit configuration must be n values in {0,1}"));
            }
            xi.clone()
        }
    };

    let mut grid: Vec<f64> = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * grid_step;
        if t >= horizon * (1.0 - 1e-12) {
            break;
        }
        grid.push(t);
        k += 1;
    }
    grid.push(horizon);

    let mut st = VoterState::new(graph, eta);
    let rewire_rate = rewire_total_rate(n, d, nu);
    let voter_rate = n as f64;
    let total_rate = voter_rate + rewire_rate;
    let num_stubs = st.graph.num_stubs() as Stub;

    let mut trace = VoterTrace {
        n,
        d,
        horizon,
        times: Vec::with_capacity(grid.len()),
        ones: Vec::with_capacity(grid.len()),
        discordance: Vec::with_capacity(grid.len()),
        int_discordance: Vec::with_capacity(grid.len()),
        int_heterozygosity: Vec::with_capacity(grid.len()),
        consensus_time: None,
        recount_ok: true,
    };

    let mut t = 0.0;
    let mut int_d = 0.0;
    let mut int_h = 0.0;
    let mut next_event = if st.consensus() {
        trace.consensus_time = Some(0.0);
        f64::INFINITY
    } else {
        rng.sample::<f64, _>(Exp1) / total_rate
    };

    for &g in &grid {
        while next_event <= g {
            int_d += st.density() * (next_event - t);
            int_h += st.heterozygosity() * (next_event - t);
            t = next_event;
            if rng.random::<f64>() * total_rate < voter_rate {
                let s = rng.random_range(0..num_stubs);
                st.voter_step(s);
            } else {
                st.rewire_step(rng);
            }
            if st.consensus() {
                trace.consensus_time = Some(t);
                next_event = f64::INFINITY;
            } else {
                next_event = t + rng.sample::<f64, _>(Exp1) / total_rate;
            }
        }
        int_d += st.density() * (g - t);
        int_h += st.heterozygosity() * (g - t);
        t = g;
        if trace.consensus_time.is_none() && st.recount() != st.disc_stubs {
            trace.recount_ok = false;
        }
        trace.times.push(g);
        trace.ones.push(st.ones);
        trace.discordance.push(st.density());
        trace.int_discordance.push(int_d);
        trace.int_heterozygosity.push(int_h);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusSummary {
    /// `tau_cons / n` per replica; censored replicas are excluded.
    pub scaled_times: Vec<f64>,
    pub censored: usize,
    pub mean: f64,
    pub se: f64,
    /// `2 H(u) / theta`, the conjectured limit of the mean.
    pub reference: f64,
}

/// Binary entropy in nats.
pub fn entropy(u: f64) -> f64 {
    let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    h(u) + h(1.0 - u)
}

/// Diagnostic: consensus times over `reps` replicas, each with its own stream
/// from `rng_for(replica)`.
pub fn consensus_time_experiment<F, R>(
    n: usize,
    d: usize,
    nu: f64,
    u: f64,
    theta: f64,
    reps: usize,
    rng_for: F,
) -> Result<ConsensusSummary>
where
    F: Fn(u64) -> R + Sync,
    R: Rng,
{
    use rayon::prelude::*;
    if !(u > 0.0 && u < 1.0) {
        return Err(invalid(format!("u={u} must lie in (0,1)")));
    }
    let cap = 200.0 * n as f64;
    let outcomes: Vec<Result<Option<f64>>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(r);
            let tr = simulate_voter(n, d, nu, &VoterInit::Density(u), cap, cap, &mut rng)?;
            Ok(tr.consensus_time.map(|t| t / n as f64))
        })
        .collect();
    let mut scaled_times = Vec::with_capacity(reps);
    let mut censored = 0;
    for o in outcomes {
        match o? {
            Some(v) => scaled_times.push(v),
            None => censored += 1,
        }
    }
    let (mean, se) = crate::stats::mean_se(&scaled_times);
    Ok(ConsensusSummary {
        scaled_times,
        censored,
        mean,
        se,
        reference: 2.0 * entropy(u) / theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_is_absorbed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tr = simulate_voter(50, 3, 0.3, &VoterInit::Density(0.0), 10.0, 1.0, &mut rng).unwrap();
        assert_eq!(tr.consensus_time, Some(0.0));
        assert!(tr.ones.iter().all(|&o| o == 0));
        assert!(tr.discordance.iter().all(|&x| x == 0.0));
        assert_eq!(*tr.int_discordance.last().unwrap(), 0.0);
    }

    #[test]
    fn counter_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for nu in [0.0, 0.3, 5.0] {
            let tr = simulate_voter(120, 3, nu, &VoterInit::Density(0.5), 60.0, 0.5, &mut rng).unwrap();
            assert!(tr.recount_ok);
            for k in 0..tr.times.len() {
                let o = tr.ones[k];
                if o == 0 || o as usize == tr.n {
                    assert_eq!(tr.discordance[k], 0.0);
                }
                assert!((0.0..=1.0).contains(&tr.discordance[k]));
            }
        }
    }

    #[test]
    fn grid_includes_horizon_and_integrals_grow() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tr = simulate_voter(60, 4, 1.0, &VoterInit::Density(0.5), 2.5, 1.0, &mut rng).unwrap();
        assert_eq!(tr.times, vec![0.0, 1.0, 2.0, 2.5]);
        assert!(tr.int_discordance.windows(2).all(|w| w[1] >= w[0]));
        let (a, b) = tr.cumulative_at(2.5).unwrap();
        assert_eq!(a, tr.int_discordance[3]);
        assert_eq!(b, tr.int_heterozygosity[3]);
        assert!(tr.cumulative_at(3.0).is_none());
    }

    #[test]
    fn explicit_init_validated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(simulate_voter(4, 3, 0.0, &VoterInit::Explicit(vec![0, 1]), 1.0, 1.0, &mut rng).is_err());
        assert!(simulate_voter(4, 3, 0.0, &VoterInit::Density(1.5), 1.0, 1.0, &mut rng).is_err());
        let tr = simulate_voter(4, 3, 0.0, &VoterInit::Explicit(vec![1, 1, 1, 1]), 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(tr.consensus_time, Some(0.0));
    }

    #[test]
    fn consensus_reached_and_reproducible() {
        let run = |seed| {
            consensus_time_experiment(60, 3, 0.3, 0.5, 0.65, 8, |r| crate::rng::replica_rng(seed, r)).unwrap()
        };
        let a = run(5);
        let b = run(5);
        assert_eq!(a, b);
        assert_eq!(a.censored, 0);
        assert!(a.mean > 0.0);
        let small = consensus_time_experiment(60, 3, 0.3, 0.02, 0.65, 8, |r| crate::rng::replica_rng(5, r)).unwrap();
        assert!(small.mean < a.mean);
    }

    #[test]
    fn entropy_values() {
        assert!((entropy(0.5) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(0.0), 0.0);
    }
}
