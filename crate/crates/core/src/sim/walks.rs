//! Two independent random walks on the same rewiring graph.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{rewire_total_rate, GraphState, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// Independent uniform starting vertices.
    StationaryPair,
    /// Endpoints of a uniformly chosen edge of the initial graph.
    Edge,
    Explicit(Vertex, Vertex),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeetingResult {
    /// Meeting time, or the cap when `censored`.
    pub tau: f64,
    pub censored: bool,
    pub start_mode: StartMode,
}

/// Default censoring time `20 n / (2 theta)`.
pub fn default_t_cap(n: usize, theta: f64) -> f64 {
    20.0 * n as f64 / (2.0 * theta)
}

/// Samples a uniform initial graph and runs two walks from `start` until they
/// meet or `t_cap` elapses.
pub fn simulate_two_walks<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    nu: f64,
    start: StartMode,
    t_cap: f64,
    rng: &mut R,
) -> Result<MeetingResult> {
    if !(nu >= 0.0) {
        return Err(invalid(format!("nu={nu} must be >= 0")));
    }
    let mut graph = GraphState::sample_matching(n, d, rng)?;
    let (x, y) = match start {
        StartMode::StationaryPair => (
            rng.random_range(0..n as Vertex),
            rng.random_range(0..n as Vertex),
        ),
        StartMode::Edge => graph.uniform_edge(rng),
        StartMode::Explicit(x, y) => {
            if x as usize >= n || y as usize >= n {
                return Err(invalid(format!("start ({x}, {y}) outside [0, {n})")));
            }
            (x, y)
        }
    };
    let mut res = simulate_two_walks_on(&mut graph, x, y, nu, t_cap, rng)?;
    res.start_mode = start;
    Ok(res)
}

/// Runs the walk pair on a given graph, mutating it by rewiring.
///
/// Walk jumps form a rate-2 Poisson process; between two consecutive jumps a
/// Poisson number of uniform rewiring events is applied.
pub fn simulate_two_walks_on<R: Rng + ?Sized>(
    graph: &mut GraphState,
    mut x: Vertex,
    mut y: Vertex,
    nu: f64,
    t_cap: f64,
    rng: &mut R,
) -> Result<MeetingResult> {
    if !(t_cap > 0.0) {
        return Err(invalid(format!("t_cap={t_cap} must be > 0")));
    }
    let start_mode = StartMode::Explicit(x, y);
    if x == y {
        return Ok(MeetingResult { tau: 0.0, censored: false, start_mode });
    }
    let d = graph.d() as u32;
    let rewire_rate = rewire_total_rate(graph.n(), graph.d(), nu);
    let mut t = 0.0;
    loop {
        let dt: f64 = rng.sample::<f64, _>(Exp1) / 2.0;
        if t + dt > t_cap {
            return Ok(MeetingResult { tau: t_cap, censored: true, start_mode });
        }
        t += dt;
        if rewire_rate > 0.0 {
            let mean = rewire_rate * dt;
            let k = Poisson::new(mean)
                .map_err(|e| invalid(format!("poisson mean {mean}: {e}")))?
                .sample(rng) as u64;
            for _ in 0..k {
                graph.random_rewire(t, rng);
            }
        }
        let local = rng.random_range(0..2 * d);
        let (walker, i) = if local < d { (&mut x, local) } else { (&mut y, local - d) };
        let stub = *walker * d + i;
        *walker = graph.neighbor_via(stub);
        if x == y {
            return Ok(MeetingResult { tau: t, censored: false, start_mode });
        }
    }
}
