//! Random `d`-regular multigraphs as perfect matchings of stubs, and the
//! four-stub rewiring move.
//!
//! Stub `(x, i)` (vertex `x`, local index `i` in `1..=d`) has global index
//! `x * d + (i - 1)`. Self-loops and multi-edges are allowed and are counted
//! with multiplicity everywhere.

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};

pub type Stub = u32;
pub type Vertex = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphState {
    n: usize,
    d: usize,
    matching: Vec<Stub>,
}

/// One arrival of the rewiring clock. `applied` is false for the no-op cases
/// `a == b` and `a` already matched to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewireEvent {
    pub time: f64,
    pub a: Stub,
    pub b: Stub,
    pub applied: bool,
}

fn check_size(n: usize, d: usize) -> Result<()> {
    if d == 0 || n < 2 {
        return Err(invalid(format!("need n >= 2 and d >= 1, got n={n}, d={d}")));
    }
    if !(n * d).is_multiple_of(2) {
        return Err(invalid(format!("dn = {} must be even", n * d)));
    }
    if n * d > u32::MAX as usize {
        return Err(invalid("dn exceeds the stub index range"));
    }
    Ok(())
}

impl GraphState {
    /// Uniform perfect matching of the `dn` stubs (configuration model).
    pub fn sample_matching<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Self> {
        check_size(n, d)?;
        let mut stubs: Vec<Stub> = (0..(n * d) as Stub).collect();
        stubs.shuffle(rng);
        let mut matching = vec![0; n * d];
        for pair in stubs.chunks_exact(2) {
            matching[pair[0] as usize] = pair[1];
            matching[pair[1] as usize] = pair[0];
        }
        Ok(GraphState { n, d, matching })
    }

    /// Builds a state from an explicit matching, validating the invariants.
    pub fn from_matching(n: usize, d: usize, matching: Vec<Stub>) -> Result<Self> {
        check_size(n, d)?;
        if matching.len() != n * d {
            return Err(invalid(format!(
                "matching has {} entries, expected {}",
                matching.len(),
                n * d
            )));
        }
        let g = GraphState { n, d, matching };
        if !g.is_valid() {
            return Err(invalid("matching is not a fixed-point-free involution"));
        }
        Ok(g)
    }

    /// Builds a state from an edge list of `(x, y)` vertex pairs, assigning
    /// stubs in order of appearance.
    pub fn from_edges(n: usize, d: usize, edges: &[(Vertex, Vertex)]) -> Result<Self> {
        check_size(n, d)?;
        let mut next = vec![0usize; n];
        let mut matching = vec![Stub::MAX; n * d];
        let mut take = |x: Vertex| -> Result<Stub> {
            let x = x as usize;
            if x >= n || next[x] >= d {
                return Err(invalid(format!("vertex {x} out of range or over degree")));
            }
            let s = (x * d + next[x]) as Stub;
            next[x] += 1;
            Ok(s)
        };
        for &(x, y) in edges {
            let sx = take(x)?;
            let sy = take(y)?;
            matching[sx as usize] = sy;
            matching[sy as usize] = sx;
        }
        Self::from_matching(n, d, matching)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_stubs(&self) -> usize {
        self.matching.len()
    }

    pub fn matching(&self) -> &[Stub] {
        &self.matching
    }

    #[inline]
    pub fn vertex(&self, s: Stub) -> Vertex {
        s / self.d as Stub
    }

    #[inline]
    pub fn partner(&self, s: Stub) -> Stub {
        self.matching[s as usize]
    }

    /// Vertex reached through stub `s`.
    #[inline]
    pub fn neighbor_via(&self, s: Stub) -> Vertex {
        self.vertex(self.partner(s))
    }

    #[inline]
    pub fn stubs_of(&self, x: Vertex) -> std::ops::Range<Stub> {
        let d = self.d as Stub;
        x * d..x * d + d
    }

    /// Involution and fixed-point-free check over all stubs.
    pub fn is_valid(&self) -> bool {
        let m = self.matching.len();
        self.matching.iter().enumerate().all(|(s, &t)| {
            (t as usize) < m && t as usize != s && self.matching[t as usize] as usize == s
        })
    }

    /// Four-stub swap: `a-a', b-b'` becomes `a-b, a'-b'`. Returns whether the
    /// state changed.
    #[inline]
    pub fn apply_rewire(&mut self, a: Stub, b: Stub) -> bool {
        if a == b {
            return false;
        }
        let a2 = self.matching[a as usize];
        if a2 == b {
            return false;
        }
        let b2 = self.matching[b as usize];
        self.matching[a as usize] = b;
        self.matching[b as usize] = a;
        self.matching[a2 as usize] = b2;
        self.matching[b2 as usize] = a2;
        true
    }

    /// Draws one rewiring arrival: `a` uniform over all stubs, `b` uniform over
    /// the other `dn - 1` stubs. Applies it and returns the event.
    #[inline]
    pub fn random_rewire<R: Rng + ?Sized>(&mut self, time: f64, rng: &mut R) -> RewireEvent {
        let m = self.matching.len() as Stub;
        let a = rng.random_range(0..m);
        let mut b = rng.random_range(0..m - 1);
        if b >= a {
            b += 1;
        }
        let applied = self.apply_rewire(a, b);
        RewireEvent { time, a, b, applied }
    }

    /// Ordered pair of endpoints of a uniformly chosen edge (via a uniform stub).
    pub fn uniform_edge<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vertex, Vertex) {
        let s = rng.random_range(0..self.matching.len() as Stub);
        (self.vertex(s), self.neighbor_via(s))
    }

    /// Graph distance, or `None` when larger than `cutoff` or disconnected.
    pub fn bfs_distance(&self, x: Vertex, y: Vertex, cutoff: usize) -> Option<usize> {
        if x == y {
            return Some(0);
        }
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = VecDeque::new();
        dist[x as usize] = 0;
        queue.push_back(x);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v as usize];
            if dv >= cutoff {
                break;
            }
            for s in self.stubs_of(v) {
                let w = self.neighbor_via(s);
                if dist[w as usize] == usize::MAX {
                    dist[w as usize] = dv + 1;
                    if w == y {
                        return Some(dv + 1);
                    }
                    queue.push_back(w);
                }
            }
        }
        None
    }

    /// Debug dump, one `s match[s]` line per stub.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (s, t) in self.matching.iter().enumerate() {
            writeln!(out, "{s} {t}")?;
        }
        Ok(())
    }
}

/// Total rate of the rewiring clock: each of the `dn` stubs fires at `nu / 4`.
pub fn rewire_total_rate(n: usize, d: usize, nu: f64) -> f64 {
    nu * (n * d) as f64 / 4.0
}
