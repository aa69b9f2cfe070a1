//! Fisher-Wright reference `dB = sqrt(2 theta B (1 - B)) dW`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Absorbed {
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FwPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub absorbed_at: Option<Absorbed>,
}

impl FwPath {
    /// Value at the recorded time nearest to `s`.
    pub fn value_at(&self, s: f64) -> f64 {
        let k = self.times.partition_point(|&t| t < s);
        let k = match k {
            0 => 0,
            k if k == self.times.len() => k - 1,
            k if s - self.times[k - 1] <= self.times[k] - s => k - 1,
            k => k,
        };
        self.values[k]
    }
}

/// Largest step `<= dt` that divides `record_step` evenly, so recorded times
/// fall on multiples of `record_step`.
pub fn aligned_dt(dt: f64, record_step: f64) -> (f64, usize) {
    let every = (record_step / dt).ceil().max(1.0) as usize;
    (record_step / every as f64, every)
}

/// Default step `1e-3 * min(1, 1 / (2 theta))`.
pub fn default_dt(theta: f64) -> f64 {
    if theta > 0.0 {
        1e-3 * (1.0_f64).min(1.0 / (2.0 * theta))
    } else {
        1e-3
    }
}

/// Euler-Maruyama with clamp-then-absorb at the boundaries. Records every
/// `record_every`-th step plus the final time.
pub fn fw_simulate<R: Rng + ?Sized>(
    theta: f64,
    u: f64,
    horizon: f64,
    dt: f64,
    record_every: usize,
    rng: &mut R,
) -> Result<FwPath> {
    if !(0.0..=1.0).contains(&u) {
        return Err(invalid(format!("u={u} must lie in [0,1]")));
    }
    if !(dt > 0.0) || !(horizon >= 0.0) || !(theta >= 0.0) {
        return Err(invalid("need dt > 0, horizon >= 0, theta >= 0"));
    }
    let steps = (horizon / dt).round() as usize;
    let every = record_every.max(1);
    let mut b = u;
    let mut absorbed_at = match b {
        0.0 => Some(Absorbed::Zero),
        1.0 => Some(Absorbed::One),
        _ => None,
    };
    let mut times = vec![0.0];
    let mut values = vec![b];
    let sq = (2.0 * theta * dt).sqrt();
    for k in 1..=steps {
        if absorbed_at.is_none() {
            let z: f64 = rng.sample(StandardNormal);
            absorbed_at = em_step(&mut b, sq, z);
        }
        if k % every == 0 || k == steps {
            times.push(k as f64 * dt);
            values.push(b);
        }
    }
    Ok(FwPath { times, values, absorbed_at })
}

/// One clamp-then-absorb Euler-Maruyama step; returns `None` while interior.
#[inline]
fn em_step(b: &mut f64, sq: f64, z: f64) -> Option<Absorbed> {
    *b += sq * (*b * (1.0 - *b)).sqrt() * z;
    if *b <= 0.0 {
        *b = 0.0;
        Some(Absorbed::Zero)
    } else if *b >= 1.0 {
        *b = 1.0;
        Some(Absorbed::One)
    } else {
        None
    }
}

/// Endpoint of the scheme driven by the given standard normal increments.
pub fn endpoint_from_normals(theta: f64, u: f64, dt: f64, normals: &[f64]) -> f64 {
    let sq = (2.0 * theta * dt).sqrt();
    let mut b = u;
    if b <= 0.0 || b >= 1.0 {
        return b;
    }
    for &z in normals {
        if em_step(&mut b, sq, z).is_some() {
            break;
        }
    }
    b
}

/// `E[B_s (1 - B_s)] = u (1 - u) exp(-2 theta s)`.
pub fn fw_heterozygosity(theta: f64, u: f64, s: f64) -> f64 {
    u * (1.0 - u) * (-2.0 * theta * s).exp()
}
