use std::fmt;

use num_bigint::BigUint;
use rand::{Rng, RngCore};
use serde_json::{json, Value};

use super::AttackError;
use crate::numtheory::{factorize, NumTheoryError, DEFAULT_FACTOR_BUDGET};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitEstimate {
    pub bit_length: u32,
    pub m1: u32,
    pub m2: u32,
    /// Samples that were fully factored and decided.
    pub samples: u64,
    pub successes: u64,
    /// Samples dropped because factoring ran out of budget.
    pub skipped: u64,
    pub probability: f64,
}

impl SplitEstimate {
    pub fn to_json(&self) -> Value {
        json!({
            "bit_length": self.bit_length,
            "m1": self.m1,
            "m2": self.m2,
            "samples": self.samples,
            "successes": self.successes,
            "skipped": self.skipped,
            "probability": self.probability,
        })
    }
}

impl fmt::Display for SplitEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-bit, m1={} m2={}: {}/{} split ({:.1}%)",
            self.bit_length,
            self.m1,
            self.m2,
            self.successes,
            self.samples,
            100.0 * self.probability
        )?;
        if self.skipped > 0 {
            write!(f, ", {} skipped", self.skipped)?;
        }
        Ok(())
    }
}

fn bound(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

/// Whether `m` (given as prime powers) has a divisor `d <= 2^m1` with
/// `m / d <= 2^m2`.
///
/// Depth-first over the exponent choices, abandoning any branch whose
/// partial divisor already exceeds `2^m1`.
pub fn can_split(m: u128, factors: &[(u128, u32)], m1: u32, m2: u32) -> bool {
    let (hi1, hi2) = (bound(m1), bound(m2));
    if m == 0 {
        return false;
    }
    // smallest admissible d is ceil(m / 2^m2)
    let lo = if m2 >= 128 { 1 } else { m.div_ceil(hi2) };
    if lo > hi1 {
        return false;
    }
    fn walk(d: u128, rest: &[(u128, u32)], lo: u128, hi: u128) -> bool {
        let Some((&(p, e), tail)) = rest.split_first() else {
            return d >= lo;
        };
        let mut d = d;
        for k in 0..=e {
            if walk(d, tail, lo, hi) {
                return true;
            }
            if k == e {
                break;
            }
            match d.checked_mul(p) {
                Some(next) if next <= hi => d = next,
                _ => break,
            }
        }
        false
    }
    walk(1, factors, lo, hi1)
}

pub fn split_probability<R: RngCore + ?Sized>(bit_length: u32, m1: u32, m2: u32, samples: u64, rng: &mut R) -> Result<SplitEstimate, AttackError> {
    split_probability_with_budget(bit_length, m1, m2, samples, DEFAULT_FACTOR_BUDGET, rng)
}

/// Estimate how often a uniform integer in `[1, 2^bit_length)` is a product
/// `M1 * M2` with `M1 <= 2^m1`, `M2 <= 2^m2`.
pub fn split_probability_with_budget<R: RngCore + ?Sized>(
    bit_length: u32,
    m1: u32,
    m2: u32,
    samples: u64,
    budget: u64,
    rng: &mut R,
) -> Result<SplitEstimate, AttackError> {
    if !(2..=128).contains(&bit_length) {
        return Err(AttackError::InvalidParameter(format!("bit length {bit_length} not in 2..=128")));
    }
    if samples == 0 {
        return Err(AttackError::InvalidParameter("need at least one sample".into()));
    }
    let top = bound(bit_length);
    let (mut decided, mut successes, mut skipped) = (0u64, 0u64, 0u64);
    for _ in 0..samples {
        let m: u128 = rng.gen_range(1..top);
        let f = match factorize(&BigUint::from(m), budget) {
            Ok(f) => f,
            Err(NumTheoryError::BudgetExhausted { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let powers: Vec<(u128, u32)> = f
            .factors()
            .iter()
            .map(|(p, e)| (u128::try_from(p).expect("factor of a u128"), *e))
            .collect();
        decided += 1;
        if can_split(m, &powers, m1, m2) {
            successes += 1;
        }
    }
    Ok(SplitEstimate {
        bit_length,
        m1,
        m2,
        samples: decided,
        successes,
        skipped,
        probability: if decided == 0 { 0.0 } else { successes as f64 / decided as f64 },
    })
}
