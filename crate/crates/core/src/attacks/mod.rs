//! Attack engines against the simulated client and server.
//!
//! Each result type has a `to_json` record for machine consumers and a
//! `Display` summary for humans. Wall-clock fields are left out of the JSON
//! so that seeded runs are byte-identical.

mod cca2;
mod mitm;
mod prng;
mod split;

pub use cca2::{cca2_attack, Cca2Config, Cca2Result};
pub use mitm::{mitm_attack, mitm_build_table, mitm_build_table_with_limit, mitm_cost, MitmCost, MitmSolver, MitmTable, MITM_TABLE_LIMIT};
pub use prng::{payload_key_check, prng_attack, prng_attack_with, search_order, PrngAttackResult};
pub use split::{can_split, split_probability, split_probability_with_budget, SplitEstimate};

use num_bigint::BigUint;
use serde_json::{json, Value};
use thiserror::Error;

use crate::numtheory::{factor_semiprime, Factorization, NumTheoryError};
use crate::oracle::OracleError;
use crate::wup::WupError;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("seed not in window after {guesses} guesses")]
    SeedNotInWindow { guesses: u64 },
    #[error("oracle failed after {attempts} attempts: {source}")]
    Oracle { attempts: u32, source: OracleError },
    #[error("table for m1 = {m1} exceeds the limit of m1 = {limit}; it would need {estimate}")]
    TableTooLarge { m1: u32, limit: u32, estimate: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    NumTheory(#[from] NumTheoryError),
    #[error(transparent)]
    Protocol(#[from] WupError),
}

/// Recover the prime factors of a weak RSA modulus.
pub fn factor_modulus(n: &BigUint) -> Result<Factorization, AttackError> {
    Ok(factor_semiprime(n)?)
}

/// JSON record for a factorization: decimal strings, smallest prime first.
pub fn factorization_json(n: &BigUint, f: &Factorization) -> Value {
    let factors: Vec<String> = f.primes_with_multiplicity().iter().map(|p| p.to_string()).collect();
    json!({
        "n": n.to_string(),
        "factors": factors,
        "semiprime": f.is_semiprime(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::gen_prime;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::time::{Duration, Instant};

    #[test]
    fn factors_product_of_two_32_bit_primes_quickly() {
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        for _ in 0..5 {
            let p = gen_prime(32, &mut rng);
            let q = gen_prime(32, &mut rng);
            let n = &p * &q;
            let start = Instant::now();
            let f = factor_modulus(&n).unwrap();
            assert!(start.elapsed() < Duration::from_secs(5));
            let mut expect = vec![p, q];
            expect.sort();
            assert_eq!(f.primes_with_multiplicity(), expect);
        }
    }

    #[test]
    fn prime_modulus_is_rejected() {
        let err = factor_modulus(&BigUint::from(1_000_000_007u64)).unwrap_err();
        assert!(matches!(err, AttackError::NumTheory(NumTheoryError::NotComposite(_))));
        assert!(err.to_string().contains("not composite"), "{err}");
    }

    #[test]
    fn factorization_record_lists_decimal_factors() {
        let n = BigUint::from(3233u32);
        let v = factorization_json(&n, &factor_modulus(&n).unwrap());
        assert_eq!(v["factors"], json!(["53", "61"]));
        assert_eq!(v["semiprime"], true);
    }
}
