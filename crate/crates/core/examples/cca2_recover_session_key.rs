//! Recover a captured session key from the server's accept/reject
//! behaviour alone, one bit per query.

use std::sync::Arc;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wuplab::attacks::{cca2_attack, Cca2Config};
use wuplab::oracle::{InProcessOracle, OracleConfig, OracleServer};
use wuplab::rsa::keygen;
use wuplab::victim_prng::SessionKey;
use wuplab::wup::{seal_session, WupMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let kp = keygen(1024, &BigUint::from(65537u32), &mut rng)?;
    let server = Arc::new(OracleServer::new(OracleConfig::new(kp.clone())));

    // what the attacker captured off the wire
    let victim_key = SessionKey::from_u128(rng.gen());
    let captured = seal_session(&kp.public, &victim_key, &WupMessage::sample_request("victim"))?;

    let mut oracle = InProcessOracle::new(Arc::clone(&server), "attacker");
    let res = cca2_attack(&captured, &mut oracle, &kp.public, &Cca2Config::default())?;

    let bits: String = res.per_bit_outcomes.iter().rev().map(|&responded| if responded { '0' } else { '1' }).collect();
    println!("{res}");
    println!("victim key  {}", victim_key.to_hex());
    println!("bits (high first, read from silence/response): {bits}");
    println!("server saw {} queries, answered {}", server.transcript().len(), server.transcript().accepted());
    assert!(res.recovered_key.same_key(&victim_key));
    Ok(())
}
