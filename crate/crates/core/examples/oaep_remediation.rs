//! With OAEP wrapping the shifted ciphertexts no longer decode, so the
//! server never answers the attacker and the key stays hidden.

use std::sync::Arc;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wuplab::attacks::{cca2_attack, Cca2Config};
use wuplab::oracle::{InProcessOracle, KeyWrapping, OracleConfig, OracleServer};
use wuplab::rsa::keygen;
use wuplab::victim_prng::SessionKey;
use wuplab::wup::{seal_session, seal_session_oaep, WupMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let kp = keygen(1024, &BigUint::from(65537u32), &mut rng)?;
    let victim_key = SessionKey::from_u128(rng.gen());
    let request = WupMessage::sample_request("victim");

    for wrapping in [KeyWrapping::Textbook, KeyWrapping::Oaep] {
        let server = Arc::new(OracleServer::new(OracleConfig::new(kp.clone()).with_wrapping(wrapping)));
        let captured = match wrapping {
            KeyWrapping::Textbook => seal_session(&kp.public, &victim_key, &request)?,
            KeyWrapping::Oaep => seal_session_oaep(&kp.public, &victim_key, &request, &mut rng)?,
        };
        let mut oracle = InProcessOracle::new(Arc::clone(&server), "attacker");
        let res = cca2_attack(&captured, &mut oracle, &kp.public, &Cca2Config::default())?;
        println!(
            "{wrapping:?}: {} of {} queries answered, key {}",
            server.transcript().accepted(),
            res.queries,
            if res.recovered_key.same_key(&victim_key) { "recovered" } else { "not recovered" }
        );
    }
    Ok(())
}
