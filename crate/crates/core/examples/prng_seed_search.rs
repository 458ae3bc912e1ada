//! The newer client seeds its key generator with the wall clock. Knowing
//! roughly when a request was sent is enough to find the key.

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use wuplab::attacks::prng_attack;
use wuplab::rsa::keygen;
use wuplab::victim_prng::keygen_v65;
use wuplab::wup::{seal_session, WupMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kp = keygen(1024, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(1))?;
    let observed_at = 1_600_000_000_000u64;

    for offset in [0i64, 1, -1, 4_321, -20_000, 34_999] {
        let key = keygen_v65(observed_at.checked_add_signed(offset).unwrap());
        let sess = seal_session(&kp.public, &key, &WupMessage::sample_request("victim"))?;
        let hit = prng_attack(&sess, observed_at, 35_000)?;
        assert!(hit.key.same_key(&key));
        println!("offset {offset:>7} ms -> {:>6} guesses, key {}", hit.guesses, hit.key.to_hex());
    }
    Ok(())
}
