//! The same bitwise attack, but against the server listening on a socket.

use std::sync::Arc;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wuplab::attacks::{cca2_attack, Cca2Config};
use wuplab::oracle::{serve_tcp, OracleConfig, OracleServer, TcpOracle};
use wuplab::rsa::keygen;
use wuplab::victim_prng::SessionKey;
use wuplab::wup::{seal_session, WupMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let kp = keygen(1024, &BigUint::from(65537u32), &mut rng)?;
    let server = Arc::new(OracleServer::new(OracleConfig::new(kp.clone())));
    let service = serve_tcp(Arc::clone(&server), "127.0.0.1:0")?;
    println!("oracle on {}", service.local_addr());

    let victim_key = SessionKey::from_u128(rng.gen());
    let captured = seal_session(&kp.public, &victim_key, &WupMessage::sample_request("victim"))?;
    let mut oracle = TcpOracle::new(service.local_addr());
    let res = cca2_attack(&captured, &mut oracle, &kp.public, &Cca2Config::default())?;
    service.shutdown();

    println!("{res}");
    println!("transcript: {} entries, {} accepted", server.transcript().len(), server.transcript().accepted());
    for entry in server.transcript().snapshot().iter().take(3) {
        println!("  {}", serde_json::to_string(entry)?);
    }
    assert!(res.recovered_key.same_key(&victim_key));
    Ok(())
}
