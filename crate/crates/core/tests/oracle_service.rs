use std::io::Write;
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wuplab::oracle::{
    read_response, serve_tcp, DecryptionOracle, InProcessOracle, OracleConfig, OracleReply, OracleServer, TcpOracle,
};
use wuplab::rsa::{keygen, RsaKeyPair};
use wuplab::victim_prng::SessionKey;
use wuplab::wup::{seal_session, seal_with_blob, EncryptedSession, WupMessage};

fn key_pair(seed: u64) -> RsaKeyPair {
    keygen(1024, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

/// Half honest sessions, half whose payload key differs from the wrapped one.
fn mixed_sessions(kp: &RsaKeyPair, count: usize, rng: &mut ChaCha20Rng) -> Vec<(EncryptedSession, bool)> {
    (0..count)
        .map(|i| {
            let key = SessionKey::from_u128(rng.gen());
            let msg = WupMessage::sample_request("mixed").with_field("i", i.to_string().as_str());
            if rng.gen_bool(0.5) {
                (seal_session(&kp.public, &key, &msg).unwrap(), true)
            } else {
                let other = SessionKey::from_u128(rng.gen());
                let blob = seal_session(&kp.public, &key, &msg).unwrap().blob_value();
                (seal_with_blob(&kp.public, &blob, &other, &msg).unwrap(), false)
            }
        })
        .collect()
}

#[test]
fn tcp_and_in_process_give_identical_replies() {
    let kp = key_pair(21);
    let local = Arc::new(OracleServer::new(OracleConfig::new(kp.clone())));
    let remote = Arc::new(OracleServer::new(OracleConfig::new(kp.clone())));
    let service = serve_tcp(Arc::clone(&remote), "127.0.0.1:0").unwrap();

    let mut rng = ChaCha20Rng::seed_from_u64(22);
    let sessions = mixed_sessions(&kp, 500, &mut rng);
    let mut in_proc = InProcessOracle::new(Arc::clone(&local), "t");
    let mut tcp = TcpOracle::new(service.local_addr());
    for (sess, honest) in &sessions {
        let a = in_proc.query(sess).unwrap();
        let b = tcp.query(sess).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.responded(), *honest);
    }
    service.shutdown();
    assert_eq!(local.transcript().len(), 500);
    assert_eq!(remote.transcript().len(), 500);
    assert_eq!(local.transcript().accepted(), remote.transcript().accepted());
}

#[test]
fn sixty_four_concurrent_clients() {
    let kp = key_pair(23);
    let server = Arc::new(OracleServer::new(OracleConfig::new(kp.clone())));
    let service = serve_tcp(Arc::clone(&server), "127.0.0.1:0").unwrap();
    let addr = service.local_addr();

    let workers: Vec<_> = (0..64u64)
        .map(|c| {
            let public = kp.public.clone();
            thread::spawn(move || {
                let mut rng = ChaCha20Rng::seed_from_u64(1000 + c);
                let mut oracle = TcpOracle::new(addr).with_timeout(Duration::from_secs(10));
                for _ in 0..4 {
                    let key = SessionKey::from_u128(rng.gen());
                    let sess = seal_session(&public, &key, &WupMessage::sample_request("c")).unwrap();
                    match oracle.query(&sess).unwrap() {
                        OracleReply::Response(bytes) => {
                            assert_eq!(read_response(&key, &bytes).unwrap().field_str("msg"), Some("ok"));
                        }
                        OracleReply::Silence => panic!("honest session got no reply"),
                    }
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    service.shutdown();
    assert_eq!(server.transcript().len(), 256);
    assert_eq!(server.transcript().accepted(), 256);
}

#[test]
fn malformed_frames_do_not_kill_the_service() {
    let kp = key_pair(24);
    let server = Arc::new(OracleServer::new(OracleConfig::new(kp.clone())));
    let service = serve_tcp(Arc::clone(&server), "127.0.0.1:0").unwrap();
    let addr = service.local_addr();

    // absurd length prefix, truncated frame, garbage body
    for junk in [&[0xff, 0xff, 0xff, 0xff, 1][..], &[0, 0, 0, 9, 1, 2][..]] {
        let mut s = TcpStream::connect(addr).unwrap();
        s.write_all(junk).unwrap();
    }
    let garbage = TcpOracle::new(addr).send_raw(b"not a session").unwrap();
    assert_eq!(garbage, OracleReply::Silence);

    let key = SessionKey::from_u128(42);
    let sess = seal_session(&kp.public, &key, &WupMessage::sample_request("after")).unwrap();
    assert!(TcpOracle::new(addr).query(&sess).unwrap().responded());

    // give the dropped connections time to be logged
    thread::sleep(Duration::from_millis(200));
    service.shutdown();
    assert_eq!(server.transcript().len(), 4, "one entry per connection");
    assert_eq!(server.transcript().accepted(), 1);
}
