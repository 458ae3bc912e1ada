//! Acceptance suite A1-A7.
//!
//! Runs as a plain binary so that the PASS/FAIL line for each criterion is
//! always printed, followed by a summary. Exits non-zero if any fails.
//!
//! `cargo test --test acceptance -- A2 A5` runs a subset.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wuplab::attacks::{cca2_attack, factor_modulus, mitm_attack, mitm_build_table, mitm_cost, prng_attack, split_probability, Cca2Config};
use wuplab::numtheory::parse_decimal;
use wuplab::oracle::{InProcessOracle, KeyWrapping, OracleConfig, OracleServer};
use wuplab::rsa::{encrypt_raw, keygen, RsaKeyPair};
use wuplab::update_sim::{acceptance_scenarios, run_scenario};
use wuplab::victim_prng::{keygen_v65, SessionKey};
use wuplab::wup::{seal_session, seal_session_oaep, WupMessage};

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 7] = [
    ("A1", "factor the shipped 128-bit modulus", a1_factor_modulus),
    ("A2", "bitwise oracle attack: 50 keys, 128 queries each", a2_cca2_query_count),
    ("A3", "clock-seed search: 20 sessions within +/-35 s", a3_prng_bound),
    ("A4", "split probability for 64-bit keys", a4_split_table),
    ("A5", "OAEP server defeats the oracle attack", a5_oaep_remediation),
    ("A6", "meet-in-the-middle at desk scale and full-scale cost", a6_mitm),
    ("A7", "six update-channel scenarios", a7_update_scenarios),
];

fn server_key(seed: u64) -> RsaKeyPair {
    keygen(1024, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(seed)).expect("keygen")
}

fn a1_factor_modulus() -> Verdict {
    let n = parse_decimal("245406417573740884710047745869965023463").unwrap();
    let want = [
        parse_decimal("14119218591450688427").unwrap(),
        parse_decimal("17381019776996486069").unwrap(),
    ];
    match factor_modulus(&n) {
        Ok(f) => {
            let got = f.primes_with_multiplicity();
            Verdict::new(got == want, format!("{n} = {f}"))
        }
        Err(e) => Verdict::new(false, e.to_string()),
    }
}

fn a2_cca2_query_count() -> Verdict {
    let kp = server_key(0xA2);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut bad = Vec::new();
    for run in 0..50 {
        let server = Arc::new(OracleServer::new(OracleConfig::new(kp.clone())));
        let victim = SessionKey::from_u128(rng.gen());
        let captured = seal_session(&kp.public, &victim, &WupMessage::sample_request("victim")).unwrap();
        let mut oracle = InProcessOracle::new(Arc::clone(&server), "attacker");
        match cca2_attack(&captured, &mut oracle, &kp.public, &Cca2Config::default()) {
            Ok(r) if r.recovered_key.bytes() == victim.bytes() && r.queries == 128 && server.transcript().len() == 128 => {}
            Ok(r) => bad.push(format!("run {run}: {} queries, key match {}", r.queries, r.recovered_key.bytes() == victim.bytes())),
            Err(e) => bad.push(format!("run {run}: {e}")),
        }
    }
    if bad.is_empty() {
        Verdict::new(true, "50/50 keys recovered, 128 queries each")
    } else {
        Verdict::new(false, bad.join("; "))
    }
}

fn a3_prng_bound() -> Verdict {
    let kp = server_key(0xA3);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let observed_at = 1_600_000_000_000u64;
    let mut worst = 0;
    let mut bad = Vec::new();
    for _ in 0..20 {
        let offset: i64 = rng.gen_range(-35_000..=35_000);
        let key = keygen_v65(observed_at.checked_add_signed(offset).unwrap());
        let sess = seal_session(&kp.public, &key, &WupMessage::sample_request("victim")).unwrap();
        match prng_attack(&sess, observed_at, 35_000) {
            Ok(hit) => {
                worst = worst.max(hit.guesses);
                let bound = 2 * offset.unsigned_abs() + 1;
                if !hit.key.same_key(&key) || hit.guesses >= 70_000 || hit.guesses > bound {
                    bad.push(format!("offset {offset}: {} guesses (bound {bound})", hit.guesses));
                }
            }
            Err(e) => bad.push(format!("offset {offset}: {e}")),
        }
    }
    if bad.is_empty() {
        Verdict::new(true, format!("20/20 recovered, worst case {worst} guesses"))
    } else {
        Verdict::new(false, bad.join("; "))
    }
}

fn a4_split_table() -> Verdict {
    let rows = [((32, 32), 17.0), ((33, 33), 29.0), ((34, 34), 33.0), ((30, 36), 40.0)];
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut passed = true;
    let mut parts = Vec::new();
    for ((m1, m2), want) in rows {
        match split_probability(64, m1, m2, 2000, &mut rng) {
            Ok(est) => {
                let got = 100.0 * est.probability;
                let ok = (got - want).abs() <= 3.0;
                passed &= ok;
                parts.push(format!("({m1},{m2}) {got:.1}% vs {want}%{}", if ok { "" } else { " OUT" }));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("({m1},{m2}) {e}"));
            }
        }
    }
    Verdict::new(passed, parts.join(", "))
}

fn a5_oaep_remediation() -> Verdict {
    let kp = server_key(0xA5);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let server = Arc::new(OracleServer::new(OracleConfig::new(kp.clone()).with_wrapping(KeyWrapping::Oaep)));
    let victim = SessionKey::from_u128(rng.gen());
    let captured = seal_session_oaep(&kp.public, &victim, &WupMessage::sample_request("victim"), &mut rng).unwrap();
    let mut oracle = InProcessOracle::new(Arc::clone(&server), "attacker");
    match cca2_attack(&captured, &mut oracle, &kp.public, &Cca2Config::default()) {
        Ok(r) => {
            let accepted = server.transcript().accepted();
            let leaked = r.recovered() || r.recovered_key.same_key(&victim);
            Verdict::new(
                !leaked && accepted == 0,
                format!("{accepted} of {} attacker queries accepted, key recovered: {leaked}", r.queries),
            )
        }
        Err(e) => Verdict::new(false, e.to_string()),
    }
}

fn a6_mitm() -> Verdict {
    let kp = server_key(0xA6);
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let table = match mitm_build_table(&kp.public, 10) {
        Ok(t) => t,
        Err(e) => return Verdict::new(false, e.to_string()),
    };
    let mut found = 0;
    for _ in 0..100 {
        let k = BigUint::from(rng.gen_range(1..=1024u64) * rng.gen_range(1..=1024u64));
        let c = encrypt_raw(&kp.public, &k).unwrap();
        if mitm_attack(&table, &c, 10) == Some(k) {
            found += 1;
        }
    }
    let cost = mitm_cost(64, 64, 128);
    let cost_ok = cost.human.contains("295,148 petabytes") && cost.exponentiations == BigUint::from(1u8) << 64u32;
    Verdict::new(found == 100 && cost_ok, format!("{found}/100 keys recovered; {cost}"))
}

fn a7_update_scenarios() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut parts = Vec::new();
    let mut passed = true;
    let mut escapes = 0;
    for s in acceptance_scenarios() {
        match run_scenario(&s, &dir.path().join(&s.name)) {
            Ok(r) => {
                passed &= r.matched;
                escapes += r.sandbox_escapes;
                parts.push(format!("{} {}", s.name, if r.matched { "ok".to_string() } else { r.mismatches.join("/") }));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{} {e}", s.name));
            }
        }
    }
    parts.push(format!("sandbox escapes {escapes}"));
    Verdict::new(passed && parts.len() == 7 && escapes == 0, parts.join(", "))
}

fn line(id: &str, title: &str, v: &Verdict, took: Duration) -> String {
    format!("{} {id} {title} [{:.1?}]: {}", if v.passed { "PASS" } else { "FAIL" }, took, v.detail)
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|(id, ..)| filters.is_empty() || filters.iter().any(|f| f.eq_ignore_ascii_case(id)))
        .collect();

    let results: Vec<String> = selected
        .iter()
        .map(|&&(id, title, check)| {
            let start = Instant::now();
            let v = std::panic::catch_unwind(check).unwrap_or_else(|_| Verdict::new(false, "panicked"));
            let text = line(id, title, &v, start.elapsed());
            println!("{text}");
            text
        })
        .collect();

    println!("\nacceptance summary");
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| r.starts_with("FAIL")).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
