//! Meet-in-the-middle recovery of session keys that factor into two small
//! halves, at a size that runs in seconds, and the cost at full size.

use std::time::Instant;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wuplab::attacks::{mitm_build_table, mitm_cost, MitmSolver};
use wuplab::rsa::{encrypt_raw, keygen};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let kp = keygen(1024, &BigUint::from(65537u32), &mut rng)?;
    let (m1, m2) = (12, 12);

    let start = Instant::now();
    let table = mitm_build_table(&kp.public, m1)?;
    let solver = MitmSolver::new(&table, m2)?;
    println!("table of {} entries ready in {:.2?}", table.len(), start.elapsed());

    let mut found = 0;
    for _ in 0..25 {
        let k = BigUint::from(rng.gen_range(1..=1u64 << m1) * rng.gen_range(1..=1u64 << m2));
        let c = encrypt_raw(&kp.public, &k)?;
        if solver.solve(&c) == Some(k) {
            found += 1;
        }
    }
    println!("recovered {found}/25 keys of the form M1*M2 with M1 <= 2^{m1}, M2 <= 2^{m2}");

    for (a, b) in [(32, 32), (48, 48), (64, 64)] {
        println!("{}", mitm_cost(a, b, 128));
    }
    Ok(())
}
