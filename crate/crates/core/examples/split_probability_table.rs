//! Estimate how often a random 64-bit key splits into two bounded factors.
//!
//! Run with `cargo run --release --example split_probability_table [samples]`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use wuplab::attacks::split_probability;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    println!("bits  m1  m2  probability");
    for (m1, m2) in [(32, 32), (33, 33), (34, 34), (30, 36)] {
        let est = split_probability(64, m1, m2, samples, &mut rng)?;
        println!("{:>4} {:>3} {:>3}  {:>5.1}%   ({} skipped)", 64, m1, m2, 100.0 * est.probability, est.skipped);
    }
    Ok(())
}
