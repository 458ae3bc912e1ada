//! Factor the 128-bit modulus hard-coded in the old client and rebuild the
//! server's private key from it.
//!
//! Takes a few minutes; pass a smaller modulus as the first argument to try
//! something quicker.

use std::time::Instant;

use num_bigint::BigUint;
use wuplab::numtheory::{factor_semiprime, parse_decimal};
use wuplab::rsa::RsaKeyPair;

const SHIPPED_MODULUS: &str = "245406417573740884710047745869965023463";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = std::env::args().nth(1).unwrap_or_else(|| SHIPPED_MODULUS.to_string());
    let n = parse_decimal(&text)?;
    println!("factoring {n} ({} bits)", n.bits());

    let start = Instant::now();
    let f = factor_semiprime(&n)?;
    println!("{n} = {f}  [{:.1?}]", start.elapsed());

    let primes = f.primes_with_multiplicity();
    let kp = RsaKeyPair::from_primes(primes[0].clone(), primes[1].clone(), BigUint::from(65537u32))?;
    println!("recovered private exponent d = {}", kp.d);
    Ok(())
}
