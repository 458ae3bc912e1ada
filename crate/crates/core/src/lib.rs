pub mod attacks;
pub mod cli;
pub mod numtheory;
pub mod oracle;
pub mod rsa;
pub mod update_sim;
pub mod victim_prng;
pub mod wup;
