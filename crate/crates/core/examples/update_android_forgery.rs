//! An attacker on the network answers an Android update check with forged
//! metadata, encrypted under the key every 6.3 client ships with.

use wuplab::update_sim::{builtin_scenarios, run_scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sandbox = tempfile::tempdir()?;
    for name in ["android_honest", "android_v63_forged_metadata", "android_v65_prng_forge", "android_forged_authenticated"] {
        let scenario = builtin_scenarios().into_iter().find(|s| s.name == name).expect("bundled");
        let r = run_scenario(&scenario, &sandbox.path().join(name))?;
        println!("== {name}: {}", serde_json::to_string(&r.outcome)?);
        for line in r.proxy_log.iter().chain(&r.trace) {
            println!("   {line}");
        }
    }
    Ok(())
}
