//! The Windows updater saves the download under a name chosen by the
//! server before verifying anything. A forged `save_as` with `..` lands on
//! the installed browser even though the signature check later fails.
//!
//! Everything happens inside a temporary directory.

use wuplab::update_sim::{builtin_scenarios, run_scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sandbox = tempfile::tempdir()?;
    for name in ["windows_honest", "windows_traversal", "windows_signed_substitution"] {
        let scenario = builtin_scenarios().into_iter().find(|s| s.name == name).expect("bundled");
        let r = run_scenario(&scenario, &sandbox.path().join(name))?;
        println!("== {name}: {}", serde_json::to_string(&r.outcome)?);
        for w in &r.writes {
            println!("   wrote {:?} -> {}{}", w.requested, w.resolved, if w.escaped_root { "  <- outside the temp dir" } else { "" });
        }
        if let Some(t) = &r.overwrite_target {
            println!("   overwrote {t}");
        }
        println!("   escapes from the sandbox itself: {}", r.sandbox_escapes);
    }
    Ok(())
}
