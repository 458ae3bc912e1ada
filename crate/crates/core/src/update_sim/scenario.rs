//! JSON-described update runs with an expected outcome.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{
    victim_update_android, victim_update_windows, AndroidVictim, ArtifactSpec, CryptoMode, ForgeScript, FsWrite,
    HaltReason, InstallPrompt, InstalledApp, MitmProxy, MockUpdateServer, SimError, Transport, UpdateChannel, UpdateOutcome,
    VirtualFs, WindowsVictim, ANDROID_PACKAGE, INSTALL_PATH, VENDOR_SIGNER,
};
use crate::rsa::{keygen, DEFAULT_EXPONENT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Seeds the server's RSA key.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub victim: VictimSpec,
    #[serde(default)]
    pub transport: Transport,
    #[serde(default = "yes")]
    pub server_has_update: bool,
    /// Absent: the victim talks to the server directly.
    #[serde(default)]
    pub forge: Option<ForgeScript>,
    pub expect: Expectation,
}

fn default_seed() -> u64 {
    1
}

fn yes() -> bool {
    true
}

fn default_clock() -> u64 {
    1_500_000_000_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "platform", rename_all = "snake_case", deny_unknown_fields)]
pub enum VictimSpec {
    Android {
        version: String,
        crypto: CryptoMode,
        #[serde(default = "default_clock")]
        clock_ms: u64,
    },
    Windows {
        version: String,
    },
}

/// Fields left out are not checked, except `overwrite_target`: a run that
/// writes outside the download directory without expecting to fails.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// `install`, `execute`, or `halt`.
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<InstallPrompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<HaltReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_stage_program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overwrite_target: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub matched: bool,
    pub mismatches: Vec<String>,
    #[serde(flatten)]
    pub outcome: UpdateOutcome,
    pub overwrite_target: Option<String>,
    pub writes: Vec<FsWrite>,
    pub sandbox_escapes: usize,
    pub trace: Vec<String>,
    pub proxy_log: Vec<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))
    }
}

macro_rules! scenario_files {
    ($($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../../scenarios/", $name)))),*]
    };
}

const ACCEPTANCE: [(&str, &str); 6] = scenario_files![
    "android_honest.json",
    "android_hash_mismatch.json",
    "android_v63_forged_metadata.json",
    "windows_honest.json",
    "windows_traversal.json",
    "windows_signed_substitution.json",
];

const EXTRA: [(&str, &str); 7] = scenario_files![
    "android_pass_through.json",
    "android_no_update.json",
    "android_downgrade.json",
    "android_v65_prng_forge.json",
    "android_v65_wrong_key.json",
    "android_forged_authenticated.json",
    "windows_traversal_authenticated.json",
];

fn parse_all(files: &[(&str, &str)]) -> Vec<Scenario> {
    files
        .iter()
        .map(|(name, text)| Scenario::from_json(text).unwrap_or_else(|e| panic!("bundled scenario {name}: {e}")))
        .collect()
}

/// The six end-to-end update attacks (and their honest baselines).
pub fn acceptance_scenarios() -> Vec<Scenario> {
    parse_all(&ACCEPTANCE)
}

/// Every bundled scenario, the six above first.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let mut all = parse_all(&ACCEPTANCE);
    all.extend(parse_all(&EXTRA));
    all
}

/// Run `scenario` with the victim's drive rooted at `sandbox`.
pub fn run_scenario(scenario: &Scenario, sandbox: &Path) -> Result<ScenarioResult, SimError> {
    let kp = keygen(1024, &DEFAULT_EXPONENT.into(), &mut ChaCha20Rng::seed_from_u64(scenario.seed))
        .map_err(|e| SimError::Scenario(e.to_string()))?;
    let public = kp.public.clone();
    let server = MockUpdateServer::new(kp, scenario.server_has_update, scenario.transport);

    let mut fs = VirtualFs::new(sandbox).map_err(|e| SimError::Scenario(e.to_string()))?;
    let genuine = ArtifactSpec::Exe {
        program: "qqbrowser".into(),
        signer: Some(VENDOR_SIGNER.into()),
        download: None,
    };
    fs.seed_file(INSTALL_PATH, &genuine.build())?;

    let modulus_len = public.byte_len();
    let mut server = Some(server);
    let mut proxy = scenario
        .forge
        .as_ref()
        .map(|script| MitmProxy::new(server.take().expect("server"), script.clone(), modulus_len));
    let channel: &mut dyn UpdateChannel = match (&mut proxy, &mut server) {
        (Some(p), _) => p,
        (None, Some(s)) => s,
        (None, None) => unreachable!(),
    };

    let report = match &scenario.victim {
        VictimSpec::Android { version, crypto, clock_ms } => {
            let victim = AndroidVictim {
                version: version.clone(),
                crypto: *crypto,
                clock_ms: *clock_ms,
                server_public: public,
                transport: scenario.transport,
                installed: vec![
                    InstalledApp {
                        package: ANDROID_PACKAGE.into(),
                        version: version.clone(),
                        signer: VENDOR_SIGNER.into(),
                    },
                    InstalledApp {
                        package: "com.android.chrome".into(),
                        version: "120.0".into(),
                        signer: "Google-mock".into(),
                    },
                ],
            };
            victim_update_android(&victim, channel)?
        }
        VictimSpec::Windows { version } => {
            let victim = WindowsVictim {
                version: version.clone(),
                transport: scenario.transport,
            };
            victim_update_windows(&victim, channel, &mut fs)?
        }
    };
    let proxy_log = proxy.map(|p| p.log().to_vec()).unwrap_or_default();

    let overwrite_target = fs.writes().iter().find(|w| w.escaped_root).map(|w| w.resolved.clone());
    let mismatches = compare(&scenario.expect, &report.outcome, overwrite_target.as_deref());
    Ok(ScenarioResult {
        name: scenario.name.clone(),
        matched: mismatches.is_empty(),
        mismatches,
        outcome: report.outcome,
        overwrite_target,
        writes: fs.writes().to_vec(),
        sandbox_escapes: fs.sandbox_escapes(),
        trace: report.trace,
        proxy_log,
    })
}

fn compare(expect: &Expectation, actual: &UpdateOutcome, overwrite: Option<&str>) -> Vec<String> {
    let mut bad = Vec::new();
    let mut check = |what: &str, want: Option<String>, got: Option<String>| {
        if let Some(w) = want {
            if got.as_deref() != Some(w.as_str()) {
                bad.push(format!("{what}: expected {w}, got {}", got.unwrap_or_else(|| "nothing".into())));
            }
        }
    };
    check("outcome", Some(expect.outcome.clone()), Some(actual.kind().to_string()));
    match actual {
        UpdateOutcome::Install { prompt, package, .. } => {
            check("prompt", expect.prompt.map(|p| variant_name(&p)), Some(variant_name(prompt)));
            check("package", expect.package.clone(), Some(package.clone()));
        }
        UpdateOutcome::Execute {
            signer,
            program,
            second_stage,
            ..
        } => {
            check("signer", expect.signer.clone(), Some(signer.clone()));
            check("program", expect.program.clone(), Some(program.clone()));
            check(
                "second_stage_program",
                expect.second_stage_program.clone(),
                second_stage.as_ref().map(|s| s.program.clone()),
            );
        }
        UpdateOutcome::Halt { reason } => {
            check("reason", expect.reason.map(|r| variant_name(&r)), Some(variant_name(reason)));
        }
    }
    match (&expect.overwrite_target, overwrite) {
        (Some(want), got) if got != Some(want.as_str()) => {
            bad.push(format!("overwrite_target: expected {want}, got {}", got.unwrap_or("nothing")));
        }
        (None, Some(got)) => bad.push(format!("unexpected write outside the download directory: {got}")),
        _ => {}
    }
    bad
}

/// The serialized name of a unit enum variant.
fn variant_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}
