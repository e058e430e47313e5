//! Scenario files: topology, timed actions and trace assertions.

pub mod assert;
mod runner;

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use assert::{evaluate_all, parse_assertions, AssertError, Assertion, Matcher, Verdict};
pub use runner::{execute, run, Executed, RunReport, SCENARIO_EVENT_BUDGET};

pub const SEED_ENV: &str = "ECHO_TESTBED_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub topology: Topology,
    #[serde(default)]
    pub actions: Vec<ScriptedAction>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    #[serde(default)]
    pub lans: Vec<LanSpec>,
    #[serde(default)]
    pub cloud: CloudSpec,
    #[serde(default)]
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub clients: Vec<ClientSpec>,
    #[serde(default)]
    pub attackers: Vec<AttackerSpec>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanSpec {
    pub name: String,
    pub prefix: String,
    #[serde(default = "yes")]
    pub nat: bool,
    #[serde(default = "yes")]
    pub internet: bool,
    #[serde(default)]
    pub ssid: Option<String>,
    #[serde(default)]
    pub passphrase: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSpec {
    #[serde(default)]
    pub accounts: Vec<AccountSpec>,
    #[serde(default)]
    pub phone_contacts: Vec<String>,
    /// (caller account, callee account) drop-in permissions.
    #[serde(default)]
    pub drop_in: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountSpec {
    pub id: String,
    pub password: String,
}

fn default_device_type() -> String {
    "A3S5BH2HU6VAYF".into()
}

fn default_locale() -> String {
    "en-US".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub name: String,
    pub serial: String,
    #[serde(default = "default_device_type")]
    pub device_type: String,
    #[serde(default = "default_locale")]
    pub locale: String,
    /// LAN joined at start; only meaningful with `owner`.
    #[serde(default)]
    pub lan: Option<String>,
    /// Starts out set up and registered to this account.
    #[serde(default)]
    pub owner: Option<String>,
    /// Purchase-time association, without a grant.
    #[serde(default)]
    pub preregistered_to: Option<String>,
    #[serde(default)]
    pub frames_per_call: Option<u32>,
    #[serde(default)]
    pub pairing_addr: Option<Ipv4Addr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub name: String,
    pub lan: String,
    pub account: String,
    pub password: String,
    pub ssid: String,
    #[serde(default)]
    pub passphrase: Option<String>,
    #[serde(default = "default_locale")]
    pub locale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerSpec {
    pub name: String,
    pub prefix: String,
    pub account: String,
    pub password: String,
    #[serde(default)]
    pub hijack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAction {
    pub at_ms: u64,
    pub node: String,
    pub action: String,
    #[serde(default = "empty_args")]
    pub args: Value,
}

fn empty_args() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("unknown scenario {0:?}")]
    Unknown(String),
    #[error("topology error: {0}")]
    Build(String),
    #[error("run error: {0}")]
    Run(String),
    #[error(transparent)]
    Assert(#[from] AssertError),
}

pub const SCHEMA: &str = include_str!("../../scenarios/scenario.schema.json");

const BUILTINS: &[(&str, &str)] = &[
    ("pair", include_str!("../../scenarios/pair.json")),
    (
        "pair_eavesdrop",
        include_str!("../../scenarios/pair_eavesdrop.json"),
    ),
    (
        "hijack_registered",
        include_str!("../../scenarios/hijack_registered.json"),
    ),
    (
        "hijack_deregistered",
        include_str!("../../scenarios/hijack_deregistered.json"),
    ),
    (
        "avs_handshake",
        include_str!("../../scenarios/avs_handshake.json"),
    ),
    (
        "avs_replay",
        include_str!("../../scenarios/avs_replay.json"),
    ),
    (
        "intercom_same_lan",
        include_str!("../../scenarios/intercom_same_lan.json"),
    ),
    (
        "call_cross_lan_fork",
        include_str!("../../scenarios/call_cross_lan_fork.json"),
    ),
    ("call_pstn", include_str!("../../scenarios/call_pstn.json")),
    (
        "token_reuse",
        include_str!("../../scenarios/token_reuse.json"),
    ),
];

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Structural checks that serde cannot express.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut names = std::collections::BTreeSet::new();
        names.insert("cloud".to_string());
        let nodes = self
            .topology
            .devices
            .iter()
            .map(|d| &d.name)
            .chain(self.topology.clients.iter().map(|c| &c.name))
            .chain(self.topology.attackers.iter().map(|a| &a.name));
        for n in nodes {
            if !names.insert(n.clone()) {
                return Err(ScenarioError::Parse(format!("duplicate node name {n:?}")));
            }
        }
        for a in &self.actions {
            if !names.contains(&a.node) {
                return Err(ScenarioError::Parse(format!(
                    "action {:?} targets unknown node {:?}",
                    a.action, a.node
                )));
            }
        }
        let lans: Vec<&String> = self.topology.lans.iter().map(|l| &l.name).collect();
        let lan_refs = self
            .topology
            .devices
            .iter()
            .filter_map(|d| d.lan.as_ref())
            .chain(self.topology.clients.iter().map(|c| &c.lan));
        for l in lan_refs {
            if !lans.contains(&l) {
                return Err(ScenarioError::Parse(format!("unknown LAN {l:?}")));
            }
        }
        for a in &self.assertions {
            a.evaluate(&[])?;
        }
        Ok(())
    }

    /// A built-in scenario by name.
    pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
        let text = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
        Scenario::parse(text)
    }

    /// A built-in name, or else a path to a scenario file.
    pub fn load(name_or_path: &str) -> Result<Scenario, ScenarioError> {
        match Scenario::builtin(name_or_path) {
            Err(ScenarioError::Unknown(_)) => {
                let text = std::fs::read_to_string(name_or_path)
                    .map_err(|_| ScenarioError::Unknown(name_or_path.to_string()))?;
                Scenario::parse(&text)
            }
            other => other,
        }
    }
}

pub fn list_scenarios() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

/// Human-readable account of a built-in: what it stages and what it checks.
pub fn explain(name: &str) -> Result<String, ScenarioError> {
    let s = Scenario::builtin(name)?;
    let mut out = format!(
        "{}\n\n{}\n\nseed: {}\n\nactions:\n",
        s.name, s.description, s.seed
    );
    for a in &s.actions {
        let args = match &a.args {
            Value::Object(m) if m.is_empty() => String::new(),
            v => format!(" {v}"),
        };
        out.push_str(&format!(
            "  t={}ms {}.{}{}\n",
            a.at_ms, a.node, a.action, args
        ));
    }
    out.push_str("\nassertions:\n");
    for a in &s.assertions {
        out.push_str(&format!("  - {}\n", a.name()));
    }
    Ok(out)
}

/// `--seed`, then the environment, then the scenario file.
pub fn effective_seed(
    cli: Option<u64>,
    env: Option<&str>,
    scenario: &Scenario,
) -> Result<u64, ScenarioError> {
    if let Some(s) = cli {
        return Ok(s);
    }
    match env {
        Some(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| ScenarioError::Parse(format!("{SEED_ENV}={v:?} is not an integer"))),
        _ => Ok(scenario.seed),
    }
}
