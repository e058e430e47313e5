use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use super::{evaluate_all, Scenario, ScenarioError, Verdict};
use crate::client::{Attacker, AttackerConfig, ClientConfig, PairingClient};
use crate::cloud::Cloud;
use crate::device::{Device, DeviceIdentity};
use crate::netsim::{Action, LanId, Layer, NodeId, Sim, TraceEvent};

/// Upper bound on scheduler events for one scenario run.
pub const SCENARIO_EVENT_BUDGET: u64 = 100_000;

/// A finished simulation, kept for inspection.
pub struct Executed {
    pub sim: Sim,
    pub seed: u64,
    pub events: u64,
    pub cloud: NodeId,
    pub devices: BTreeMap<String, NodeId>,
    pub clients: BTreeMap<String, NodeId>,
    pub attackers: BTreeMap<String, NodeId>,
}

impl Executed {
    pub fn trace(&self) -> &[TraceEvent] {
        self.sim.net.trace()
    }

    pub fn cloud(&self) -> &Cloud {
        self.sim.node(self.cloud).expect("cloud node")
    }

    pub fn device(&self, name: &str) -> Option<&Device> {
        self.sim.node(*self.devices.get(name)?)
    }

    pub fn client(&self, name: &str) -> Option<&PairingClient> {
        self.sim.node(*self.clients.get(name)?)
    }

    pub fn attacker(&self, name: &str) -> Option<&Attacker> {
        self.sim.node(*self.attackers.get(name)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub events: u64,
    pub trace: Vec<TraceEvent>,
    pub verdicts: Vec<Verdict>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn first_failure(&self) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| !v.pass)
    }
}

fn build_err(e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Build(e.to_string())
}

/// Builds the topology, plays the action script to quiescence and appends
/// final-state notes to the trace.
pub fn execute(scenario: &Scenario, seed: u64) -> Result<Executed, ScenarioError> {
    scenario.validate()?;
    let topo = &scenario.topology;
    let mut sim = Sim::new(seed);
    sim.set_budget(SCENARIO_EVENT_BUDGET);

    let cloud = sim
        .add_node("cloud", |net, id| Ok(Box::new(Cloud::build(net, id)?)))
        .map_err(build_err)?;

    let mut lans: BTreeMap<String, LanId> = BTreeMap::new();
    for l in &topo.lans {
        let id = sim
            .net
            .create_lan(&l.name, &l.prefix, l.nat, l.internet)
            .map_err(build_err)?;
        if let Some(ssid) = &l.ssid {
            sim.net.set_wifi(id, ssid, l.passphrase.as_deref());
        }
        lans.insert(l.name.clone(), id);
    }

    let mut setup_rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5ce7_a210);
    {
        let c: &mut Cloud = sim.node_mut(cloud).expect("cloud");
        for a in &topo.cloud.accounts {
            c.state.add_account(&a.id, &a.password, &mut setup_rng);
        }
        for p in &topo.cloud.phone_contacts {
            c.state.phone_contacts.insert(p.clone());
        }
        for (from, to) in &topo.cloud.drop_in {
            c.state.grant_drop_in(from, to);
        }
    }

    let mut devices = BTreeMap::new();
    for d in &topo.devices {
        let mut identity =
            DeviceIdentity::generate(&d.device_type, &d.serial, &d.locale, &mut setup_rng)
                .map_err(build_err)?;
        if let Some(addr) = d.pairing_addr {
            identity.pairing_addr = addr;
        }
        let c: &mut Cloud = sim.node_mut(cloud).expect("cloud");
        c.state
            .add_inventory(&d.device_type, &d.serial, identity.secret);
        if let Some(acct) = &d.preregistered_to {
            c.state.preregister(&d.serial, acct).map_err(build_err)?;
        }
        let grant = match &d.owner {
            Some(acct) => Some(
                c.state
                    .provision(&d.serial, acct, 0, &mut setup_rng)
                    .map_err(build_err)?,
            ),
            None => None,
        };
        let host_name = d.name.clone();
        let home = d.lan.as_ref().map(|l| lans[l]);
        let id = sim
            .add_node(&d.name, |net, id| {
                let mut dev = Device::new(net, &host_name, id, identity);
                if let Some(lan) = home {
                    dev.attach_home(net, lan)?;
                }
                Ok(Box::new(dev))
            })
            .map_err(build_err)?;
        let dev: &mut Device = sim.node_mut(id).expect("device");
        if let Some(g) = grant {
            dev.install_grant(g).map_err(build_err)?;
        }
        if let Some(n) = d.frames_per_call {
            dev.ua.frames_per_call = n;
        }
        devices.insert(d.name.clone(), id);
    }

    let mut clients = BTreeMap::new();
    for c in &topo.clients {
        let cfg = ClientConfig {
            account: c.account.clone(),
            password: c.password.clone(),
            ssid: c.ssid.clone(),
            passphrase: c.passphrase.clone(),
            locale: c.locale.clone(),
        };
        let name = c.name.clone();
        let home = lans[&c.lan];
        let id = sim
            .add_node(&c.name, |net, id| {
                let mut node = PairingClient::new(net, &name, id, cfg);
                node.attach_home(net, home)?;
                Ok(Box::new(node))
            })
            .map_err(build_err)?;
        clients.insert(c.name.clone(), id);
    }

    let mut attackers = BTreeMap::new();
    for a in &topo.attackers {
        let lan = sim
            .net
            .create_lan(&format!("{}-net", a.name), &a.prefix, true, true)
            .map_err(build_err)?;
        let cfg = AttackerConfig {
            account: a.account.clone(),
            password: a.password.clone(),
            hijack: a.hijack,
        };
        let name = a.name.clone();
        let id = sim
            .add_node(&a.name, |net, id| {
                let mut node = Attacker::new(net, &name, id, cfg);
                node.attach_home(net, lan)?;
                Ok(Box::new(node))
            })
            .map_err(build_err)?;
        attackers.insert(a.name.clone(), id);
    }

    for a in &scenario.actions {
        let node = sim.node_id(&a.node).expect("validated");
        sim.schedule_action(a.at_ms, node, Action::new(&a.action, a.args.clone()));
    }

    let events = sim
        .run_until_idle()
        .map_err(|e| ScenarioError::Run(e.to_string()))?;
    let mut ex = Executed {
        sim,
        seed,
        events,
        cloud,
        devices,
        clients,
        attackers,
    };
    final_notes(&mut ex, scenario);
    Ok(ex)
}

fn yn(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn final_notes(ex: &mut Executed, scenario: &Scenario) {
    let mut notes = Vec::new();
    for (name, id) in &ex.devices {
        let d: &Device = ex.sim.node(*id).expect("device");
        let g = d.grant.as_ref();
        let sip = d.ua.reg;
        notes.push((
            d.host,
            format!(
                "final {name} mode={} registration={} key={} token={} friendly_name={} avs={} sip={} unsupported={}",
                d.mode.as_str(),
                d.registration.as_str(),
                yn(d.owns_grant_key().is_some()),
                yn(g.is_some_and(|g| !g.auth_token.is_empty())),
                g.map_or("-", |g| g.friendly_name.as_str()),
                if d.avs_up { "up" } else { "down" },
                json!(sip).as_str().unwrap_or("?"),
                d.unsupported,
            ),
        ));
    }
    for (name, id) in &ex.clients {
        let c: &PairingClient = ex.sim.node(*id).expect("client");
        notes.push((c.host, format!("final {name} state={}", c.state.label())));
    }
    for (name, id) in &ex.attackers {
        let a: &Attacker = ex.sim.node(*id).expect("attacker");
        notes.push((
            a.host,
            format!(
                "final {name} code={} blob={} serial={} secured_seen={} hijack={} claimed={}",
                yn(a.loot.link_code.is_some()),
                yn(a.loot.credential_armor.is_some()),
                yn(a.loot.serial.is_some()),
                a.loot.secured_messages,
                a.hijack_status.map_or("-".to_string(), |s| s.to_string()),
                a.device_claimed,
            ),
        ));
    }
    let cloud: &Cloud = ex.sim.node(ex.cloud).expect("cloud");
    for d in &scenario.topology.devices {
        let owner = cloud
            .state
            .owners
            .get(&d.serial)
            .cloned()
            .unwrap_or_else(|| "none".into());
        notes.push((cloud.api, format!("final cloud owner {}={owner}", d.serial)));
    }
    for (host, summary) in notes {
        ex.sim.net.note(host, Layer::Sys, summary);
    }
}

/// Executes and evaluates the scenario's own assertions.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunReport, ScenarioError> {
    let ex = execute(scenario, seed)?;
    let trace = ex.trace().to_vec();
    let verdicts = evaluate_all(&trace, &scenario.assertions)?;
    Ok(RunReport {
        scenario: scenario.name.clone(),
        seed,
        events: ex.events,
        trace,
        verdicts,
    })
}
