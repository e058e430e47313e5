use std::collections::VecDeque;
use std::net::SocketAddrV4;

use serde_json::{json, Value};

use super::{parse_json_response, parse_oobe, OobeSeen};
use crate::cloud::endpoints::endpoint_set;
use crate::cloud::HTTPS_PORT;
use crate::crypto::{decrypt_credential, keygen, EncryptedCredentialBlob};
use crate::netsim::{
    ChannelId, HostId, LanId, Layer, Net, NetError, Node, NodeEvent, NodeId, Observation, TapId,
};
use crate::transport::{post_json, send_oobe_request};
use crate::wire::oobe::OOBE_PORT;
use crate::wire::OobeEnvelope;

const POLL_MS: u64 = 2_000;

#[derive(Debug, Clone)]
pub struct AttackerConfig {
    pub account: String,
    pub password: String,
    /// Race the victim to registerDevice with the sniffed code.
    pub hijack: bool,
}

/// What the attacker learned from the pairing network.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Loot {
    pub link_code: Option<String>,
    pub serial: Option<String>,
    pub device_type: Option<String>,
    pub credential_armor: Option<String>,
    pub plaintext_messages: usize,
    pub secured_messages: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ApiCall {
    Login,
    Register,
}

/// A second client on the open pairing network that passively captures
/// everything it can and optionally uses the link code first.
pub struct Attacker {
    pub cfg: AttackerConfig,
    pub host: HostId,
    pub home_lan: Option<LanId>,
    pub cookie: Option<String>,
    pub loot: Loot,
    pub tap: Option<TapId>,
    pub hijack_status: Option<u16>,
    pub device_claimed: bool,
    api_chan: Option<ChannelId>,
    api_queue: VecDeque<ApiCall>,
    oobe_chan: Option<ChannelId>,
    device_addr: Option<std::net::Ipv4Addr>,
}

impl Attacker {
    pub fn new(net: &mut Net, host_name: &str, owner: NodeId, cfg: AttackerConfig) -> Self {
        let host = net.add_host(host_name, owner);
        Attacker {
            cfg,
            host,
            home_lan: None,
            cookie: None,
            loot: Loot::default(),
            tap: None,
            hijack_status: None,
            device_claimed: false,
            api_chan: None,
            api_queue: VecDeque::new(),
            oobe_chan: None,
            device_addr: None,
        }
    }

    pub fn attach_home(&mut self, net: &mut Net, lan: LanId) -> Result<(), NetError> {
        net.attach(self.host, lan)?;
        self.home_lan = Some(lan);
        Ok(())
    }

    fn note(&self, net: &mut Net, s: impl Into<String>) {
        net.note(self.host, Layer::Sys, s);
    }

    fn api(&mut self, net: &mut Net, call: ApiCall, path: &str, body: Value) {
        if !self.api_chan.is_some_and(|c| net.is_open(c)) {
            self.api_queue.clear();
            let name = endpoint_set("en-US").api;
            let chan = net
                .resolve(self.host, &name)
                .ok_or(NetError::UnknownChannel)
                .and_then(|ip| {
                    net.connect(
                        self.host,
                        SocketAddrV4::new(ip, HTTPS_PORT),
                        true,
                        Some(&name),
                    )
                });
            match chan {
                Ok(c) => self.api_chan = Some(c),
                Err(e) => return self.note(net, format!("attacker: api unreachable ({e})")),
            }
        }
        self.api_queue.push_back(call);
        let cookie = self.cookie.clone();
        let _ = post_json(
            net,
            self.api_chan.unwrap(),
            self.host,
            path,
            &body,
            cookie.as_deref(),
        );
    }

    fn join(&mut self, net: &mut Net, ssid: Option<&str>) {
        let ssid = ssid.map(str::to_string).or_else(|| {
            net.lans()
                .find(|l| l.up && l.name.starts_with("pairing:"))
                .and_then(|l| l.ssid.clone())
        });
        let Some(ssid) = ssid else {
            return self.note(net, "attacker: no pairing network visible");
        };
        match net.join_pairing(self.host, &ssid) {
            Ok(_) => {
                let p = net.pairing_network(&ssid).expect("just joined");
                let (lan, addr) = (p.lan, p.device_addr);
                self.device_addr = Some(addr);
                self.tap = net.tap_lan(lan, self.host).ok();
                self.note(net, format!("attacker: sniffing {ssid}"));
            }
            Err(e) => self.note(net, format!("attacker: join {ssid} failed: {e}")),
        }
    }

    fn on_tap(&mut self, net: &mut Net, obs: Observation) {
        let Some(payload) = obs.payload else {
            self.loot.secured_messages += 1;
            return;
        };
        self.loot.plaintext_messages += 1;
        match parse_oobe(&payload) {
            Some(OobeSeen::Request(env)) if env.method == "connectToAP" => {
                let Some(armor) = env.arg_str("credential").map(str::to_string) else {
                    return;
                };
                let opened = EncryptedCredentialBlob::from_armor(&armor)
                    .ok()
                    .and_then(|b| decrypt_credential(&b, &keygen(net.rng())).ok());
                let verdict = if opened.is_some() { "opened" } else { "opaque" };
                self.note(
                    net,
                    format!("loot: credential blob ({} bytes, {verdict})", armor.len()),
                );
                self.loot.credential_armor = Some(armor);
            }
            Some(OobeSeen::Response(200, env)) => match env.method.as_str() {
                "getDeviceDetails" => {
                    self.loot.serial = env.arg_str("serial").map(str::to_string);
                    self.loot.device_type = env.arg_str("device_type").map(str::to_string);
                    let serial = self.loot.serial.clone().unwrap_or_default();
                    self.note(net, format!("loot: serial {serial}"));
                }
                "getLinkCode" if self.loot.link_code.is_none() => {
                    let Some(code) = env.arg_str("code").map(str::to_string) else {
                        return;
                    };
                    self.note(net, format!("loot: link code {code}"));
                    self.loot.link_code = Some(code);
                    if self.cfg.hijack {
                        self.hijack(net);
                    }
                }
                _ => {}
            },
            _ => {}
        }
    }

    fn hijack(&mut self, net: &mut Net) {
        if self.cookie.is_none() {
            return self.note(net, "hijack: not logged in");
        }
        let body = json!({
            "device_type": self.loot.device_type,
            "serial": self.loot.serial,
            "code": self.loot.link_code,
        });
        self.api(net, ApiCall::Register, "/registerDevice", body);
    }

    fn on_api(&mut self, net: &mut Net, bytes: &[u8]) {
        let Some(call) = self.api_queue.pop_front() else {
            return;
        };
        let (status, body) = parse_json_response(bytes).unwrap_or((0, Value::Null));
        match call {
            ApiCall::Login => {
                self.cookie = body
                    .get("cookie")
                    .and_then(Value::as_str)
                    .map(str::to_string);
                let ok = if self.cookie.is_some() {
                    "ok"
                } else {
                    "refused"
                };
                self.note(net, format!("attacker: login {ok}"));
            }
            ApiCall::Register => {
                self.hijack_status = Some(status);
                if status == 200 {
                    self.note(net, "hijack: registered");
                    self.open_device(net);
                    self.poll(net);
                } else {
                    self.note(net, format!("hijack: blocked ({status})"));
                }
            }
        }
    }

    fn open_device(&mut self, net: &mut Net) {
        let Some(addr) = self.device_addr else { return };
        match net.connect(self.host, SocketAddrV4::new(addr, OOBE_PORT), false, None) {
            Ok(c) => self.oobe_chan = Some(c),
            Err(e) => self.note(net, format!("hijack: device unreachable ({e})")),
        }
    }

    fn poll(&self, net: &mut Net) {
        if let Some(c) = self.oobe_chan {
            let _ = send_oobe_request(
                net,
                c,
                self.host,
                &OobeEnvelope::new("getRegistrationState"),
            );
        }
    }

    fn on_device(&mut self, net: &mut Net, bytes: &[u8]) {
        let Some(OobeSeen::Response(_, env)) = parse_oobe(bytes) else {
            return;
        };
        match env.method.as_str() {
            "getRegistrationState" if env.arg_str("state") == Some("registered") => {
                if let Some(c) = self.oobe_chan {
                    let _ =
                        send_oobe_request(net, c, self.host, &OobeEnvelope::new("setupComplete"));
                }
            }
            "getRegistrationState" => net.set_timer(POLL_MS, "attacker:poll".into()),
            "setupComplete" if env.args.get("complete") == Some(&Value::Bool(true)) => {
                self.device_claimed = true;
                let acct = self.cfg.account.clone();
                self.note(net, format!("hijack: device set up under {acct}"));
            }
            _ => {}
        }
    }
}

impl Node for Attacker {
    fn handle(&mut self, net: &mut Net, event: NodeEvent) {
        match event {
            NodeEvent::Tap(obs) => self.on_tap(net, obs),
            NodeEvent::Message { chan, bytes, .. } => {
                if Some(chan) == self.api_chan {
                    self.on_api(net, &bytes);
                } else if Some(chan) == self.oobe_chan {
                    self.on_device(net, &bytes);
                }
            }
            NodeEvent::Closed { chan, .. } => {
                if Some(chan) == self.oobe_chan {
                    self.oobe_chan = None;
                } else if Some(chan) == self.api_chan {
                    self.api_chan = None;
                }
            }
            NodeEvent::Timer(t) if t == "attacker:poll" => self.poll(net),
            NodeEvent::Action(a) => match a.name.as_str() {
                "login" => {
                    let body = json!({"account": self.cfg.account, "password": self.cfg.password});
                    self.api(net, ApiCall::Login, "/login", body);
                }
                "join" => self.join(net, a.arg_str("ssid")),
                other => self.note(net, format!("attacker: unknown action {other}")),
            },
            _ => {}
        }
    }

    crate::node_any!();
}
