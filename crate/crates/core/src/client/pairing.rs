use std::collections::BTreeSet;
use std::net::SocketAddrV4;

use serde_json::{json, Value};

use super::{parse_json_response, parse_oobe, OobeSeen};
use crate::cloud::endpoints::endpoint_set;
use crate::cloud::HTTPS_PORT;
use crate::crypto::{encrypt_credential, DeviceCertificate, WifiCredential};
use crate::device::{pairing_candidates, PING_ACK};
use crate::netsim::{
    Action, ChannelId, HostId, LanId, Layer, Net, NetError, Node, NodeEvent, NodeId,
};
use crate::transport::{post_json, send_oobe_request};
use crate::wire::oobe::OOBE_PORT;
use crate::wire::OobeEnvelope;

pub const PING_TIMEOUT_MS: u64 = 5_000;
pub const REGISTRATION_TIMEOUT_MS: u64 = 60_000;
const POLL_MS: u64 = 2_000;

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub account: String,
    pub password: String,
    pub ssid: String,
    pub passphrase: Option<String>,
    pub locale: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientState {
    Idle,
    LoggingIn,
    Discovering,
    Inspecting,
    Provisioning,
    Linking,
    Registering,
    Awaiting,
    Done,
    Failed(String),
}

impl ClientState {
    pub fn label(&self) -> String {
        match self {
            ClientState::Idle => "idle".into(),
            ClientState::LoggingIn => "logging_in".into(),
            ClientState::Discovering => "discovering".into(),
            ClientState::Inspecting => "inspecting".into(),
            ClientState::Provisioning => "provisioning".into(),
            ClientState::Linking => "linking".into(),
            ClientState::Registering => "registering".into(),
            ClientState::Awaiting => "awaiting".into(),
            ClientState::Done => "done".into(),
            ClientState::Failed(r) => format!("failed({r})"),
        }
    }
}

/// Walks a factory-fresh device through setup, as the companion app does.
pub struct PairingClient {
    pub cfg: ClientConfig,
    pub host: HostId,
    pub home_lan: Option<LanId>,
    pub state: ClientState,
    pub cookie: Option<String>,
    pub device_ssid: Option<String>,
    pub serial: Option<String>,
    pub device_type: Option<String>,
    pub certificate: Option<DeviceCertificate>,
    pub link_code: Option<String>,
    pub friendly_name: Option<String>,
    pub visible_networks: Vec<String>,
    api_host: String,
    api_chan: Option<ChannelId>,
    ping_chans: BTreeSet<ChannelId>,
    oobe_chan: Option<ChannelId>,
    reg_chan: Option<ChannelId>,
    awaiting_since: u64,
}

impl PairingClient {
    pub fn new(net: &mut Net, host_name: &str, owner: NodeId, cfg: ClientConfig) -> Self {
        let host = net.add_host(host_name, owner);
        PairingClient {
            cfg,
            host,
            home_lan: None,
            state: ClientState::Idle,
            cookie: None,
            device_ssid: None,
            serial: None,
            device_type: None,
            certificate: None,
            link_code: None,
            friendly_name: None,
            visible_networks: Vec::new(),
            api_host: String::new(),
            api_chan: None,
            ping_chans: BTreeSet::new(),
            oobe_chan: None,
            reg_chan: None,
            awaiting_since: 0,
        }
    }

    pub fn attach_home(&mut self, net: &mut Net, lan: LanId) -> Result<(), NetError> {
        net.attach(self.host, lan)?;
        self.home_lan = Some(lan);
        Ok(())
    }

    fn set_state(&mut self, net: &mut Net, s: ClientState) {
        net.note(self.host, Layer::Sys, format!("client {}", s.label()));
        self.state = s;
    }

    fn fail(&mut self, net: &mut Net, reason: impl Into<String>) {
        self.set_state(net, ClientState::Failed(reason.into()));
        for c in [self.oobe_chan.take(), self.reg_chan.take()]
            .into_iter()
            .flatten()
        {
            net.close(c, self.host);
        }
        self.leave_pairing(net);
    }

    fn connect_https(&mut self, net: &mut Net, name: &str) -> Result<ChannelId, NetError> {
        let ip = net
            .resolve(self.host, name)
            .ok_or(NetError::UnknownChannel)?;
        net.connect(
            self.host,
            SocketAddrV4::new(ip, HTTPS_PORT),
            true,
            Some(name),
        )
    }

    fn start(&mut self, net: &mut Net, action: &Action) {
        if !matches!(
            self.state,
            ClientState::Idle | ClientState::Done | ClientState::Failed(_)
        ) {
            net.note(self.host, Layer::Sys, "client: setup already running");
            return;
        }
        self.device_ssid = action.arg_str("device_ssid").map(str::to_string);
        self.set_state(net, ClientState::LoggingIn);
        let name = endpoint_set(&self.cfg.locale).api;
        match self.connect_https(net, &name) {
            Ok(chan) => {
                self.api_chan = Some(chan);
                let body = json!({"account": self.cfg.account, "password": self.cfg.password});
                let _ = post_json(net, chan, self.host, "/login", &body, None);
            }
            Err(e) => self.fail(net, format!("login: {e}")),
        }
    }

    fn on_login(&mut self, net: &mut Net, bytes: &[u8]) {
        let chan = self.api_chan.take();
        if let Some(c) = chan {
            net.close(c, self.host);
        }
        let cookie = parse_json_response(bytes)
            .filter(|(s, _)| *s == 200)
            .and_then(|(_, b)| b.get("cookie").and_then(Value::as_str).map(str::to_string));
        let Some(cookie) = cookie else {
            return self.fail(net, "login refused");
        };
        self.cookie = Some(cookie);
        self.discover(net);
    }

    fn discover(&mut self, net: &mut Net) {
        self.set_state(net, ClientState::Discovering);
        let ssid = self.device_ssid.clone().or_else(|| {
            net.lans()
                .find(|l| l.up && l.name.starts_with("pairing:"))
                .and_then(|l| l.ssid.clone())
        });
        let Some(ssid) = ssid else {
            return self.fail(net, "no pairing network visible");
        };
        if let Some(home) = self.home_lan {
            let _ = net.detach(self.host, home);
        }
        if let Err(e) = net.join_pairing(self.host, &ssid) {
            self.reattach_home(net);
            return self.fail(net, format!("join {ssid}: {e}"));
        }
        self.device_ssid = Some(ssid);
        for addr in pairing_candidates() {
            if let Ok(chan) =
                net.connect(self.host, SocketAddrV4::new(addr, OOBE_PORT), false, None)
            {
                self.ping_chans.insert(chan);
                let _ = send_oobe_request(net, chan, self.host, &OobeEnvelope::new("ping"));
            }
        }
        if self.ping_chans.is_empty() {
            return self.fail(net, "no device answered");
        }
        net.set_timer(PING_TIMEOUT_MS, "client:ping-timeout".into());
    }

    fn leave_pairing(&mut self, net: &mut Net) {
        if let Some(ssid) = &self.device_ssid {
            if let Some(p) = net.pairing_network(ssid) {
                let lan = p.lan;
                if net.host(self.host).addr_on(lan).is_some() {
                    let _ = net.detach(self.host, lan);
                }
            }
        }
        self.reattach_home(net);
    }

    fn reattach_home(&mut self, net: &mut Net) {
        if let Some(home) = self.home_lan {
            if net.host(self.host).addr_on(home).is_none() {
                let _ = net.attach(self.host, home);
            }
        }
    }

    fn oobe(&self, net: &mut Net, env: OobeEnvelope) {
        if let Some(c) = self.oobe_chan {
            let _ = send_oobe_request(net, c, self.host, &env);
        }
    }

    fn on_oobe(&mut self, net: &mut Net, chan: ChannelId, bytes: &[u8]) {
        let Some(OobeSeen::Response(status, env)) = parse_oobe(bytes) else {
            return;
        };
        if self.ping_chans.contains(&chan) {
            if self.oobe_chan.is_some()
                || env.method != "ping"
                || env.arg_str("ack") != Some(PING_ACK)
            {
                return;
            }
            self.oobe_chan = Some(chan);
            for c in std::mem::take(&mut self.ping_chans) {
                if c != chan {
                    net.close(c, self.host);
                }
            }
            self.set_state(net, ClientState::Inspecting);
            return self.oobe(net, OobeEnvelope::new("getDeviceDetails"));
        }
        if Some(chan) != self.oobe_chan {
            return;
        }
        if status != 200 {
            let why = env.arg_str("error").unwrap_or("error").to_string();
            return self.fail(net, format!("{} {status}: {why}", env.method));
        }
        match env.method.as_str() {
            "getDeviceDetails" => {
                let cert = env
                    .arg_str("certificate")
                    .and_then(|p| DeviceCertificate::from_pem(p).ok());
                let serial = env.arg_str("serial").map(str::to_string);
                match (cert, serial) {
                    (Some(cert), Some(serial)) if cert.verify() && cert.subject == serial => {
                        self.certificate = Some(cert);
                        self.serial = Some(serial);
                        self.device_type = env.arg_str("device_type").map(str::to_string);
                        let locale = env.arg_str("locale").unwrap_or("en-US");
                        self.api_host = endpoint_set(locale).api;
                        self.oobe(net, OobeEnvelope::new("getScanList"));
                    }
                    _ => self.fail(net, "device certificate invalid"),
                }
            }
            "getScanList" => {
                self.visible_networks = env
                    .args
                    .get("networks")
                    .and_then(Value::as_array)
                    .map(|a| {
                        a.iter()
                            .filter_map(|n| n.get("ssid")?.as_str().map(str::to_string))
                            .collect()
                    })
                    .unwrap_or_default();
                if !self.visible_networks.contains(&self.cfg.ssid) {
                    return self.fail(net, format!("{} not in scan list", self.cfg.ssid));
                }
                self.set_state(net, ClientState::Provisioning);
                let cred = match &self.cfg.passphrase {
                    Some(p) => WifiCredential::psk(&self.cfg.ssid, p),
                    None => WifiCredential::open(&self.cfg.ssid),
                };
                let cert = self.certificate.clone().expect("set with serial");
                match encrypt_credential(&cred, &cert, net.rng()) {
                    Ok(blob) => self.oobe(
                        net,
                        OobeEnvelope::new("connectToAP").with_arg("credential", blob.to_armor()),
                    ),
                    Err(e) => self.fail(net, format!("credential: {e}")),
                }
            }
            "connectToAP" => {
                if env.args.get("connected") != Some(&Value::Bool(true)) {
                    return self.fail(net, "device could not join the network");
                }
                self.set_state(net, ClientState::Linking);
                self.oobe(net, OobeEnvelope::new("getLinkCode"));
            }
            "getLinkCode" => {
                let Some(code) = env.arg_str("code").map(str::to_string) else {
                    return self.fail(net, "no link code");
                };
                self.link_code = Some(code.clone());
                self.set_state(net, ClientState::Registering);
                let name = self.api_host.clone();
                match self.connect_https(net, &name) {
                    Ok(chan) => {
                        self.reg_chan = Some(chan);
                        let body = json!({
                            "device_type": self.device_type,
                            "serial": self.serial,
                            "code": code,
                        });
                        let cookie = self.cookie.clone();
                        let _ = post_json(
                            net,
                            chan,
                            self.host,
                            "/registerDevice",
                            &body,
                            cookie.as_deref(),
                        );
                    }
                    Err(e) => self.fail(net, format!("registerDevice: {e}")),
                }
            }
            "getRegistrationState" => match env.arg_str("state") {
                Some("registered") => {
                    self.friendly_name = env.arg_str("friendly_name").map(str::to_string);
                    self.oobe(net, OobeEnvelope::new("setupComplete"));
                }
                Some("expired") => self.fail(net, "link code expired"),
                _ if net.now() >= self.awaiting_since + REGISTRATION_TIMEOUT_MS => {
                    self.fail(net, "registration timed out")
                }
                _ => net.set_timer(POLL_MS, "client:poll".into()),
            },
            "setupComplete" => {
                if env.args.get("complete") == Some(&Value::Bool(true)) {
                    self.oobe_chan = None;
                    self.leave_pairing(net);
                    self.set_state(net, ClientState::Done);
                } else {
                    self.fail(net, "setup incomplete");
                }
            }
            _ => {}
        }
    }

    fn on_register(&mut self, net: &mut Net, bytes: &[u8]) {
        if let Some(c) = self.reg_chan.take() {
            net.close(c, self.host);
        }
        match parse_json_response(bytes) {
            Some((200, _)) => {
                self.set_state(net, ClientState::Awaiting);
                self.awaiting_since = net.now();
                self.oobe(net, OobeEnvelope::new("getRegistrationState"));
            }
            Some((status, body)) => {
                let why = body
                    .get("error")
                    .and_then(Value::as_str)
                    .unwrap_or("refused")
                    .to_string();
                self.fail(net, format!("registerDevice {status}: {why}"));
            }
            None => self.fail(net, "registerDevice: bad response"),
        }
    }
}

impl Node for PairingClient {
    fn handle(&mut self, net: &mut Net, event: NodeEvent) {
        match event {
            NodeEvent::Message { chan, bytes, .. } => {
                if Some(chan) == self.api_chan {
                    self.on_login(net, &bytes);
                } else if Some(chan) == self.reg_chan {
                    self.on_register(net, &bytes);
                } else {
                    self.on_oobe(net, chan, &bytes);
                }
            }
            NodeEvent::Closed { chan, .. } => {
                self.ping_chans.remove(&chan);
                if Some(chan) == self.reg_chan {
                    self.reg_chan = None;
                    if self.state == ClientState::Registering {
                        self.fail(net, "registerDevice: connection closed");
                    }
                } else if Some(chan) == self.oobe_chan {
                    self.oobe_chan = None;
                    if !matches!(self.state, ClientState::Done | ClientState::Failed(_)) {
                        self.fail(net, "device connection lost");
                    }
                }
            }
            NodeEvent::Timer(tag) => match tag.as_str() {
                "client:ping-timeout" if self.state == ClientState::Discovering => {
                    self.fail(net, "no device answered")
                }
                "client:poll" if self.state == ClientState::Awaiting => {
                    self.oobe(net, OobeEnvelope::new("getRegistrationState"))
                }
                _ => {}
            },
            NodeEvent::Action(a) => match a.name.as_str() {
                "setup" => self.start(net, &a),
                other => net.note(
                    self.host,
                    Layer::Sys,
                    format!("client: unknown action {other}"),
                ),
            },
            _ => {}
        }
    }

    crate::node_any!();
}
