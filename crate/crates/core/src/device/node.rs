use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::SocketAddrV4;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};

use crate::avs::{backoff_delay_s, build_negotiation, NegotiationClaims, MAX_CONNECT_ATTEMPTS};
use crate::calling::{CommsConfig, UserAgent};
use crate::cloud::endpoints::{endpoint_set, regional_hostnames};
use crate::cloud::{Grant, HTTPS_PORT};
use crate::crypto::{decrypt_credential, AsymKeypair, EncryptedCredentialBlob, WifiCredential};
use crate::netsim::{
    Action, Annot, ChannelId, HostId, LanId, Layer, Net, NetError, Node, NodeEvent,
};
use crate::transport::{json_body, post_json, send_control, send_oobe_response};
use crate::wire::control::names;
use crate::wire::frame::{STREAM_SIP_CLIENT, STREAM_SYSTEM};
use crate::wire::oobe::OOBE_PORT;
use crate::wire::{control_decode, http_parse, oobe_decode, ControlMessage, Frame, OobeEnvelope};

use super::{
    derive_pairing_ssid, DeviceError, DeviceIdentity, DeviceMode, CHECK_LINK_CODE_INTERVAL_MS,
    PING_ACK,
};

const TEARDOWN_DELAY_MS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistrationStatus {
    Unlinked,
    Pending,
    Registered,
    Expired,
}

impl RegistrationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RegistrationStatus::Unlinked => "unlinked",
            RegistrationStatus::Pending => "pending",
            RegistrationStatus::Registered => "registered",
            RegistrationStatus::Expired => "expired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ApiCall {
    CreateLinkCode,
    CheckLinkCode,
}

pub struct Device {
    pub identity: DeviceIdentity,
    pub host: HostId,
    pub mode: DeviceMode,
    pub wifi: Option<WifiCredential>,
    pub grant: Option<Grant>,
    grant_key: Option<AsymKeypair>,
    pub link_code: Option<String>,
    pub registration: RegistrationStatus,
    pub home_lan: Option<LanId>,
    pub pairing_ssid: Option<String>,
    oobe_chans: BTreeSet<ChannelId>,
    waiting_for_code: Vec<ChannelId>,
    proxy: BTreeMap<ChannelId, ChannelId>,
    api_chan: Option<ChannelId>,
    api_queue: VecDeque<ApiCall>,
    polling: bool,
    avs_chan: Option<ChannelId>,
    replay_chans: BTreeSet<ChannelId>,
    pub avs_up: bool,
    pub avs_attempts: u32,
    pub avs_connects: u32,
    pub clock_skew_s: i64,
    pub last_negotiation: Option<Value>,
    pub refreshes: Vec<String>,
    pub rejections: Vec<String>,
    pub unsupported: u32,
    pub oobe_log: Vec<String>,
    pub ua: UserAgent,
}

fn oobe_error(method: &str, msg: &str) -> OobeEnvelope {
    OobeEnvelope::new(method).with_arg("error", msg)
}

impl Device {
    pub fn new(
        net: &mut Net,
        host_name: &str,
        owner: crate::netsim::NodeId,
        identity: DeviceIdentity,
    ) -> Self {
        let host = net.add_host(host_name, owner);
        Device {
            identity,
            host,
            mode: DeviceMode::Factory,
            wifi: None,
            grant: None,
            grant_key: None,
            link_code: None,
            registration: RegistrationStatus::Unlinked,
            home_lan: None,
            pairing_ssid: None,
            oobe_chans: BTreeSet::new(),
            waiting_for_code: Vec::new(),
            proxy: BTreeMap::new(),
            api_chan: None,
            api_queue: VecDeque::new(),
            polling: false,
            avs_chan: None,
            replay_chans: BTreeSet::new(),
            avs_up: false,
            avs_attempts: 0,
            avs_connects: 0,
            clock_skew_s: 0,
            last_negotiation: None,
            refreshes: Vec::new(),
            rejections: Vec::new(),
            unsupported: 0,
            oobe_log: Vec::new(),
            ua: UserAgent::new(host),
        }
    }

    /// Joins `lan` as the main Wi-Fi network without going through OOBE.
    pub fn attach_home(&mut self, net: &mut Net, lan: LanId) -> Result<(), NetError> {
        net.attach(self.host, lan)?;
        self.home_lan = Some(lan);
        Ok(())
    }

    /// Installs a grant obtained out of band (a device that is already set up).
    pub fn install_grant(&mut self, grant: Grant) -> Result<(), crate::crypto::CryptoError> {
        let bytes = B64
            .decode(&grant.private_key)
            .map_err(|_| crate::crypto::CryptoError::Malformed("grant key".into()))?;
        self.grant_key = Some(AsymKeypair::from_secret_bytes(&bytes)?);
        self.grant = Some(grant);
        self.registration = RegistrationStatus::Registered;
        self.mode = DeviceMode::Paired;
        Ok(())
    }

    pub fn owns_grant_key(&self) -> Option<&AsymKeypair> {
        self.grant_key.as_ref()
    }

    fn note(&self, net: &mut Net, layer: Layer, summary: impl Into<String>) {
        net.note(self.host, layer, summary);
    }

    fn transition(&mut self, net: &mut Net, to: DeviceMode) -> Result<(), DeviceError> {
        if !self.mode.can_enter(to) {
            let e = DeviceError::Transition {
                from: self.mode,
                to,
            };
            self.note(net, Layer::Sys, format!("{e}"));
            return Err(e);
        }
        self.note(
            net,
            Layer::Sys,
            format!("mode {} -> {}", self.mode.as_str(), to.as_str()),
        );
        self.mode = to;
        Ok(())
    }

    // ---- pairing mode

    pub fn enter_pairing(&mut self, net: &mut Net) -> Result<(), DeviceError> {
        if self.mode == DeviceMode::Pairing {
            self.note(net, Layer::Sys, "enter pairing refused: already pairing");
            return Err(DeviceError::AlreadyPairing);
        }
        let ssid = derive_pairing_ssid(&self.identity.serial)?;
        self.transition(net, DeviceMode::Pairing)?;
        let resolver: BTreeMap<_, _> = regional_hostnames()
            .into_iter()
            .map(|n| (n, self.identity.pairing_addr))
            .collect();
        if let Err(e) =
            net.create_pairing_network(self.host, &ssid, self.identity.pairing_addr, resolver)
        {
            self.note(net, Layer::Sys, format!("pairing network failed: {e}"));
        }
        net.listen(self.host, OOBE_PORT);
        net.listen(self.host, HTTPS_PORT);
        self.pairing_ssid = Some(ssid);
        Ok(())
    }

    fn teardown_pairing(&mut self, net: &mut Net) {
        if let Some(ssid) = self.pairing_ssid.take() {
            let _ = net.teardown_pairing(&ssid);
        }
        net.unlisten(self.host, OOBE_PORT);
        net.unlisten(self.host, HTTPS_PORT);
        self.oobe_chans.clear();
    }

    fn on_oobe(&mut self, net: &mut Net, chan: ChannelId, bytes: &[u8]) {
        let env = match http_parse(bytes)
            .map_err(|e| e.to_string())
            .and_then(|m| oobe_decode(&m).map_err(|e| e.to_string()))
        {
            Ok(env) => env,
            Err(e) => {
                let _ = send_oobe_response(net, chan, self.host, &oobe_error("error", &e), 400);
                return;
            }
        };
        self.oobe_log.push(env.method.clone());
        let ok = |env: OobeEnvelope| (env, 200u16);
        let (resp, status) = match env.method.as_str() {
            "ping" => ok(OobeEnvelope::new("ping")
                .with_arg("ack", PING_ACK)
                .with_arg("software_version", self.identity.software_version.clone())),
            "getDeviceDetails" => ok(OobeEnvelope::new("getDeviceDetails")
                .with_arg("device_type", self.identity.device_type.clone())
                .with_arg("serial", self.identity.serial.clone())
                .with_arg("mac", self.identity.mac.clone())
                .with_arg("locale", self.identity.locale.clone())
                .with_arg("languages", json!([self.identity.locale]))
                .with_arg("software_version", self.identity.software_version.clone())
                .with_arg("certificate", self.identity.certificate.to_pem())),
            "getScanList" => {
                let networks: Vec<Value> = net
                    .lans()
                    .filter(|l| l.up && l.ssid.is_some() && !l.name.starts_with("pairing:"))
                    .enumerate()
                    .map(|(i, l)| json!({"ssid": l.ssid, "signal": -40 - 7 * i as i64}))
                    .collect();
                ok(OobeEnvelope::new("getScanList")
                    .with_arg("configured", self.wifi.is_some())
                    .with_arg("networks", Value::Array(networks)))
            }
            "connectToAP" => self.connect_to_ap(net, &env),
            "getLinkCode" => match &self.link_code {
                Some(code) => ok(OobeEnvelope::new("getLinkCode").with_arg("code", code.clone())),
                None if net.internet_addr(self.host).is_some() => {
                    self.waiting_for_code.push(chan);
                    if !self.api_queue.contains(&ApiCall::CreateLinkCode) {
                        self.create_link_code(net);
                    }
                    return;
                }
                None => (oobe_error("getLinkCode", "offline"), 400),
            },
            "getRegistrationState" => {
                let mut r = OobeEnvelope::new("getRegistrationState")
                    .with_arg("state", self.registration.as_str());
                if let Some(g) = &self.grant {
                    r = r.with_arg("friendly_name", g.friendly_name.clone());
                }
                ok(r)
            }
            "setupComplete" => {
                if self.grant.is_some() && self.mode == DeviceMode::Pairing {
                    let _ = self.transition(net, DeviceMode::Paired);
                    net.set_timer(TEARDOWN_DELAY_MS, "device:teardown".into());
                    ok(OobeEnvelope::new("setupComplete").with_arg("complete", true))
                } else {
                    self.note(
                        net,
                        Layer::Sys,
                        "setupComplete without a grant; staying in pairing mode",
                    );
                    ok(OobeEnvelope::new("setupComplete").with_arg("complete", false))
                }
            }
            other => (oobe_error(other, "unknown method"), 400),
        };
        let _ = send_oobe_response(net, chan, self.host, &resp, status);
    }

    fn connect_to_ap(&mut self, net: &mut Net, env: &OobeEnvelope) -> (OobeEnvelope, u16) {
        let cred = env
            .arg_str("credential")
            .ok_or(())
            .and_then(|a| EncryptedCredentialBlob::from_armor(a).map_err(|_| ()))
            .and_then(|b| decrypt_credential(&b, &self.identity.keypair).map_err(|_| ()));
        let Ok(cred) = cred else {
            self.note(net, Layer::Sys, "connectToAP: bad credential");
            return (oobe_error("connectToAP", "bad credential"), 400);
        };
        let target = net.lan_by_ssid(&cred.ssid).filter(|l| {
            let lan = net.lan(*l);
            lan.up
                && !lan.name.starts_with("pairing:")
                && lan.passphrase.clone().unwrap_or_default() == cred.passphrase
        });
        let Some(lan) = target else {
            self.note(
                net,
                Layer::Sys,
                format!("connectToAP: cannot join {}", cred.ssid),
            );
            return (
                OobeEnvelope::new("connectToAP")
                    .with_arg("connected", false)
                    .with_arg("ssid", cred.ssid),
                200,
            );
        };
        if self.home_lan != Some(lan) {
            if let Some(old) = self.home_lan.take() {
                let _ = net.detach(self.host, old);
            }
            if let Err(e) = net.attach(self.host, lan) {
                self.note(net, Layer::Sys, format!("connectToAP: {e}"));
                return (
                    OobeEnvelope::new("connectToAP").with_arg("connected", false),
                    200,
                );
            }
            self.home_lan = Some(lan);
        }
        self.note(net, Layer::Sys, format!("joined {}", cred.ssid));
        let ssid = cred.ssid.clone();
        self.wifi = Some(cred);
        self.create_link_code(net);
        (
            OobeEnvelope::new("connectToAP")
                .with_arg("connected", true)
                .with_arg("ssid", ssid),
            200,
        )
    }

    // ---- the 443 proxy

    fn on_proxy_accept(&mut self, net: &mut Net, chan: ChannelId, sni: Option<String>) {
        let allowed = sni
            .as_ref()
            .is_some_and(|s| regional_hostnames().contains(s));
        let Some(sni) = sni.filter(|_| allowed) else {
            self.note(net, Layer::Sys, "proxy: destination not allowed");
            net.close(chan, self.host);
            return;
        };
        if net.internet_addr(self.host).is_none() {
            self.note(net, Layer::Sys, "proxy: offline");
            net.close(chan, self.host);
            return;
        }
        let upstream = net
            .resolve(self.host, &sni)
            .ok_or(NetError::UnknownChannel)
            .and_then(|ip| {
                net.connect(
                    self.host,
                    SocketAddrV4::new(ip, HTTPS_PORT),
                    true,
                    Some(&sni),
                )
            });
        match upstream {
            Ok(up) => {
                self.proxy.insert(chan, up);
                self.proxy.insert(up, chan);
            }
            Err(e) => {
                self.note(net, Layer::Sys, format!("proxy: offline ({e})"));
                net.close(chan, self.host);
            }
        }
    }

    // ---- rendezvous API

    fn api_request(&mut self, net: &mut Net, call: ApiCall, path: &str, body: Value) {
        if !self.api_chan.is_some_and(|c| net.is_open(c)) {
            self.api_queue.clear();
            let name = endpoint_set(&self.identity.locale).api;
            let chan = net
                .resolve(self.host, &name)
                .filter(|_| net.internet_addr(self.host).is_some())
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
                Err(e) => {
                    self.note(net, Layer::Sys, format!("{path}: offline ({e})"));
                    return;
                }
            }
        }
        self.api_queue.push_back(call);
        let _ = post_json(net, self.api_chan.unwrap(), self.host, path, &body, None);
    }

    fn create_link_code(&mut self, net: &mut Net) {
        let body = json!({
            "device_type": self.identity.device_type,
            "serial": self.identity.serial,
            "secret_b64": B64.encode(self.identity.secret),
        });
        self.api_request(net, ApiCall::CreateLinkCode, "/createLinkCode", body);
    }

    fn check_link_code(&mut self, net: &mut Net) {
        let Some(code) = self.link_code.clone() else {
            return;
        };
        let body = json!({
            "serial": self.identity.serial,
            "secret_b64": B64.encode(self.identity.secret),
            "code": code,
        });
        self.api_request(net, ApiCall::CheckLinkCode, "/checkLinkCode", body);
    }

    fn on_api_response(&mut self, net: &mut Net, bytes: &[u8]) {
        let Some(call) = self.api_queue.pop_front() else {
            return;
        };
        let Ok(resp) = http_parse(bytes) else { return };
        let status = resp.status().unwrap_or(0);
        let body = json_body(&resp);
        match call {
            ApiCall::CreateLinkCode => {
                let code = body
                    .get("code")
                    .and_then(Value::as_str)
                    .filter(|_| status == 200);
                let waiting = std::mem::take(&mut self.waiting_for_code);
                match code {
                    Some(code) => {
                        self.link_code = Some(code.to_string());
                        self.registration = RegistrationStatus::Pending;
                        for chan in waiting {
                            let r = OobeEnvelope::new("getLinkCode").with_arg("code", code);
                            let _ = send_oobe_response(net, chan, self.host, &r, 200);
                        }
                        if !self.polling {
                            self.polling = true;
                            net.set_timer(CHECK_LINK_CODE_INTERVAL_MS, "device:poll".into());
                        }
                    }
                    None => {
                        self.note(
                            net,
                            Layer::Sys,
                            format!("createLinkCode failed with {status}"),
                        );
                        for chan in waiting {
                            let r = oobe_error("getLinkCode", "link code unavailable");
                            let _ = send_oobe_response(net, chan, self.host, &r, 400);
                        }
                    }
                }
            }
            ApiCall::CheckLinkCode => match body.get("state").and_then(Value::as_str) {
                Some("pending") => net.set_timer(CHECK_LINK_CODE_INTERVAL_MS, "device:poll".into()),
                Some("registered") => {
                    self.polling = false;
                    let grant = body
                        .get("grant")
                        .cloned()
                        .and_then(|g| serde_json::from_value::<Grant>(g).ok());
                    let Some(grant) = grant else {
                        self.note(net, Layer::Sys, "checkLinkCode: malformed grant");
                        return;
                    };
                    let mode = self.mode;
                    if self.install_grant(grant).is_err() {
                        self.note(net, Layer::Sys, "checkLinkCode: unusable grant key");
                        return;
                    }
                    self.mode = mode;
                    let name = self
                        .grant
                        .as_ref()
                        .map(|g| g.friendly_name.clone())
                        .unwrap_or_default();
                    self.note(
                        net,
                        Layer::Sys,
                        format!("grant received friendly_name={name}"),
                    );
                }
                Some("expired") => {
                    self.polling = false;
                    self.registration = RegistrationStatus::Expired;
                    self.note(net, Layer::Sys, "link code expired");
                }
                _ => {
                    self.polling = false;
                    self.note(
                        net,
                        Layer::Sys,
                        format!("checkLinkCode failed with {status}"),
                    );
                }
            },
        }
    }

    // ---- voice service

    fn avs_send(&self, net: &mut Net, stream: u32, msg: &ControlMessage) {
        if let Some(chan) = self.avs_chan {
            let _ = send_control(net, chan, self.host, stream, msg);
        }
    }

    fn open_avs(&mut self, net: &mut Net) -> Result<ChannelId, NetError> {
        let name = endpoint_set(&self.identity.locale).avs;
        if net.internet_addr(self.host).is_none() {
            return Err(NetError::UnknownChannel);
        }
        let ip = net
            .resolve(self.host, &name)
            .ok_or(NetError::UnknownChannel)?;
        net.connect(
            self.host,
            SocketAddrV4::new(ip, HTTPS_PORT),
            true,
            Some(&name),
        )
    }

    pub fn avs_connect(&mut self, net: &mut Net) {
        if self.mode != DeviceMode::Paired || self.avs_chan.is_some() {
            return;
        }
        let (Some(grant), Some(key)) = (self.grant.clone(), self.grant_key.clone()) else {
            return;
        };
        self.avs_attempts += 1;
        let chan = match self.open_avs(net) {
            Ok(c) => c,
            Err(_) => {
                self.note(net, Layer::Control, "avs connect failed");
                self.schedule_avs_retry(net);
                return;
            }
        };
        self.avs_chan = Some(chan);
        self.avs_connects += 1;
        let timestamp = (net.now_secs() as i64 + self.clock_skew_s).max(0) as u64;
        let claims = NegotiationClaims {
            device_type: self.identity.device_type.clone(),
            serial: self.identity.serial.clone(),
            auth_token: grant.auth_token.clone(),
            timestamp,
        };
        let payload = build_negotiation(&claims, &key);
        self.last_negotiation = Some(payload.clone());
        let cmd = ControlMessage::new(names::SYSTEM, names::NEGOTIATION_COMMAND, payload);
        self.avs_send(net, STREAM_SYSTEM, &cmd);
    }

    fn schedule_avs_retry(&mut self, net: &mut Net) {
        if self.avs_attempts >= MAX_CONNECT_ATTEMPTS {
            self.note(net, Layer::Control, "avs: giving up");
            return;
        }
        let delay = backoff_delay_s(self.avs_attempts - 1) * 1000;
        net.set_timer(delay, "device:avs-retry".into());
    }

    /// Sends the last NegotiationCommand again, verbatim, on a new channel.
    fn replay_negotiation(&mut self, net: &mut Net) {
        let Some(payload) = self.last_negotiation.clone() else {
            self.note(net, Layer::Control, "nothing to replay");
            return;
        };
        match self.open_avs(net) {
            Ok(chan) => {
                self.replay_chans.insert(chan);
                let cmd = ControlMessage::new(names::SYSTEM, names::NEGOTIATION_COMMAND, payload);
                let _ = send_control(net, chan, self.host, STREAM_SYSTEM, &cmd);
            }
            Err(e) => self.note(net, Layer::Control, format!("replay failed: {e}")),
        }
    }

    fn on_avs(&mut self, net: &mut Net, chan: ChannelId, bytes: &[u8]) {
        let Ok(frames) = Frame::decode_all(bytes) else {
            self.note(net, Layer::Control, "avs: bad frame");
            return;
        };
        for f in frames {
            match control_decode(&f.data) {
                Ok(msg) if self.replay_chans.contains(&chan) => {
                    let verdict = if msg.is(names::SYSTEM, names::NEGOTIATION_ACCEPTED) {
                        "accepted"
                    } else {
                        "rejected"
                    };
                    if msg.is(names::SYSTEM, names::NEGOTIATION_ACCEPTED)
                        || msg.is(names::SYSTEM, names::NEGOTIATION_REJECTED)
                    {
                        self.note(
                            net,
                            Layer::Control,
                            format!("replayed negotiation {verdict}"),
                        );
                    }
                }
                Ok(msg) => self.dispatch_control(net, msg),
                Err(e) => self.note(
                    net,
                    Layer::Control,
                    format!("avs: bad control message: {e}"),
                ),
            }
        }
    }

    /// Routes one cloud command.
    pub fn dispatch_control(&mut self, net: &mut Net, msg: ControlMessage) {
        let p = &msg.payload;
        let call_id = p.get("call_id").and_then(Value::as_str);
        match (msg.interface.as_str(), msg.name.as_str()) {
            (names::SYSTEM, names::NEGOTIATION_ACCEPTED) => {
                self.avs_up = true;
                self.avs_attempts = 0;
                self.note(net, Layer::Control, "avs session up");
                let req = ControlMessage::new(
                    names::SIP_CLIENT,
                    names::CONFIGURE_COMMS_REQUEST,
                    json!({}),
                );
                self.avs_send(net, STREAM_SIP_CLIENT, &req);
            }
            (names::SYSTEM, names::NEGOTIATION_REJECTED) => {
                let reason = p
                    .get("reason")
                    .and_then(Value::as_str)
                    .unwrap_or("unspecified");
                self.rejections.push(reason.to_string());
                self.note(
                    net,
                    Layer::Control,
                    format!("avs negotiation rejected: {reason}"),
                );
            }
            (names::SYSTEM, names::REFRESH_STATE) => {
                let sub = p
                    .get("subsystem")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string();
                let ack = ControlMessage::new(
                    names::SYSTEM,
                    names::REFRESH_STATE_ACK,
                    json!({"subsystem": sub}),
                );
                self.refreshes.push(sub);
                self.avs_send(net, STREAM_SYSTEM, &ack);
            }
            (names::SYSTEM, names::UNSUPPORTED) => {}
            (names::SIP_CLIENT, names::CONFIGURE_COMMS) => {
                match serde_json::from_value::<CommsConfig>(p.clone()) {
                    Ok(cfg) => self.ua.apply_comms_config(net, cfg),
                    Err(_) => self.note(net, Layer::Control, format!("comms config refused: {p}")),
                }
            }
            (names::SIP_CLIENT, names::WARM_UP) => self.ua.warm_up(p),
            (names::SIP_CLIENT, names::BEGIN_CALL) => {
                let _ = self.ua.begin_call(net, p);
            }
            (names::SIP_CLIENT, names::ACCEPT_CALL) => {
                if let Err(e) = self.ua.accept_call(net, call_id) {
                    self.note(net, Layer::Sip, format!("AcceptCall: {e}"));
                }
            }
            (names::SIP_CLIENT, names::END_CALL) => {
                if let Err(e) = self.ua.end_call(net, call_id) {
                    self.note(net, Layer::Sip, format!("EndCall: {e}"));
                }
            }
            _ => {
                self.unsupported += 1;
                self.note(
                    net,
                    Layer::Control,
                    format!("unsupported command {}", msg.qualified_name()),
                );
                let ack = ControlMessage::new(
                    names::SYSTEM,
                    names::UNSUPPORTED,
                    json!({"interface": msg.interface, "name": msg.name}),
                );
                self.avs_send(net, STREAM_SYSTEM, &ack);
            }
        }
        self.flush_ua(net);
    }

    fn flush_ua(&mut self, net: &mut Net) {
        for msg in self.ua.drain_outbox() {
            if self.avs_up {
                self.avs_send(net, STREAM_SIP_CLIENT, &msg);
            }
        }
    }

    fn on_action(&mut self, net: &mut Net, action: &Action) {
        match action.name.as_str() {
            "enter_pairing" => {
                let _ = self.enter_pairing(net);
            }
            "power_on" => self.avs_connect(net),
            "set_clock_skew" => {
                self.clock_skew_s = action
                    .args
                    .get("seconds")
                    .and_then(Value::as_i64)
                    .unwrap_or(0);
            }
            "replay_negotiation" => self.replay_negotiation(net),
            "accept_call" => {
                let _ = self.ua.accept_call(net, action.arg_str("call_id"));
                self.flush_ua(net);
            }
            "end_call" => {
                let _ = self.ua.end_call(net, action.arg_str("call_id"));
                self.flush_ua(net);
            }
            other => self.note(net, Layer::Sys, format!("device: unknown action {other}")),
        }
    }

    fn on_closed(&mut self, net: &mut Net, chan: ChannelId) {
        if let Some(other) = self.proxy.remove(&chan) {
            self.proxy.remove(&other);
            net.close(other, self.host);
        } else if self.avs_chan == Some(chan) {
            self.avs_chan = None;
            self.avs_up = false;
            self.note(net, Layer::Control, "avs channel closed");
            self.schedule_avs_retry(net);
        } else if self.replay_chans.remove(&chan) {
        } else if self.api_chan == Some(chan) {
            self.api_chan = None;
            self.api_queue.clear();
        } else if self.ua.owns_channel(chan) {
            self.ua.on_closed(net, chan);
        } else {
            self.oobe_chans.remove(&chan);
        }
    }
}

impl Node for Device {
    fn handle(&mut self, net: &mut Net, event: NodeEvent) {
        match event {
            NodeEvent::Accepted {
                chan,
                local_port,
                sni,
                ..
            } => match local_port {
                OOBE_PORT => {
                    self.oobe_chans.insert(chan);
                }
                HTTPS_PORT => self.on_proxy_accept(net, chan, sni),
                _ => {}
            },
            NodeEvent::Message {
                chan, bytes, annot, ..
            } => {
                if let Some(&other) = self.proxy.get(&chan) {
                    let _ = net.send(
                        other,
                        self.host,
                        bytes,
                        Annot::new(annot.layer, annot.summary),
                    );
                } else if self.avs_chan == Some(chan) || self.replay_chans.contains(&chan) {
                    self.on_avs(net, chan, &bytes);
                } else if self.api_chan == Some(chan) {
                    self.on_api_response(net, &bytes);
                } else if self.ua.owns_channel(chan) {
                    self.ua.on_message(net, &bytes);
                    self.flush_ua(net);
                } else if self.oobe_chans.contains(&chan) {
                    self.on_oobe(net, chan, &bytes);
                }
            }
            NodeEvent::Closed { chan, .. } => self.on_closed(net, chan),
            NodeEvent::Datagram {
                local_port, bytes, ..
            } => {
                self.ua.on_datagram(net, local_port, &bytes);
            }
            NodeEvent::Timer(tag) => match tag.as_str() {
                "device:poll" => {
                    if self.polling {
                        self.check_link_code(net);
                    }
                }
                "device:teardown" => {
                    self.teardown_pairing(net);
                    self.avs_connect(net);
                }
                "device:avs-retry" => self.avs_connect(net),
                t if t.starts_with("ua:") => {
                    self.ua.on_timer(net, t);
                    self.flush_ua(net);
                }
                _ => {}
            },
            NodeEvent::Action(a) => self.on_action(net, &a),
            NodeEvent::Tap(_) => {}
        }
    }

    crate::node_any!();
}
