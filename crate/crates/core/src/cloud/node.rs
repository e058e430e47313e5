use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde_json::{json, Value};

use crate::crypto::CallType;
use crate::netsim::{Action, ChannelId, HostId, Layer, Net, NetError, Node, NodeEvent, NodeId};
use crate::transport::{json_body, reply_json, send_control, session_cookie};
use crate::wire::control::names;
use crate::wire::frame::{STREAM_SIP_CLIENT, STREAM_SYSTEM};
use crate::wire::{control_decode, http_parse, ControlMessage, Frame, HttpMessage};

use super::endpoints::{region, REGIONS};
use super::registrar::{Registrar, GATEWAY_SIP_PORT};
use super::relay::{Gateway, Relay};
use super::state::*;
use crate::avs::REFRESH_SUBSYSTEMS;

pub const CLOUD_LAN: &str = "cloud";
pub const CLOUD_PREFIX: &str = "52.94.0";
pub const RELAY_HOSTNAME: &str = "relay.cloud.test";
pub const GATEWAY_HOSTNAME: &str = "gw.cloud.test";
pub const HTTPS_PORT: u16 = 443;

/// A token the cloud minted for one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuedToken {
    pub call_id: String,
    pub caller_serial: String,
    pub callee: String,
    pub token: String,
}

/// One upstream control event received from a device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceEvent {
    pub serial: String,
    pub name: String,
    pub payload: Value,
}

pub struct Cloud {
    pub state: CloudState,
    pub api: HostId,
    pub avs: HostId,
    pub sip: HostId,
    pub relay_host: HostId,
    pub gw_host: HostId,
    pub registrar: Registrar,
    pub relay: Relay,
    pub gateway: Gateway,
    sessions: BTreeMap<ChannelId, Option<AvsSession>>,
    device_chans: BTreeMap<String, ChannelId>,
    pub accepted: u32,
    pub rejected: u32,
    pub refresh_acks: u32,
    pub http_log: Vec<(String, u16)>,
    pub issued: Vec<IssuedToken>,
    pub events: Vec<DeviceEvent>,
    call_seq: u32,
}

impl Cloud {
    /// Builds the cloud LAN, its five hosts and their DNS names.
    pub fn build(net: &mut Net, id: NodeId) -> Result<Cloud, NetError> {
        let lan = net.create_lan(CLOUD_LAN, CLOUD_PREFIX, false, true)?;
        let host = |net: &mut Net, name: &str| -> Result<(HostId, Ipv4Addr), NetError> {
            let h = net.add_host(name, id);
            let a = net.attach(h, lan)?;
            Ok((h, a))
        };
        let (api, api_addr) = host(net, "cloud-api")?;
        let (avs, avs_addr) = host(net, "cloud-avs")?;
        let (sip, sip_addr) = host(net, "cloud-sip")?;
        let (relay_host, relay_addr) = host(net, "cloud-relay")?;
        let (gw_host, gw_addr) = host(net, "cloud-gw")?;
        for r in REGIONS {
            let e = region(r);
            net.dns_register(&e.api, api_addr);
            net.dns_register(&e.avs, avs_addr);
        }
        net.dns_register(REGISTRAR_HOST, sip_addr);
        net.dns_register(RELAY_HOSTNAME, relay_addr);
        net.dns_register(GATEWAY_HOSTNAME, gw_addr);
        net.listen(api, HTTPS_PORT);
        net.listen(avs, HTTPS_PORT);
        net.listen(sip, REGISTRAR_PORT);
        net.listen(gw_host, GATEWAY_SIP_PORT);
        let state = CloudState::new(net.rng());
        let mut registrar = Registrar::new(sip);
        registrar.gateway = Some(std::net::SocketAddrV4::new(gw_addr, GATEWAY_SIP_PORT));
        Ok(Cloud {
            state,
            api,
            avs,
            sip,
            relay_host,
            gw_host,
            registrar,
            relay: Relay::new(relay_host),
            gateway: Gateway::new(gw_host),
            sessions: BTreeMap::new(),
            device_chans: BTreeMap::new(),
            accepted: 0,
            rejected: 0,
            refresh_acks: 0,
            http_log: Vec::new(),
            issued: Vec::new(),
            events: Vec::new(),
            call_seq: 0,
        })
    }

    /// The accepted voice-service session of `serial`, if connected.
    pub fn session_of(&self, serial: &str) -> Option<&AvsSession> {
        let chan = self.device_chans.get(serial)?;
        self.sessions.get(chan)?.as_ref()
    }

    pub fn events_named(&self, name: &str) -> impl Iterator<Item = &DeviceEvent> {
        let name = name.to_string();
        self.events.iter().filter(move |e| e.name == name)
    }

    // ---- account and rendezvous API

    fn on_http(&mut self, net: &mut Net, chan: ChannelId, bytes: &[u8]) {
        let req = match http_parse(bytes) {
            Ok(r) => r,
            Err(e) => {
                net.note(self.api, Layer::Http, format!("api: bad request: {e}"));
                return;
            }
        };
        let path = req
            .path()
            .unwrap_or_default()
            .trim_start_matches('/')
            .to_string();
        let (status, body) = self.api_call(net, &path, &req);
        let reason = match status {
            200 => "OK",
            401 => "Unauthorized",
            404 => "Not Found",
            409 => "Conflict",
            410 => "Gone",
            _ => "Bad Request",
        };
        self.http_log.push((path.clone(), status));
        let _ = reply_json(net, chan, self.api, status, reason, &body, &path);
    }

    fn api_call(&mut self, net: &mut Net, path: &str, req: &HttpMessage) -> (u16, Value) {
        let body = json_body(req);
        let s = |k: &str| {
            body.get(k)
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string()
        };
        let secret = || {
            use base64::Engine;
            base64::engine::general_purpose::STANDARD
                .decode(s("secret_b64"))
                .unwrap_or_default()
        };
        let now = net.now_secs();
        let err = |e: CloudError| json!({"error": e.to_string()});
        match path {
            "login" => match self.state.login(&s("account"), &s("password"), net.rng()) {
                Ok(cookie) => (200, json!({"cookie": cookie})),
                Err(e) => (401, err(e)),
            },
            "createLinkCode" => {
                match self.state.create_link_code(
                    &s("device_type"),
                    &s("serial"),
                    &secret(),
                    now,
                    net.rng(),
                ) {
                    Ok(code) => (200, json!({"code": code})),
                    Err(e) => (401, err(e)),
                }
            }
            "checkLinkCode" => match self.state.check_link_code(
                &s("serial"),
                &secret(),
                &s("code"),
                now,
                net.rng(),
            ) {
                Ok(LinkCheck::Pending) => (200, json!({"state": "pending"})),
                Ok(LinkCheck::Expired) => (200, json!({"state": "expired"})),
                Ok(LinkCheck::Granted(g)) => (200, json!({"state": "registered", "grant": g})),
                Err(e) => (401, err(e)),
            },
            "registerDevice" => {
                let cookie = session_cookie(req).unwrap_or_default().to_string();
                let serial = s("serial");
                match self.state.register_device(
                    &cookie,
                    &s("device_type"),
                    &serial,
                    &s("code"),
                    now,
                ) {
                    Ok(name) => {
                        let acct = self
                            .state
                            .account_for_cookie(&cookie)
                            .unwrap_or_default()
                            .to_string();
                        net.note(
                            self.api,
                            Layer::Sys,
                            format!("account {acct} registered {serial}"),
                        );
                        (200, json!({"friendly_name": name}))
                    }
                    Err(e) => {
                        net.note(
                            self.api,
                            Layer::Sys,
                            format!("registerDevice {serial} refused: {e}"),
                        );
                        let status = match e {
                            CloudError::BadCookie => 401,
                            CloudError::AlreadyRegistered => 409,
                            _ => 410,
                        };
                        (status, err(e))
                    }
                }
            }
            "deregisterDevice" => {
                let cookie = session_cookie(req).unwrap_or_default();
                let serial = s("serial");
                match self.state.account_for_cookie(cookie) {
                    Some(a) if self.state.owners.get(&serial).map(String::as_str) == Some(a) => {
                        self.deregister(net, &serial);
                        (200, json!({}))
                    }
                    Some(_) => (409, json!({"error": "not owner"})),
                    None => (401, err(CloudError::BadCookie)),
                }
            }
            _ => (404, json!({"error": "no such endpoint"})),
        }
    }

    fn deregister(&mut self, net: &mut Net, serial: &str) {
        if let Some(owner) = self.state.deregister(serial) {
            net.note(
                self.api,
                Layer::Sys,
                format!("account {owner} deregistered {serial}"),
            );
        }
    }

    // ---- voice service

    fn send_device(&self, net: &mut Net, chan: ChannelId, stream: u32, msg: &ControlMessage) {
        let _ = send_control(net, chan, self.avs, stream, msg);
    }

    fn on_avs(&mut self, net: &mut Net, chan: ChannelId, bytes: &[u8]) {
        let frames = match Frame::decode_all(bytes) {
            Ok(f) => f,
            Err(e) => {
                net.note(self.avs, Layer::Control, format!("avs: bad frame: {e}"));
                return;
            }
        };
        for f in frames {
            match control_decode(&f.data) {
                Ok(msg) => self.on_control(net, chan, msg),
                Err(e) => net.note(
                    self.avs,
                    Layer::Control,
                    format!("avs: bad control message: {e}"),
                ),
            }
        }
    }

    fn on_control(&mut self, net: &mut Net, chan: ChannelId, msg: ControlMessage) {
        let session = self.sessions.get(&chan).cloned().flatten();
        if msg.is(names::SYSTEM, names::NEGOTIATION_COMMAND) {
            return self.negotiate(net, chan, &msg.payload);
        }
        let Some(session) = session else {
            net.note(
                self.avs,
                Layer::Control,
                format!("avs: {} before negotiation", msg.qualified_name()),
            );
            return;
        };
        match (msg.interface.as_str(), msg.name.as_str()) {
            (names::SYSTEM, names::REFRESH_STATE_ACK) => self.refresh_acks += 1,
            (names::SYSTEM, names::UNSUPPORTED) => {}
            (names::SIP_CLIENT, names::CONFIGURE_COMMS_REQUEST) => {
                let payload = match self.state.configure_comms(Some(&session)) {
                    Ok(cfg) => serde_json::to_value(cfg).expect("config serializes"),
                    Err(e) => json!({"error": e.to_string()}),
                };
                let reply = ControlMessage::new(names::SIP_CLIENT, names::CONFIGURE_COMMS, payload);
                self.send_device(net, chan, STREAM_SIP_CLIENT, &reply);
            }
            (names::SIP_CLIENT, _) if !msg.unknown => self.events.push(DeviceEvent {
                serial: session.serial.clone(),
                name: msg.name.clone(),
                payload: msg.payload.clone(),
            }),
            _ => {
                let reply = ControlMessage::new(
                    names::SYSTEM,
                    names::UNSUPPORTED,
                    json!({"interface": msg.interface, "name": msg.name}),
                );
                self.send_device(net, chan, STREAM_SYSTEM, &reply);
            }
        }
    }

    fn negotiate(&mut self, net: &mut Net, chan: ChannelId, payload: &Value) {
        match self.state.avs_accept(payload, net.now_secs()) {
            Ok(session) => {
                self.accepted += 1;
                net.note(
                    self.avs,
                    Layer::Control,
                    format!(
                        "avs accepted {} for account {}",
                        session.serial, session.account
                    ),
                );
                self.device_chans.insert(session.serial.clone(), chan);
                self.sessions.insert(chan, Some(session));
                let ok = ControlMessage::new(names::SYSTEM, names::NEGOTIATION_ACCEPTED, json!({}));
                self.send_device(net, chan, STREAM_SYSTEM, &ok);
                for sub in REFRESH_SUBSYSTEMS {
                    let r = ControlMessage::new(
                        names::SYSTEM,
                        names::REFRESH_STATE,
                        json!({"subsystem": sub}),
                    );
                    self.send_device(net, chan, STREAM_SYSTEM, &r);
                }
            }
            Err(e) => {
                self.rejected += 1;
                net.note(self.avs, Layer::Control, format!("avs rejected: {e}"));
                let no = ControlMessage::new(
                    names::SYSTEM,
                    names::NEGOTIATION_REJECTED,
                    json!({"reason": e.to_string()}),
                );
                self.send_device(net, chan, STREAM_SYSTEM, &no);
                net.close(chan, self.avs);
                self.sessions.remove(&chan);
            }
        }
    }

    fn device_chan(&self, net: &mut Net, serial: &str) -> Option<ChannelId> {
        let chan = self.device_chans.get(serial).copied();
        if chan.is_none() {
            net.note(
                self.avs,
                Layer::Control,
                format!("utterance for offline device {serial}"),
            );
        }
        chan
    }

    // ---- utterances and account actions

    fn on_action(&mut self, net: &mut Net, action: &Action) {
        let a = |k: &str| action.arg_str(k).unwrap_or_default().to_string();
        match action.name.as_str() {
            "call" | "drop_in" => self.utterance_call(net, action),
            "answer" | "hang_up" => {
                let Some(chan) = self.device_chan(net, &a("device")) else {
                    return;
                };
                let name = if action.name == "answer" {
                    names::ACCEPT_CALL
                } else {
                    names::END_CALL
                };
                let payload = match action.arg_str("call_id") {
                    Some(id) => json!({"call_id": id}),
                    None => json!({}),
                };
                let msg = ControlMessage::new(names::SIP_CLIENT, name, payload);
                self.send_device(net, chan, STREAM_SIP_CLIENT, &msg);
            }
            "deregister" => self.deregister(net, &a("serial")),
            "grant_drop_in" => {
                self.state.grant_drop_in(&a("caller"), &a("callee"));
                net.note(
                    self.api,
                    Layer::Sys,
                    format!("drop-in granted {} -> {}", a("caller"), a("callee")),
                );
            }
            other => net.note(
                self.api,
                Layer::Sys,
                format!("cloud: unknown action {other}"),
            ),
        }
    }

    fn callee_uri(action: &Action) -> Option<String> {
        if let Some(acct) = action.arg_str("to_account") {
            Some(account_uri(acct))
        } else if let Some(serial) = action.arg_str("to_device") {
            Some(device_uri(serial))
        } else {
            action.arg_str("to_phone").map(phone_uri)
        }
    }

    fn utterance_call(&mut self, net: &mut Net, action: &Action) {
        let serial = action.arg_str("from").unwrap_or_default().to_string();
        let Some(chan) = self.device_chan(net, &serial) else {
            return;
        };
        let Some(session) = self.session_of(&serial).cloned() else {
            return;
        };
        let Some(callee) = Self::callee_uri(action) else {
            net.note(self.avs, Layer::Control, "utterance without a callee");
            return;
        };
        let call_type = if action.name == "drop_in" {
            CallType::Intercom
        } else {
            CallType::Regular
        };
        self.call_seq += 1;
        let call_id = format!("call-{}", self.call_seq);
        let token = match action.arg_str("reuse_token_of") {
            Some(prev) => match self.issued.iter().find(|t| t.call_id == prev) {
                Some(t) => t.token.clone(),
                None => {
                    net.note(
                        self.avs,
                        Layer::Control,
                        format!("no token issued for {prev}"),
                    );
                    return;
                }
            },
            None => match self.state.mint_call(
                &session.account,
                &callee,
                call_type,
                net.now_secs(),
                net.rng(),
            ) {
                Ok(t) => t.encode(),
                Err(e) => {
                    net.note(self.avs, Layer::Control, format!("token mint failed: {e}"));
                    return;
                }
            },
        };
        self.issued.push(IssuedToken {
            call_id: call_id.clone(),
            caller_serial: serial,
            callee: callee.clone(),
            token: token.clone(),
        });
        let relay = self.relay.allocate(net, &call_id);
        let warm = ControlMessage::new(
            names::SIP_CLIENT,
            names::WARM_UP,
            json!({"call_id": call_id}),
        );
        self.send_device(net, chan, STREAM_SIP_CLIENT, &warm);
        let ct = serde_json::to_value(call_type).expect("call type serializes");
        let begin = ControlMessage::new(
            names::SIP_CLIENT,
            names::BEGIN_CALL,
            json!({
                "call_id": call_id,
                "caller": account_uri(&session.account),
                "callee": callee,
                "call_type": ct,
                "token": token,
                "relay": relay.to_string(),
            }),
        );
        self.send_device(net, chan, STREAM_SIP_CLIENT, &begin);
    }
}

impl Node for Cloud {
    fn handle(&mut self, net: &mut Net, event: NodeEvent) {
        match event {
            NodeEvent::Accepted { chan, host, .. } if host == self.avs => {
                self.sessions.insert(chan, None);
            }
            NodeEvent::Accepted { .. } => {}
            NodeEvent::Message {
                chan, host, bytes, ..
            } => {
                if host == self.api {
                    self.on_http(net, chan, &bytes);
                } else if host == self.avs {
                    self.on_avs(net, chan, &bytes);
                } else if host == self.sip {
                    self.registrar.on_message(net, &self.state, chan, &bytes);
                } else if host == self.gw_host {
                    self.gateway.on_message(net, chan, &bytes);
                }
            }
            NodeEvent::Closed { chan, host } => {
                if host == self.avs {
                    if let Some(Some(s)) = self.sessions.remove(&chan) {
                        if self.device_chans.get(&s.serial) == Some(&chan) {
                            self.device_chans.remove(&s.serial);
                        }
                    }
                } else if host == self.sip {
                    self.registrar.on_closed(chan);
                }
            }
            NodeEvent::Datagram {
                host,
                local_port,
                from,
                bytes,
                annot,
            } => {
                if host == self.relay_host {
                    self.relay.on_datagram(net, local_port, from, bytes, annot);
                } else if host == self.gw_host {
                    self.gateway.on_datagram(local_port, &bytes);
                }
            }
            NodeEvent::Action(a) => self.on_action(net, &a),
            NodeEvent::Timer(_) | NodeEvent::Tap(_) => {}
        }
    }

    crate::node_any!();
}
