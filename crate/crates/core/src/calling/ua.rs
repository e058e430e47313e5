use std::collections::BTreeMap;
use std::net::SocketAddrV4;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{select_path, CallError, CommsConfig, MediaPath, Phase, RegState, Role};
use crate::crypto::{srtp_derive, CallType, CryptoError, SrtpContext};
use crate::netsim::{Annot, ChannelId, HostId, Layer, Net};
use crate::transport::send_sip;
use crate::wire::control::names;
use crate::wire::sip::addr_uri;
use crate::wire::{
    sdp_decode, sdp_encode, sip_parse, Candidate, CandidateKind, ControlMessage, CryptoAttr,
    Method, SdpBody, SipMessage,
};

pub const FRAME_INTERVAL_MS: u64 = 20;
pub const FRAME_LEN: usize = 160;
pub const DEFAULT_FRAMES_PER_CALL: u32 = 25;
const MEDIA_PORT_BASE: u16 = 30000;
const RECONNECT_MS: u64 = 1000;
const MAX_RECONNECTS: u32 = 6;

/// Payload of `SipClient.BeginCall`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeginCall {
    pub call_id: String,
    pub caller: String,
    pub callee: String,
    pub call_type: CallType,
    pub token: String,
    pub relay: SocketAddrV4,
    #[serde(default)]
    pub reflexive: Option<SocketAddrV4>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MediaStats {
    pub sent: u32,
    pub received: u32,
    pub auth_failures: u32,
    pub replays: u32,
    pub other_failures: u32,
    #[serde(skip)]
    pub sent_frames: Vec<Vec<u8>>,
    #[serde(skip)]
    pub received_frames: Vec<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct CallState {
    pub call_id: String,
    pub role: Role,
    pub phase: Phase,
    pub peer_uri: String,
    pub token: Option<String>,
    pub intercom: bool,
    pub local_sdp: Option<SdpBody>,
    pub remote_sdp: Option<SdpBody>,
    pub path: Option<MediaPath>,
    pub media_port: u16,
    pub target: Option<SocketAddrV4>,
    pub relay: Option<SocketAddrV4>,
    pub stats: MediaStats,
    pub was_established: bool,
    send: Option<SrtpContext>,
    recv: Option<SrtpContext>,
    invite: Option<SipMessage>,
    local_tag: String,
    remote_to: Option<String>,
}

impl CallState {
    pub fn send_context(&self) -> Option<&SrtpContext> {
        self.send.as_ref()
    }

    pub fn recv_context(&self) -> Option<&SrtpContext> {
        self.recv.as_ref()
    }

    fn active(&self) -> bool {
        self.phase != Phase::Terminated
    }
}

/// A device's SIP stack. Control messages meant for the cloud accumulate in
/// the outbox; the hosting device drains it after every call into the UA.
pub struct UserAgent {
    host: HostId,
    pub config: Option<CommsConfig>,
    pub reg: RegState,
    chan: Option<ChannelId>,
    calls: BTreeMap<String, CallState>,
    pub history: Vec<CallState>,
    outbox: Vec<ControlMessage>,
    cseq: u32,
    next_media_port: u16,
    pub frames_per_call: u32,
    pub registrations: u32,
    reconnects: u32,
}

fn rand_hex(rng: &mut impl RngCore, n: usize) -> String {
    let mut b = vec![0u8; n];
    rng.fill_bytes(&mut b);
    hex::encode(b)
}

/// Synthetic 160-byte audio frame carrying a greppable canary.
pub fn media_frame(call_id: &str, role: Role, n: u32) -> Vec<u8> {
    let dir = match role {
        Role::Caller => "up",
        Role::Callee => "down",
    };
    let mut f = format!("MEDIA-CANARY {call_id} {dir} {n:05} ").into_bytes();
    f.resize(FRAME_LEN, b'.');
    f
}

impl UserAgent {
    pub fn new(host: HostId) -> Self {
        UserAgent {
            host,
            config: None,
            reg: RegState::Unregistered,
            chan: None,
            calls: BTreeMap::new(),
            history: Vec::new(),
            outbox: Vec::new(),
            cseq: 0,
            next_media_port: MEDIA_PORT_BASE,
            frames_per_call: DEFAULT_FRAMES_PER_CALL,
            registrations: 0,
            reconnects: 0,
        }
    }

    pub fn channel(&self) -> Option<ChannelId> {
        self.chan
    }

    pub fn call(&self, call_id: &str) -> Option<&CallState> {
        self.calls.get(call_id)
    }

    pub fn calls(&self) -> impl Iterator<Item = &CallState> {
        self.calls.values()
    }

    /// Active call, if any (a device holds at most one).
    pub fn current_call(&self) -> Option<&CallState> {
        self.calls.values().find(|c| c.active())
    }

    /// A call by id, active or finished.
    pub fn find_call(&self, call_id: &str) -> Option<&CallState> {
        self.calls
            .get(call_id)
            .or_else(|| self.history.iter().rev().find(|c| c.call_id == call_id))
    }

    pub fn drain_outbox(&mut self) -> Vec<ControlMessage> {
        std::mem::take(&mut self.outbox)
    }

    fn emit(&mut self, name: &str, payload: Value) {
        self.outbox
            .push(ControlMessage::new(names::SIP_CLIENT, name, payload));
    }

    fn note(&self, net: &mut Net, summary: String) {
        net.note(self.host, Layer::Sip, summary);
    }

    fn local_addr(&self, net: &Net) -> std::net::Ipv4Addr {
        net.internet_addr(self.host)
            .or_else(|| net.host(self.host).interfaces.first().map(|(_, a)| *a))
            .unwrap_or(std::net::Ipv4Addr::UNSPECIFIED)
    }

    fn via(&self, net: &mut Net) -> String {
        let addr = self.local_addr(net);
        let branch = rand_hex(net.rng(), 6);
        format!("SIP/2.0/TLS {addr}:5061;branch=z9hG4bK{branch}")
    }

    fn next_cseq(&mut self) -> u32 {
        self.cseq += 1;
        self.cseq
    }

    // ---- registration

    pub fn apply_comms_config(&mut self, net: &mut Net, config: CommsConfig) {
        let same = self.config.as_ref() == Some(&config);
        self.config = Some(config);
        if same && self.reg == RegState::Registered && self.chan.is_some_and(|c| net.is_open(c)) {
            return;
        }
        self.register(net);
    }

    /// Opens the persistent registrar channel if needed and sends REGISTER.
    pub fn register(&mut self, net: &mut Net) {
        let Some(cfg) = self.config.clone() else {
            return;
        };
        if !self.chan.is_some_and(|c| net.is_open(c)) {
            let Some(ip) = net.resolve(self.host, &cfg.registrar_host) else {
                self.note(
                    net,
                    format!("registrar {} unresolvable", cfg.registrar_host),
                );
                self.schedule_reconnect(net);
                return;
            };
            match net.connect(
                self.host,
                SocketAddrV4::new(ip, cfg.registrar_port),
                true,
                Some(&cfg.registrar_host),
            ) {
                Ok(c) => self.chan = Some(c),
                Err(e) => {
                    self.note(net, format!("registrar connect failed: {e}"));
                    self.schedule_reconnect(net);
                    return;
                }
            }
        }
        let addr = self.local_addr(net);
        let cseq = self.next_cseq();
        let tag = rand_hex(net.rng(), 4);
        let via = self.via(net);
        let msg = SipMessage::request(Method::Register, format!("sip:{}", cfg.registrar_domain))
            .with_header("Via", via)
            .with_header("From", format!("<{}>;tag={tag}", cfg.device_uri))
            .with_header("To", format!("<{}>", cfg.device_uri))
            .with_header("Call-ID", format!("reg-{}", cfg.sip_username))
            .with_header("CSeq", format!("{cseq} REGISTER"))
            .with_header(
                "Contact",
                format!("<sip:{}@{addr}:5061;transport=tls>", cfg.sip_username),
            )
            .with_header("Authorization", format!("Bearer {}", cfg.credential))
            .with_header("Expires", "3600")
            .with_header("Content-Length", "0");
        self.reg = RegState::Registering;
        self.send(net, &msg);
    }

    fn schedule_reconnect(&mut self, net: &mut Net) {
        if self.reconnects >= MAX_RECONNECTS {
            self.note(net, "registrar unreachable, giving up".into());
            return;
        }
        self.reconnects += 1;
        net.set_timer(RECONNECT_MS << (self.reconnects - 1), "ua:reconnect".into());
    }

    fn send(&mut self, net: &mut Net, msg: &SipMessage) {
        let Some(chan) = self.chan else { return };
        if let Err(e) = send_sip(net, chan, self.host, msg) {
            self.note(net, format!("sip send failed: {e}"));
        }
    }

    // ---- events from the hosting device

    pub fn on_closed(&mut self, net: &mut Net, chan: ChannelId) {
        if self.chan != Some(chan) {
            return;
        }
        self.chan = None;
        self.reg = RegState::Unregistered;
        self.note(net, "registrar channel lost".into());
        self.schedule_reconnect(net);
    }

    pub fn owns_channel(&self, chan: ChannelId) -> bool {
        self.chan == Some(chan)
    }

    pub fn on_timer(&mut self, net: &mut Net, tag: &str) {
        if tag == "ua:reconnect" {
            if self.reg != RegState::Registered && self.config.is_some() {
                self.register(net);
            }
        } else if let Some(call_id) = tag.strip_prefix("ua:media:") {
            self.media_tick(net, call_id);
        }
    }

    pub fn on_message(&mut self, net: &mut Net, bytes: &[u8]) {
        let msg = match sip_parse(bytes) {
            Ok(m) => m,
            Err(e) => {
                self.note(net, format!("unparseable SIP: {e}"));
                return;
            }
        };
        match (msg.method(), msg.status()) {
            (Some(Method::Invite), _) => self.handle_invite(net, msg),
            (Some(Method::Ack), _) => self.on_ack(net, &msg),
            (Some(Method::Bye), _) => self.on_bye(net, &msg),
            (Some(Method::Cancel), _) => self.on_cancel(net, &msg),
            (Some(Method::Register), _) => {}
            (None, Some(status)) => match msg.cseq().map(|(_, m)| m) {
                Some(Method::Register) => self.on_register_response(net, status),
                Some(Method::Invite) => self.on_invite_response(net, msg, status),
                _ => {}
            },
            _ => {}
        }
    }

    fn on_register_response(&mut self, net: &mut Net, status: u16) {
        if status == 200 {
            self.reg = RegState::Registered;
            self.registrations += 1;
            self.reconnects = 0;
            self.emit(names::REGISTRATION_STATE, json!({"registered": true}));
        } else {
            self.reg = RegState::Rejected;
            self.note(net, format!("registration rejected with {status}"));
            self.emit(
                names::REGISTRATION_STATE,
                json!({"registered": false, "status": status}),
            );
        }
    }

    // ---- outgoing calls

    pub fn warm_up(&mut self, payload: &Value) {
        if let Some(id) = payload.get("call_id").and_then(Value::as_str) {
            if self.current_call().is_none() {
                let mut c = self.blank_call(id, Role::Caller, "");
                c.phase = Phase::Warming;
                self.calls.insert(id.to_string(), c);
            }
        }
    }

    fn blank_call(&self, call_id: &str, role: Role, peer: &str) -> CallState {
        CallState {
            call_id: call_id.to_string(),
            role,
            phase: Phase::Inviting,
            peer_uri: peer.to_string(),
            token: None,
            intercom: false,
            local_sdp: None,
            remote_sdp: None,
            path: None,
            media_port: 0,
            target: None,
            relay: None,
            stats: MediaStats::default(),
            was_established: false,
            send: None,
            recv: None,
            invite: None,
            local_tag: String::new(),
            remote_to: None,
        }
    }

    fn busy_with_other(&self, call_id: &str) -> bool {
        self.calls
            .values()
            .any(|c| c.active() && !(c.call_id == call_id && c.phase == Phase::Warming))
    }

    fn alloc_media(&mut self, net: &mut Net) -> Result<u16, CallError> {
        loop {
            let p = self.next_media_port;
            self.next_media_port = self.next_media_port.wrapping_add(2).max(MEDIA_PORT_BASE);
            if net.bind(self.host, p).is_ok() {
                return Ok(p);
            }
        }
    }

    fn local_offer(&mut self, net: &mut Net, port: u16, relay: Option<SocketAddrV4>) -> SdpBody {
        let rng = net.rng();
        let mut key = [0u8; 32];
        let mut salt = [0u8; 14];
        rng.fill_bytes(&mut key);
        rng.fill_bytes(&mut salt);
        let ssrc: u32 = rng.gen();
        let session_id: u64 = rng.gen_range(1..u64::from(u32::MAX));
        let addr = self.local_addr(net);
        let mut candidates = vec![Candidate {
            kind: CandidateKind::Host,
            address: addr,
            port,
        }];
        if let Some(r) = relay {
            candidates.push(Candidate {
                kind: CandidateKind::Relay,
                address: *r.ip(),
                port: r.port(),
            });
        }
        SdpBody {
            session_id,
            address: addr,
            media_port: port,
            ssrc,
            candidates,
            crypto: CryptoAttr::new(&key, &salt),
        }
    }

    /// Handles `SipClient.BeginCall`: offers a fresh key and sends INVITE.
    pub fn begin_call(&mut self, net: &mut Net, payload: &Value) -> Result<String, CallError> {
        let req: BeginCall = serde_json::from_value(payload.clone())
            .map_err(|e| CallError::BadPayload(e.to_string()))?;
        let result = self.begin_call_inner(net, &req);
        if let Err(e) = &result {
            self.note(
                net,
                format!("BeginCall {} rejected locally: {e}", req.call_id),
            );
            self.emit(
                names::CALL_FAILED,
                json!({"call_id": req.call_id, "reason": e.to_string()}),
            );
        }
        result
    }

    fn begin_call_inner(&mut self, net: &mut Net, req: &BeginCall) -> Result<String, CallError> {
        if self.reg != RegState::Registered {
            return Err(CallError::NotRegistered);
        }
        if self.busy_with_other(&req.call_id) {
            return Err(CallError::Busy);
        }
        let cfg = self.config.clone().ok_or(CallError::NotRegistered)?;
        let port = self.alloc_media(net)?;
        let offer = self.local_offer(net, port, Some(req.relay));
        let sdp = sdp_encode(&offer).expect("locally built SDP is valid");
        let tag = rand_hex(net.rng(), 4);
        let cseq = self.next_cseq();
        let via = self.via(net);
        let invite = SipMessage::request(Method::Invite, req.callee.clone())
            .with_header("Via", via)
            .with_header("From", format!("<{}>;tag={tag}", req.caller))
            .with_header("To", format!("<{}>", req.callee))
            .with_header("Call-ID", req.call_id.clone())
            .with_header("CSeq", format!("{cseq} INVITE"))
            .with_header("Contact", format!("<{}>", cfg.device_uri))
            .with_header(crate::wire::sip::X_AUTHTOKEN, req.token.clone())
            .with_sdp(sdp);
        let mut call = self.blank_call(&req.call_id, Role::Caller, &req.callee);
        call.token = Some(req.token.clone());
        call.intercom = req.call_type == CallType::Intercom;
        call.media_port = port;
        call.relay = Some(req.relay);
        call.local_sdp = Some(offer);
        call.local_tag = tag;
        call.invite = Some(invite.clone());
        self.calls.insert(req.call_id.clone(), call);
        self.send(net, &invite);
        self.emit(
            names::OUTBOUND_CALL_REQUESTED,
            json!({"call_id": req.call_id, "callee": req.callee}),
        );
        Ok(req.call_id.clone())
    }

    fn on_invite_response(&mut self, net: &mut Net, resp: SipMessage, status: u16) {
        let call_id = resp.call_id().to_string();
        let Some(call) = self.calls.get_mut(&call_id) else {
            return;
        };
        if call.role != Role::Caller || call.phase == Phase::Established {
            return;
        }
        match status {
            100 => {}
            180 => call.phase = Phase::Ringing,
            200 => {
                let remote = match sdp_decode(&resp.body) {
                    Ok(s) => s,
                    Err(e) => {
                        self.note(net, format!("bad answer SDP: {e}"));
                        return;
                    }
                };
                call.remote_to = resp.header("To").map(str::to_string);
                let gateway = resp
                    .header("X-route")
                    .is_some_and(|v| v.eq_ignore_ascii_case("gateway"));
                let invite = call.invite.clone().expect("caller keeps its INVITE");
                let via = self.via(net);
                let ack = SipMessage::request(Method::Ack, call_uri(&invite))
                    .with_header("Via", via)
                    .with_header("From", invite.header("From").unwrap_or_default())
                    .with_header("To", resp.header("To").unwrap_or_default())
                    .with_header("Call-ID", call_id.clone())
                    .with_header(
                        "CSeq",
                        format!("{} ACK", invite.cseq().map(|c| c.0).unwrap_or(1)),
                    )
                    .with_header("Content-Length", "0");
                self.send(net, &ack);
                if let Err(e) = self.establish(net, &call_id, remote, gateway) {
                    self.note(net, format!("call {call_id} setup failed: {e}"));
                    self.terminate(net, &call_id, names::CALL_FAILED, &e.to_string());
                    return;
                }
                self.emit(names::OUTBOUND_CALL_ACCEPTED, json!({"call_id": call_id}));
                self.start_media(net, &call_id);
            }
            s if s >= 300 => {
                self.note(net, format!("call {call_id} failed with {s}"));
                self.terminate(net, &call_id, names::CALL_FAILED, &format!("{s}"));
            }
            _ => {}
        }
    }

    /// Derives both SRTP contexts and picks the media path.
    fn establish(
        &mut self,
        net: &mut Net,
        call_id: &str,
        remote: SdpBody,
        gateway: bool,
    ) -> Result<(), CallError> {
        let host = self.host;
        let call = self.calls.get_mut(call_id).expect("call exists");
        let local = call
            .local_sdp
            .clone()
            .expect("local SDP set before establish");
        let (path, target) = select_path(net, host, &remote, call.relay, gateway)?;
        let (lk, ls) = local
            .crypto
            .split()
            .map_err(|_| CryptoError::Malformed("local crypto".into()))?;
        let (rk, rs) = remote
            .crypto
            .split()
            .map_err(|_| CryptoError::Malformed("remote crypto".into()))?;
        call.send = Some(srtp_derive(&lk, &ls, local.ssrc)?);
        call.recv = Some(srtp_derive(&rk, &rs, remote.ssrc)?);
        call.remote_sdp = Some(remote);
        call.path = Some(path);
        call.target = Some(target);
        call.phase = Phase::Established;
        call.was_established = true;
        net.note(
            host,
            Layer::Sys,
            format!(
                "call {call_id} established path={} target={target}",
                path.as_str()
            ),
        );
        Ok(())
    }

    // ---- incoming calls

    fn handle_invite(&mut self, net: &mut Net, invite: SipMessage) {
        let call_id = invite.call_id().to_string();
        if self
            .calls
            .get(&call_id)
            .is_some_and(|c| c.role == Role::Callee)
        {
            return;
        }
        if self.current_call().is_some() {
            let busy = SipMessage::response_to(&invite, 486).with_header("Content-Length", "0");
            self.send(net, &busy);
            return;
        }
        let offer = match sdp_decode(&invite.body) {
            Ok(o) => o,
            Err(e) => {
                self.note(net, format!("bad offer SDP: {e}"));
                let r = SipMessage::response_to(&invite, 403).with_header("Content-Length", "0");
                self.send(net, &r);
                return;
            }
        };
        let caller = invite
            .header("From")
            .map(addr_uri)
            .unwrap_or_default()
            .to_string();
        let intercom = invite.header("X-intercom").is_some_and(|v| v == "true");
        let mut call = self.blank_call(&call_id, Role::Callee, &caller);
        call.intercom = intercom;
        call.relay = offer
            .candidate(CandidateKind::Relay)
            .map(|c| SocketAddrV4::new(c.address, c.port));
        call.remote_sdp = Some(offer);
        call.local_tag = rand_hex(net.rng(), 4);
        call.token = invite.auth_token().map(str::to_string);
        call.invite = Some(invite.clone());
        call.phase = Phase::Ringing;
        self.calls.insert(call_id.clone(), call);
        self.emit(
            names::INBOUND_CALL_RECEIVED,
            json!({"call_id": call_id, "caller": caller, "intercom": intercom}),
        );
        if intercom {
            if let Err(e) = self.answer(net, &call_id) {
                self.note(net, format!("auto-answer failed: {e}"));
            }
        } else {
            let ringing = SipMessage::response_to(&invite, 180)
                .with_header("Contact", self.contact())
                .with_header("Content-Length", "0");
            self.send(net, &ringing);
        }
    }

    fn contact(&self) -> String {
        self.config
            .as_ref()
            .map(|c| format!("<{}>", c.device_uri))
            .unwrap_or_default()
    }

    /// Handles `SipClient.AcceptCall` for the ringing call.
    pub fn accept_call(&mut self, net: &mut Net, call_id: Option<&str>) -> Result<(), CallError> {
        let id = match call_id {
            Some(id) => id.to_string(),
            None => self
                .calls
                .values()
                .find(|c| c.role == Role::Callee && c.phase == Phase::Ringing)
                .map(|c| c.call_id.clone())
                .ok_or_else(|| CallError::UnknownCall("<ringing>".into()))?,
        };
        self.answer(net, &id)
    }

    fn answer(&mut self, net: &mut Net, call_id: &str) -> Result<(), CallError> {
        let call = self
            .calls
            .get(call_id)
            .ok_or_else(|| CallError::UnknownCall(call_id.to_string()))?;
        if call.role != Role::Callee || call.phase != Phase::Ringing || call.local_sdp.is_some() {
            return Err(CallError::UnknownCall(call_id.to_string()));
        }
        let relay = call.relay;
        let invite = call.invite.clone().expect("callee keeps the INVITE");
        let remote = call.remote_sdp.clone().expect("offer stored");
        let port = self.alloc_media(net)?;
        let answer = self.local_offer(net, port, relay);
        let sdp = sdp_encode(&answer).expect("locally built SDP is valid");
        let call = self.calls.get_mut(call_id).unwrap();
        call.media_port = port;
        call.local_sdp = Some(answer);
        let to = format!(
            "{};tag={}",
            invite.header("To").unwrap_or_default(),
            call.local_tag
        );
        let mut ok = SipMessage::response_to(&invite, 200);
        ok.headers.set("To", to);
        let ok = ok.with_header("Contact", self.contact()).with_sdp(sdp);
        self.send(net, &ok);
        self.establish(net, call_id, remote, false)?;
        // Media starts once the caller's ACK arrives.
        let call = self.calls.get_mut(call_id).unwrap();
        call.phase = Phase::Ringing;
        Ok(())
    }

    fn on_ack(&mut self, net: &mut Net, ack: &SipMessage) {
        let call_id = ack.call_id().to_string();
        let Some(call) = self.calls.get_mut(&call_id) else {
            return;
        };
        if call.role == Role::Callee && call.phase == Phase::Ringing && call.send.is_some() {
            call.phase = Phase::Established;
            self.start_media(net, &call_id);
        }
    }

    fn on_cancel(&mut self, net: &mut Net, cancel: &SipMessage) {
        let call_id = cancel.call_id().to_string();
        let ok = SipMessage::response_to(cancel, 200).with_header("Content-Length", "0");
        self.send(net, &ok);
        let Some(call) = self.calls.get(&call_id) else {
            return;
        };
        if call.role != Role::Callee || call.phase == Phase::Established {
            return;
        }
        let invite = call.invite.clone().expect("callee keeps the INVITE");
        let terminated = SipMessage::response_to(&invite, 487).with_header("Content-Length", "0");
        self.send(net, &terminated);
        self.terminate(net, &call_id, names::CALL_DISCONNECTED, "cancelled");
    }

    // ---- teardown

    /// Handles `SipClient.EndCall`.
    pub fn end_call(&mut self, net: &mut Net, call_id: Option<&str>) -> Result<(), CallError> {
        let id = match call_id {
            Some(id) => id.to_string(),
            None => self
                .current_call()
                .map(|c| c.call_id.clone())
                .ok_or_else(|| CallError::UnknownCall("<none>".into()))?,
        };
        let call = self
            .calls
            .get(&id)
            .filter(|c| c.active())
            .cloned()
            .ok_or_else(|| CallError::UnknownCall(id.clone()))?;
        let invite = call.invite.clone();
        let via = self.via(net);
        match (call.role, call.phase, invite) {
            (_, Phase::Warming, _) | (_, _, None) => {}
            (Role::Caller, Phase::Established, Some(inv)) => {
                let cseq = self.next_cseq();
                let bye = SipMessage::request(Method::Bye, call_uri(&inv))
                    .with_header("Via", via)
                    .with_header("From", inv.header("From").unwrap_or_default())
                    .with_header("To", call.remote_to.clone().unwrap_or_default())
                    .with_header("Call-ID", id.clone())
                    .with_header("CSeq", format!("{cseq} BYE"))
                    .with_header("Content-Length", "0");
                self.send(net, &bye);
            }
            (Role::Caller, _, Some(inv)) => {
                let cancel = SipMessage::request(Method::Cancel, call_uri(&inv))
                    .with_header("Via", via)
                    .with_header("From", inv.header("From").unwrap_or_default())
                    .with_header("To", inv.header("To").unwrap_or_default())
                    .with_header("Call-ID", id.clone())
                    .with_header(
                        "CSeq",
                        format!("{} CANCEL", inv.cseq().map(|c| c.0).unwrap_or(1)),
                    )
                    .with_header("Content-Length", "0");
                self.send(net, &cancel);
            }
            (Role::Callee, Phase::Established, Some(inv)) => {
                let cseq = self.next_cseq();
                let to_self = format!(
                    "{};tag={}",
                    inv.header("To").unwrap_or_default(),
                    call.local_tag
                );
                let bye = SipMessage::request(Method::Bye, call.peer_uri.clone())
                    .with_header("Via", via)
                    .with_header("From", to_self)
                    .with_header("To", inv.header("From").unwrap_or_default())
                    .with_header("Call-ID", id.clone())
                    .with_header("CSeq", format!("{cseq} BYE"))
                    .with_header("Content-Length", "0");
                self.send(net, &bye);
            }
            (Role::Callee, _, Some(inv)) => {
                let decline = SipMessage::response_to(&inv, 486).with_header("Content-Length", "0");
                self.send(net, &decline);
            }
        }
        self.terminate(net, &id, names::CALL_DISCONNECTED, "local hangup");
        Ok(())
    }

    fn on_bye(&mut self, net: &mut Net, bye: &SipMessage) {
        let ok = SipMessage::response_to(bye, 200).with_header("Content-Length", "0");
        self.send(net, &ok);
        let call_id = bye.call_id().to_string();
        if self.calls.get(&call_id).is_some_and(|c| c.active()) {
            self.terminate(net, &call_id, names::CALL_DISCONNECTED, "remote hangup");
        }
    }

    fn terminate(&mut self, net: &mut Net, call_id: &str, event: &str, reason: &str) {
        let Some(mut call) = self.calls.remove(call_id) else {
            return;
        };
        call.phase = Phase::Terminated;
        call.send = None;
        call.recv = None;
        if call.media_port != 0 {
            net.unbind(self.host, call.media_port);
        }
        net.note(
            self.host,
            Layer::Sys,
            format!("call {call_id} terminated: {reason}"),
        );
        self.emit(event, json!({"call_id": call_id, "reason": reason}));
        self.history.push(call);
    }

    // ---- media

    fn start_media(&mut self, net: &mut Net, call_id: &str) {
        if self.frames_per_call > 0 {
            net.set_timer(FRAME_INTERVAL_MS, format!("ua:media:{call_id}"));
        }
    }

    fn media_tick(&mut self, net: &mut Net, call_id: &str) {
        let Some(call) = self.calls.get(call_id) else {
            return;
        };
        if call.phase != Phase::Established || call.stats.sent >= self.frames_per_call {
            return;
        }
        let frame = media_frame(call_id, call.role, call.stats.sent);
        if let Err(e) = self.send_media(net, call_id, &frame) {
            self.note(net, format!("media send failed: {e}"));
            return;
        }
        if self.calls[call_id].stats.sent < self.frames_per_call {
            net.set_timer(FRAME_INTERVAL_MS, format!("ua:media:{call_id}"));
        }
    }

    /// Protects one frame and sends it along the selected path.
    pub fn send_media(
        &mut self,
        net: &mut Net,
        call_id: &str,
        frame: &[u8],
    ) -> Result<(), CallError> {
        let host = self.host;
        let call = self
            .calls
            .get_mut(call_id)
            .ok_or_else(|| CallError::UnknownCall(call_id.to_string()))?;
        if call.phase != Phase::Established {
            return Err(CallError::NotEstablished);
        }
        let ctx = call.send.as_mut().ok_or(CallError::NotEstablished)?;
        let seq = ctx.send_index();
        let packet = ctx.protect(frame)?;
        let target = call.target.ok_or(CallError::NoCandidate)?;
        let annot = Annot::new(Layer::Media, format!("srtp {call_id} seq={seq}"));
        net.send_datagram(host, call.media_port, target, packet, annot)?;
        call.stats.sent += 1;
        call.stats.sent_frames.push(frame.to_vec());
        Ok(())
    }

    /// Media arriving on one of this UA's ports. Returns false if the port is
    /// not a media port of any call.
    pub fn on_datagram(&mut self, net: &mut Net, local_port: u16, bytes: &[u8]) -> bool {
        let Some(call) = self.calls.values_mut().find(|c| c.media_port == local_port) else {
            return false;
        };
        let Some(ctx) = call.recv.as_mut() else {
            return true;
        };
        match ctx.unprotect(bytes) {
            Ok(frame) => {
                call.stats.received += 1;
                call.stats.received_frames.push(frame);
            }
            Err(CryptoError::Replay) => {
                call.stats.replays += 1;
                net.note(
                    self.host,
                    Layer::Media,
                    format!("replay dropped on {}", call.call_id),
                );
            }
            Err(CryptoError::Auth) => call.stats.auth_failures += 1,
            Err(_) => call.stats.other_failures += 1,
        }
        true
    }
}

fn call_uri(invite: &SipMessage) -> String {
    invite.request_uri().unwrap_or_default().to_string()
}
