use std::collections::BTreeMap;
use std::net::SocketAddrV4;

use crate::crypto::{verify_call_token, CallAuthToken, CallType, NonceCache};
use crate::netsim::{ChannelId, HostId, Layer, Net};
use crate::transport::send_sip;
use crate::wire::sip::addr_uri;
use crate::wire::{sdp_decode, sip_parse, Method, SipMessage};

use super::state::{CloudState, PSTN_DOMAIN};

pub const BINDING_EXPIRY_MS: u64 = 3_600_000;
pub const GATEWAY_SIP_PORT: u16 = 5060;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub aor: String,
    pub device_uri: String,
    pub chan: ChannelId,
    pub contact: String,
    pub expires_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegState {
    Trying,
    Ringing,
    Answered,
    Cancelled,
    Failed,
}

#[derive(Debug, Clone)]
pub struct Leg {
    pub chan: ChannelId,
    pub target: String,
    pub state: LegState,
}

#[derive(Debug, Clone)]
pub struct RoutedCall {
    pub call_id: String,
    pub caller_chan: ChannelId,
    pub invite: SipMessage,
    pub legs: Vec<Leg>,
    pub winner: Option<usize>,
    pub gateway: bool,
    pub intercom: bool,
    ringing_sent: bool,
}

/// SDES material the registrar saw in transit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedKey {
    pub call_id: String,
    pub direction: &'static str,
    pub key: [u8; 32],
    pub salt: [u8; 14],
    pub ssrc: u32,
}

pub struct Registrar {
    pub host: HostId,
    pub gateway: Option<SocketAddrV4>,
    pub bindings: BTreeMap<String, Binding>,
    pub calls: BTreeMap<String, RoutedCall>,
    pub nonces: NonceCache,
    pub observed_keys: Vec<ObservedKey>,
    pub rejections: Vec<(String, u16)>,
}

fn reply(net: &mut Net, host: HostId, chan: ChannelId, req: &SipMessage, status: u16) {
    let r = SipMessage::response_to(req, status).with_header("Content-Length", "0");
    let _ = send_sip(net, chan, host, &r);
}

impl Registrar {
    pub fn new(host: HostId) -> Self {
        Registrar {
            host,
            gateway: None,
            bindings: BTreeMap::new(),
            calls: BTreeMap::new(),
            nonces: NonceCache::new(),
            observed_keys: Vec::new(),
            rejections: Vec::new(),
        }
    }

    /// Bindings for `aor` whose channel is still open and not expired.
    pub fn live_bindings(&self, net: &Net, aor: &str) -> Vec<&Binding> {
        self.bindings
            .values()
            .filter(|b| b.aor == aor && net.is_open(b.chan) && b.expires_ms > net.now())
            .collect()
    }

    pub fn observed_keys_for(&self, call_id: &str) -> Vec<&ObservedKey> {
        self.observed_keys
            .iter()
            .filter(|k| k.call_id == call_id)
            .collect()
    }

    pub fn on_closed(&mut self, chan: ChannelId) {
        self.bindings.retain(|_, b| b.chan != chan);
    }

    pub fn on_message(&mut self, net: &mut Net, state: &CloudState, chan: ChannelId, bytes: &[u8]) {
        let msg = match sip_parse(bytes) {
            Ok(m) => m,
            Err(e) => {
                net.note(
                    self.host,
                    Layer::Sip,
                    format!("registrar: unparseable SIP: {e}"),
                );
                return;
            }
        };
        match msg.method() {
            Some(Method::Register) => self.register(net, state, chan, &msg),
            Some(Method::Invite) => self.route(net, state, chan, msg),
            Some(_) => self.in_dialog_request(net, chan, msg),
            None => self.response(net, chan, msg),
        }
    }

    fn register(&mut self, net: &mut Net, state: &CloudState, chan: ChannelId, msg: &SipMessage) {
        let device = addr_uri(msg.header("To").unwrap_or_default()).to_string();
        let cred = msg
            .header("Authorization")
            .and_then(|v| v.strip_prefix("Bearer "))
            .unwrap_or_default();
        let Some(aor) = state.check_sip_credential(&device, cred) else {
            net.note(
                self.host,
                Layer::Sip,
                format!("registrar: bad credential for {device}"),
            );
            reply(net, self.host, chan, msg, 403);
            return;
        };
        let contact = msg.header("Contact").unwrap_or_default().to_string();
        self.bindings.insert(
            device.clone(),
            Binding {
                aor,
                device_uri: device,
                chan,
                contact: contact.clone(),
                expires_ms: net.now() + BINDING_EXPIRY_MS,
            },
        );
        let ok = SipMessage::response_to(msg, 200)
            .with_header("Contact", contact)
            .with_header("Content-Length", "0");
        let _ = send_sip(net, chan, self.host, &ok);
    }

    fn observe(&mut self, net: &mut Net, call_id: &str, direction: &'static str, body: &[u8]) {
        let Ok(sdp) = sdp_decode(body) else { return };
        let Ok((key, salt)) = sdp.crypto.split() else {
            return;
        };
        net.note(
            self.host,
            Layer::Sdp,
            format!(
                "registrar: sdes {direction} {call_id} ssrc={:08x} key={}",
                sdp.ssrc,
                hex::encode(&sdp.crypto.key_salt)
            ),
        );
        self.observed_keys.push(ObservedKey {
            call_id: call_id.to_string(),
            direction,
            key,
            salt,
            ssrc: sdp.ssrc,
        });
    }

    fn reject(
        &mut self,
        net: &mut Net,
        chan: ChannelId,
        invite: &SipMessage,
        status: u16,
        why: &str,
    ) {
        let call_id = invite.call_id().to_string();
        net.note(
            self.host,
            Layer::Sip,
            format!("registrar: reject {call_id} {status}: {why}"),
        );
        self.rejections.push((call_id, status));
        reply(net, self.host, chan, invite, status);
    }

    fn route(&mut self, net: &mut Net, state: &CloudState, chan: ChannelId, invite: SipMessage) {
        let call_id = invite.call_id().to_string();
        if self.calls.contains_key(&call_id) {
            return;
        }
        let tokens: Vec<&str> = invite
            .headers
            .get_all(crate::wire::sip::X_AUTHTOKEN)
            .collect();
        let token = match tokens.as_slice() {
            [t] => match CallAuthToken::decode(t) {
                Ok(t) => t,
                Err(_) => return self.reject(net, chan, &invite, 403, "malformed token"),
            },
            _ => return self.reject(net, chan, &invite, 403, "expected exactly one token"),
        };
        let from = addr_uri(invite.header("From").unwrap_or_default()).to_string();
        let to = addr_uri(invite.header("To").unwrap_or_default()).to_string();
        let Some(caller) = state.account_by_uri(&from) else {
            return self.reject(net, chan, &invite, 403, "unknown caller");
        };
        if !verify_call_token(
            caller.signing.public(),
            &token,
            &from,
            &to,
            net.now_secs(),
            &mut self.nonces,
        ) {
            return self.reject(net, chan, &invite, 403, "token rejected");
        }

        let mut intercom = false;
        let mut gateway = false;
        let targets: Vec<(ChannelId, String)> = if state.account_by_uri(&to).is_some() {
            self.live_bindings(net, &to)
                .into_iter()
                .map(|b| (b.chan, b.device_uri.clone()))
                .collect()
        } else if let Some(b) = self.bindings.get(&to).filter(|b| net.is_open(b.chan)) {
            let callee = state
                .account_by_uri(&b.aor)
                .map(|a| a.id.as_str())
                .unwrap_or_default();
            if token.call_type != CallType::Intercom || !state.may_drop_in(&caller.id, callee) {
                return self.reject(net, chan, &invite, 403, "no drop-in permission");
            }
            intercom = true;
            vec![(b.chan, b.device_uri.clone())]
        } else if let Some(number) = to
            .strip_prefix("sip:")
            .and_then(|r| r.strip_suffix(&format!("@{PSTN_DOMAIN}")))
            .filter(|n| state.phone_contacts.contains(*n))
        {
            let Some(gw) = self.gateway else {
                return self.reject(net, chan, &invite, 404, "no gateway");
            };
            match net.connect(
                self.host,
                SocketAddrV4::new(*gw.ip(), GATEWAY_SIP_PORT),
                true,
                None,
            ) {
                Ok(c) => {
                    gateway = true;
                    vec![(c, format!("gateway:{number}"))]
                }
                Err(_) => return self.reject(net, chan, &invite, 404, "gateway unreachable"),
            }
        } else {
            Vec::new()
        };
        if targets.is_empty() {
            return self.reject(net, chan, &invite, 404, "no route");
        }

        reply(net, self.host, chan, &invite, 100);
        self.observe(net, &call_id, "offer", &invite.body);
        let mut legs = Vec::new();
        for (leg_chan, target) in targets {
            let mut fwd = invite.clone();
            if intercom {
                fwd.headers.push("X-intercom", "true");
            }
            let _ = send_sip(net, leg_chan, self.host, &fwd);
            legs.push(Leg {
                chan: leg_chan,
                target,
                state: LegState::Trying,
            });
        }
        net.note(
            self.host,
            Layer::Sip,
            format!("registrar: {call_id} forked to {} leg(s)", legs.len()),
        );
        self.calls.insert(
            call_id.clone(),
            RoutedCall {
                call_id,
                caller_chan: chan,
                invite,
                legs,
                winner: None,
                gateway,
                intercom,
                ringing_sent: false,
            },
        );
    }

    fn cancel_leg(net: &mut Net, host: HostId, invite: &SipMessage, leg: &mut Leg) {
        let cseq = invite.cseq().map(|c| c.0).unwrap_or(1);
        let cancel = SipMessage::request(Method::Cancel, invite.request_uri().unwrap_or_default())
            .with_header("Via", invite.header("Via").unwrap_or_default())
            .with_header("From", invite.header("From").unwrap_or_default())
            .with_header("To", invite.header("To").unwrap_or_default())
            .with_header("Call-ID", invite.call_id())
            .with_header("CSeq", format!("{cseq} CANCEL"))
            .with_header("Content-Length", "0");
        let _ = send_sip(net, leg.chan, host, &cancel);
        leg.state = LegState::Cancelled;
    }

    fn response(&mut self, net: &mut Net, chan: ChannelId, resp: SipMessage) {
        let host = self.host;
        let call_id = resp.call_id().to_string();
        let status = resp.status().unwrap_or(0);
        let method = resp.cseq().map(|c| c.1);
        let Some(call) = self.calls.get_mut(&call_id) else {
            return;
        };
        let from_caller = chan == call.caller_chan;
        let leg_idx = call.legs.iter().position(|l| l.chan == chan);

        match method {
            Some(Method::Bye) => {
                let to = if from_caller {
                    call.winner.map(|w| call.legs[w].chan)
                } else {
                    Some(call.caller_chan)
                };
                if let Some(to) = to {
                    let _ = send_sip(net, to, host, &resp);
                }
                return;
            }
            Some(Method::Invite) => {}
            _ => return,
        }
        let Some(i) = leg_idx else { return };
        match status {
            100 => {}
            180..=199 => {
                if call.legs[i].state == LegState::Trying {
                    call.legs[i].state = LegState::Ringing;
                }
                if !call.ringing_sent {
                    call.ringing_sent = true;
                    let _ = send_sip(net, call.caller_chan, host, &resp);
                }
            }
            200..=299 => {
                if call.winner.is_some() || call.legs[i].state == LegState::Cancelled {
                    return;
                }
                call.winner = Some(i);
                call.legs[i].state = LegState::Answered;
                let mut fwd = resp.clone();
                if call.gateway {
                    fwd.headers.push("X-route", "gateway");
                }
                let _ = send_sip(net, call.caller_chan, host, &fwd);
                let target = call.legs[i].target.clone();
                net.note(
                    host,
                    Layer::Sip,
                    format!("registrar: {call_id} answered by {target}"),
                );
                let invite = call.invite.clone();
                for (j, leg) in call.legs.iter_mut().enumerate() {
                    if j != i && matches!(leg.state, LegState::Trying | LegState::Ringing) {
                        Self::cancel_leg(net, host, &invite, leg);
                    }
                }
                self.observe(net, &call_id, "answer", &resp.body);
            }
            _ => {
                if call.legs[i].state == LegState::Cancelled {
                    return;
                }
                call.legs[i].state = LegState::Failed;
                let all_failed = call
                    .legs
                    .iter()
                    .all(|l| matches!(l.state, LegState::Failed | LegState::Cancelled));
                if call.winner.is_none() && all_failed {
                    let _ = send_sip(net, call.caller_chan, host, &resp);
                }
            }
        }
    }

    fn in_dialog_request(&mut self, net: &mut Net, chan: ChannelId, req: SipMessage) {
        let host = self.host;
        let call_id = req.call_id().to_string();
        let Some(call) = self.calls.get_mut(&call_id) else {
            reply(net, host, chan, &req, 404);
            return;
        };
        let from_caller = chan == call.caller_chan;
        match req.method() {
            Some(Method::Cancel) if from_caller => {
                reply(net, host, chan, &req, 200);
                let invite = call.invite.clone();
                for leg in call.legs.iter_mut() {
                    if matches!(leg.state, LegState::Trying | LegState::Ringing) {
                        Self::cancel_leg(net, host, &invite, leg);
                    }
                }
                if call.winner.is_none() {
                    reply(net, host, call.caller_chan, &invite, 487);
                }
            }
            Some(Method::Ack) | Some(Method::Bye) => {
                let to = if from_caller {
                    call.winner.map(|w| call.legs[w].chan)
                } else if call.winner.is_some_and(|w| call.legs[w].chan == chan) {
                    Some(call.caller_chan)
                } else {
                    None
                };
                match to {
                    Some(to) => {
                        let _ = send_sip(net, to, host, &req);
                    }
                    None if req.method() == Some(Method::Bye) => reply(net, host, chan, &req, 404),
                    None => {}
                }
            }
            _ => {}
        }
    }
}
