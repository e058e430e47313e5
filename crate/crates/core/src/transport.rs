//! Helpers that put wire messages onto fabric channels with trace annotations.

use crate::netsim::{Annot, ChannelId, HostId, Layer, Net, NetError};
use crate::wire::{
    control_encode, http_serialize, oobe_encode, oobe_encode_response, sip_serialize,
    ControlMessage, Frame, HttpMessage, OobeEnvelope, SipMessage,
};

pub fn send_http(
    net: &mut Net,
    chan: ChannelId,
    host: HostId,
    msg: &HttpMessage,
    summary: impl Into<String>,
) -> Result<(), NetError> {
    let bytes = http_serialize(msg).expect("locally built HTTP messages are well-formed");
    net.send(chan, host, bytes, Annot::new(Layer::Http, summary))
}

/// POSTs a JSON body to `path` on an already open channel.
pub fn post_json(
    net: &mut Net,
    chan: ChannelId,
    host: HostId,
    path: &str,
    body: &serde_json::Value,
    cookie: Option<&str>,
) -> Result<(), NetError> {
    let mut msg = HttpMessage::request("POST", path);
    if let Some(c) = cookie {
        msg = msg.with_header("Cookie", format!("session={c}"));
    }
    let msg = msg.with_body("application/json", body.to_string().into_bytes());
    let name = path.trim_start_matches('/');
    send_http(net, chan, host, &msg, name)
}

pub fn reply_json(
    net: &mut Net,
    chan: ChannelId,
    host: HostId,
    status: u16,
    reason: &str,
    body: &serde_json::Value,
    summary: &str,
) -> Result<(), NetError> {
    let msg = HttpMessage::response(status, reason)
        .with_body("application/json", body.to_string().into_bytes());
    send_http(net, chan, host, &msg, format!("{summary} {status}"))
}

pub fn send_oobe_request(
    net: &mut Net,
    chan: ChannelId,
    host: HostId,
    env: &OobeEnvelope,
) -> Result<(), NetError> {
    let msg = oobe_encode(env).expect("locally built envelopes encode");
    let bytes = http_serialize(&msg).expect("well-formed");
    net.send(
        chan,
        host,
        bytes,
        Annot::new(Layer::Oobe, env.method.clone()),
    )
}

pub fn send_oobe_response(
    net: &mut Net,
    chan: ChannelId,
    host: HostId,
    env: &OobeEnvelope,
    status: u16,
) -> Result<(), NetError> {
    let msg = oobe_encode_response(env, status).expect("locally built envelopes encode");
    let bytes = http_serialize(&msg).expect("well-formed");
    net.send(
        chan,
        host,
        bytes,
        Annot::new(Layer::Oobe, format!("{} {status}", env.method)),
    )
}

pub fn send_sip(
    net: &mut Net,
    chan: ChannelId,
    host: HostId,
    msg: &SipMessage,
) -> Result<(), NetError> {
    let bytes = sip_serialize(msg).expect("locally built SIP messages are well-formed");
    net.send(chan, host, bytes, Annot::new(Layer::Sip, msg.summary()))
}

pub fn send_control(
    net: &mut Net,
    chan: ChannelId,
    host: HostId,
    stream: u32,
    msg: &ControlMessage,
) -> Result<(), NetError> {
    let frame = Frame {
        stream,
        data: control_encode(msg),
    };
    net.send(
        chan,
        host,
        frame.encode(),
        Annot::new(Layer::Control, msg.qualified_name()),
    )
}

/// Body of an HTTP message as JSON; `Value::Null` when absent or invalid.
pub fn json_body(msg: &HttpMessage) -> serde_json::Value {
    serde_json::from_slice(&msg.body).unwrap_or(serde_json::Value::Null)
}

/// Value of `session=` in a Cookie header.
pub fn session_cookie(msg: &HttpMessage) -> Option<&str> {
    msg.headers
        .get("Cookie")?
        .split(';')
        .find_map(|kv| kv.trim().strip_prefix("session="))
}
