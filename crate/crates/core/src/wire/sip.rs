//! SIP message subset.
//!
//! Methods: REGISTER, INVITE, ACK, BYE, CANCEL. Any three-digit status is
//! accepted on parse. Headers are kept verbatim and in order, including
//! proprietary ones such as `X-authtoken` and the Outbound/Path/GRUU
//! headers, which are carried but not interpreted.

use std::fmt;
use std::str::FromStr;

use super::headers::{framed_body, split_head, Headers};
use super::WireError;

pub const X_AUTHTOKEN: &str = "X-authtoken";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Register,
    Invite,
    Ack,
    Bye,
    Cancel,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Register => "REGISTER",
            Method::Invite => "INVITE",
            Method::Ack => "ACK",
            Method::Bye => "BYE",
            Method::Cancel => "CANCEL",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "REGISTER" => Method::Register,
            "INVITE" => Method::Invite,
            "ACK" => Method::Ack,
            "BYE" => Method::Bye,
            "CANCEL" => Method::Cancel,
            other => return Err(WireError::UnsupportedMethod(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SipStart {
    Request { method: Method, uri: String },
    Response { status: u16, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SipMessage {
    pub start: SipStart,
    pub headers: Headers,
    pub body: Vec<u8>,
}

/// RFC 3261 compact header forms accepted on lookup.
const COMPACT: &[(&str, &str)] = &[
    ("Via", "v"),
    ("From", "f"),
    ("To", "t"),
    ("Call-ID", "i"),
    ("Content-Length", "l"),
    ("Content-Type", "c"),
    ("Contact", "m"),
];

const MANDATORY: &[&str] = &["Via", "From", "To", "Call-ID", "CSeq"];

fn compact_of(name: &str) -> Option<&'static str> {
    COMPACT
        .iter()
        .find(|(long, _)| long.eq_ignore_ascii_case(name))
        .map(|(_, short)| *short)
}

pub fn reason_phrase(status: u16) -> &'static str {
    match status {
        100 => "Trying",
        180 => "Ringing",
        200 => "OK",
        403 => "Forbidden",
        404 => "Not Found",
        486 => "Busy Here",
        487 => "Request Terminated",
        _ => "Unknown",
    }
}

impl SipMessage {
    pub fn request(method: Method, uri: impl Into<String>) -> Self {
        SipMessage {
            start: SipStart::Request {
                method,
                uri: uri.into(),
            },
            headers: Headers::new(),
            body: Vec::new(),
        }
    }

    /// Builds a response copying Via, From, To, Call-ID and CSeq from `req`.
    pub fn response_to(req: &SipMessage, status: u16) -> Self {
        let mut headers = Headers::new();
        for name in ["Via", "From", "To", "Call-ID", "CSeq"] {
            for v in req.header_all(name) {
                headers.push(name, v);
            }
        }
        SipMessage {
            start: SipStart::Response {
                status,
                reason: reason_phrase(status).to_string(),
            },
            headers,
            body: Vec::new(),
        }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push(name, value);
        self
    }

    pub fn with_sdp(mut self, sdp: Vec<u8>) -> Self {
        self.headers.set("Content-Type", "application/sdp");
        self.headers.set("Content-Length", sdp.len().to_string());
        self.body = sdp;
        self
    }

    /// Header lookup that also honours the compact form.
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .get(name)
            .or_else(|| compact_of(name).and_then(|c| self.headers.get(c)))
    }

    pub fn header_all<'a>(&'a self, name: &'a str) -> Vec<&'a str> {
        let mut v: Vec<&str> = self.headers.get_all(name).collect();
        if let Some(c) = compact_of(name) {
            v.extend(self.headers.get_all(c));
        }
        v
    }

    pub fn method(&self) -> Option<Method> {
        match &self.start {
            SipStart::Request { method, .. } => Some(*method),
            SipStart::Response { .. } => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match &self.start {
            SipStart::Response { status, .. } => Some(*status),
            SipStart::Request { .. } => None,
        }
    }

    pub fn request_uri(&self) -> Option<&str> {
        match &self.start {
            SipStart::Request { uri, .. } => Some(uri),
            SipStart::Response { .. } => None,
        }
    }

    pub fn call_id(&self) -> &str {
        self.header("Call-ID").unwrap_or_default()
    }

    /// `(sequence, method)` from CSeq. Only valid on parsed/validated messages.
    pub fn cseq(&self) -> Option<(u32, Method)> {
        parse_cseq(self.header("CSeq")?).ok()
    }

    pub fn auth_token(&self) -> Option<&str> {
        self.headers.get(X_AUTHTOKEN)
    }

    /// Short human-readable summary used in traces; never includes header values.
    pub fn summary(&self) -> String {
        match &self.start {
            SipStart::Request { method, uri } => format!("{method} {uri}"),
            SipStart::Response { status, reason } => {
                let m = self.cseq().map(|(_, m)| m.as_str()).unwrap_or("?");
                format!("{status} {reason} ({m})")
            }
        }
    }

    fn validate(&self) -> Result<(), WireError> {
        for name in MANDATORY {
            if self.header(name).is_none() {
                return Err(WireError::MissingHeader((*name).to_string()));
            }
        }
        let (_, cseq_method) = parse_cseq(self.header("CSeq").unwrap_or_default())?;
        if let SipStart::Request { method, .. } = &self.start {
            // CANCEL and ACK carry their own method in CSeq as well.
            if *method != cseq_method {
                return Err(WireError::BadCSeq(format!(
                    "CSeq method {cseq_method} does not match {method}"
                )));
            }
        }
        Ok(())
    }
}

fn parse_cseq(v: &str) -> Result<(u32, Method), WireError> {
    let bad = || WireError::BadCSeq(v.to_string());
    let (num, method) = v.trim().split_once(char::is_whitespace).ok_or_else(bad)?;
    let num: u32 = num.parse().map_err(|_| bad())?;
    let method: Method = method.trim().parse().map_err(|_| bad())?;
    Ok((num, method))
}

pub fn sip_parse(bytes: &[u8]) -> Result<SipMessage, WireError> {
    let (head, rest) = split_head(bytes)?;
    let mut lines = head.split("\r\n");
    let start = parse_start(lines.next().unwrap_or_default())?;
    let mut headers = Headers::new();
    for line in lines {
        let (n, v) = Headers::parse_line(line)?;
        headers.push(n, v);
    }
    let declared = headers.get("Content-Length").or_else(|| headers.get("l"));
    let body = framed_body(declared, rest).map_err(|e| match e {
        WireError::TrailingBytes(n) => WireError::BodyLengthMismatch {
            declared: rest.len() - n,
            actual: rest.len(),
        },
        other => other,
    })?;
    let msg = SipMessage {
        start,
        headers,
        body,
    };
    msg.validate()?;
    Ok(msg)
}

fn parse_start(line: &str) -> Result<SipStart, WireError> {
    let bad = || WireError::MalformedStartLine(line.to_string());
    if let Some(rest) = line.strip_prefix("SIP/2.0 ") {
        let (code, reason) = rest.split_once(' ').unwrap_or((rest, ""));
        if code.len() != 3 {
            return Err(bad());
        }
        let status: u16 = code.parse().map_err(|_| bad())?;
        if !(100..=699).contains(&status) {
            return Err(bad());
        }
        return Ok(SipStart::Response {
            status,
            reason: reason.to_string(),
        });
    }
    let mut parts = line.split(' ');
    let (Some(method), Some(uri), Some("SIP/2.0"), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    if uri.is_empty() {
        return Err(bad());
    }
    Ok(SipStart::Request {
        method: method.parse()?,
        uri: uri.to_string(),
    })
}

pub fn sip_serialize(msg: &SipMessage) -> Result<Vec<u8>, WireError> {
    msg.validate()?;
    let mut out = Vec::with_capacity(256 + msg.body.len());
    match &msg.start {
        SipStart::Request { method, uri } => {
            if uri.contains([' ', '\r', '\n']) {
                return Err(WireError::MalformedStartLine(uri.clone()));
            }
            out.extend_from_slice(format!("{method} {uri} SIP/2.0\r\n").as_bytes());
        }
        SipStart::Response { status, reason } => {
            if reason.contains(['\r', '\n']) {
                return Err(WireError::HeaderInjection(
                    reason.escape_debug().to_string(),
                ));
            }
            out.extend_from_slice(format!("SIP/2.0 {status:03} {reason}\r\n").as_bytes());
        }
    }
    msg.headers
        .write_framed(&mut out, &["Content-Length", "l"], msg.body.len())?;
    out.extend_from_slice(&msg.body);
    Ok(out)
}

/// Extracts the URI from a name-addr such as `"Bob" <sip:b@x>;tag=1`.
pub fn addr_uri(value: &str) -> &str {
    match (value.find('<'), value.find('>')) {
        (Some(a), Some(b)) if a < b => &value[a + 1..b],
        _ => value.split(';').next().unwrap_or(value).trim(),
    }
}

/// Returns the `tag` parameter of a From/To value, if any.
pub fn addr_tag(value: &str) -> Option<&str> {
    let params = match value.find('>') {
        Some(i) => &value[i + 1..],
        None => value,
    };
    params
        .split(';')
        .filter_map(|p| p.trim().strip_prefix("tag="))
        .next()
}
