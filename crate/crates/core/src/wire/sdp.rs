//! SDP subset: one audio media section, ICE-style candidates and a single
//! SDES `a=crypto` line carrying the 46-byte master key‖salt.

use std::net::Ipv4Addr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use super::WireError;

pub const CRYPTO_SUITE: &str = "AES_256_CM_HMAC_SHA1_80";
pub const KEY_SALT_LEN: usize = 46;
const PAYLOAD_TYPE: u8 = 111;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    Host,
    Relay,
}

impl CandidateKind {
    fn as_str(self) -> &'static str {
        match self {
            CandidateKind::Host => "host",
            CandidateKind::Relay => "relay",
        }
    }

    fn priority(self) -> u32 {
        match self {
            CandidateKind::Host => 2_130_706_431,
            CandidateKind::Relay => 16_777_215,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub kind: CandidateKind,
    pub address: Ipv4Addr,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CryptoAttr {
    pub tag: u32,
    pub suite: String,
    pub key_salt: Vec<u8>,
}

impl CryptoAttr {
    pub fn new(key: &[u8; 32], salt: &[u8; 14]) -> Self {
        let mut key_salt = key.to_vec();
        key_salt.extend_from_slice(salt);
        CryptoAttr {
            tag: 1,
            suite: CRYPTO_SUITE.to_string(),
            key_salt,
        }
    }

    /// Splits into `(master key, master salt)`.
    pub fn split(&self) -> Result<([u8; 32], [u8; 14]), WireError> {
        if self.key_salt.len() != KEY_SALT_LEN {
            return Err(WireError::Sdp(format!(
                "key material is {} bytes, expected {KEY_SALT_LEN}",
                self.key_salt.len()
            )));
        }
        let mut key = [0u8; 32];
        let mut salt = [0u8; 14];
        key.copy_from_slice(&self.key_salt[..32]);
        salt.copy_from_slice(&self.key_salt[32..]);
        Ok((key, salt))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdpBody {
    pub session_id: u64,
    pub address: Ipv4Addr,
    pub media_port: u16,
    pub ssrc: u32,
    pub candidates: Vec<Candidate>,
    pub crypto: CryptoAttr,
}

impl SdpBody {
    pub fn candidate(&self, kind: CandidateKind) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.kind == kind)
    }
}

pub fn sdp_encode(body: &SdpBody) -> Result<Vec<u8>, WireError> {
    if body.candidates.is_empty() {
        return Err(WireError::Sdp("no candidates".into()));
    }
    body.crypto.split()?;
    if body.crypto.suite.contains(char::is_whitespace) || body.crypto.suite.is_empty() {
        return Err(WireError::Sdp("bad crypto suite".into()));
    }
    let mut s = String::new();
    s.push_str("v=0\r\n");
    s.push_str(&format!(
        "o=- {} 1 IN IP4 {}\r\n",
        body.session_id, body.address
    ));
    s.push_str("s=-\r\n");
    s.push_str(&format!("c=IN IP4 {}\r\n", body.address));
    s.push_str("t=0 0\r\n");
    s.push_str(&format!(
        "m=audio {} RTP/SAVP {PAYLOAD_TYPE}\r\n",
        body.media_port
    ));
    s.push_str(&format!("a=rtpmap:{PAYLOAD_TYPE} opus/48000/2\r\n"));
    s.push_str(&format!("a=ssrc:{}\r\n", body.ssrc));
    for (i, c) in body.candidates.iter().enumerate() {
        s.push_str(&format!(
            "a=candidate:{} 1 UDP {} {} {} typ {}\r\n",
            i + 1,
            c.kind.priority(),
            c.address,
            c.port,
            c.kind.as_str()
        ));
    }
    s.push_str(&format!(
        "a=crypto:{} {} inline:{}\r\n",
        body.crypto.tag,
        body.crypto.suite,
        B64.encode(&body.crypto.key_salt)
    ));
    Ok(s.into_bytes())
}

pub fn sdp_decode(bytes: &[u8]) -> Result<SdpBody, WireError> {
    let text = std::str::from_utf8(bytes).map_err(|_| WireError::NotUtf8)?;
    let err = |m: &str| WireError::Sdp(m.to_string());
    let mut session_id = None;
    let mut address = None;
    let mut media_port = None;
    let mut ssrc = None;
    let mut candidates = Vec::new();
    let mut crypto: Option<CryptoAttr> = None;
    let mut media_sections = 0;

    for line in text.split("\r\n").filter(|l| !l.is_empty()) {
        let (kind, value) = line
            .split_once('=')
            .ok_or_else(|| err("line without '='"))?;
        match kind {
            "v" | "s" | "t" => {}
            "o" => {
                let f: Vec<&str> = value.split(' ').collect();
                if f.len() != 6 {
                    return Err(err("bad o= line"));
                }
                session_id = Some(f[1].parse::<u64>().map_err(|_| err("bad session id"))?);
            }
            "c" => {
                let a = value
                    .strip_prefix("IN IP4 ")
                    .ok_or_else(|| err("bad c= line"))?;
                address = Some(a.parse::<Ipv4Addr>().map_err(|_| err("bad c= address"))?);
            }
            "m" => {
                media_sections += 1;
                let f: Vec<&str> = value.split(' ').collect();
                if f.len() < 3 || f[0] != "audio" {
                    return Err(err("bad m= line"));
                }
                media_port = Some(f[1].parse::<u16>().map_err(|_| err("bad media port"))?);
            }
            "a" => {
                if let Some(v) = value.strip_prefix("ssrc:") {
                    let id = v.split(' ').next().unwrap_or(v);
                    ssrc = Some(id.parse::<u32>().map_err(|_| err("bad ssrc"))?);
                } else if let Some(v) = value.strip_prefix("candidate:") {
                    candidates.push(parse_candidate(v)?);
                } else if let Some(v) = value.strip_prefix("crypto:") {
                    if crypto.is_some() {
                        return Err(err("more than one crypto line"));
                    }
                    crypto = Some(parse_crypto(v)?);
                }
            }
            _ => {}
        }
    }
    if media_sections != 1 {
        return Err(err("expected exactly one media section"));
    }
    if candidates.is_empty() {
        return Err(err("no candidates"));
    }
    Ok(SdpBody {
        session_id: session_id.ok_or_else(|| err("missing o= line"))?,
        address: address.ok_or_else(|| err("missing c= line"))?,
        media_port: media_port.ok_or_else(|| err("missing m= line"))?,
        ssrc: ssrc.ok_or_else(|| err("missing a=ssrc"))?,
        candidates,
        crypto: crypto.ok_or_else(|| err("missing crypto line"))?,
    })
}

fn parse_candidate(v: &str) -> Result<Candidate, WireError> {
    let err = || WireError::Sdp(format!("bad candidate: {v}"));
    let f: Vec<&str> = v.split(' ').collect();
    if f.len() != 8 || f[6] != "typ" {
        return Err(err());
    }
    let kind = match f[7] {
        "host" => CandidateKind::Host,
        "relay" => CandidateKind::Relay,
        _ => return Err(err()),
    };
    Ok(Candidate {
        kind,
        address: f[4].parse().map_err(|_| err())?,
        port: f[5].parse().map_err(|_| err())?,
    })
}

fn parse_crypto(v: &str) -> Result<CryptoAttr, WireError> {
    let err = |m: &str| WireError::Sdp(format!("bad crypto line: {m}"));
    let f: Vec<&str> = v.split(' ').collect();
    if f.len() < 3 {
        return Err(err("too few fields"));
    }
    let tag = f[0].parse().map_err(|_| err("tag"))?;
    let inline = f[2]
        .strip_prefix("inline:")
        .ok_or_else(|| err("key params"))?;
    // Lifetime / MKI suffixes ("|2^31|1:1") are not used by the testbed.
    let b64 = inline.split('|').next().unwrap_or(inline);
    let key_salt = B64.decode(b64).map_err(|_| err("base64"))?;
    let attr = CryptoAttr {
        tag,
        suite: f[1].to_string(),
        key_salt,
    };
    attr.split()?;
    Ok(attr)
}
