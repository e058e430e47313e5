//! sRTP-style media protection, single suite AES_256_CM_HMAC_SHA1_80.
//!
//! Session keys come from the AES-CM key derivation PRF (key derivation
//! rate 0). Packets are a 12-byte RTP header, AES-256 counter-mode payload
//! and an 80-bit HMAC-SHA1 tag over header, ciphertext and rollover counter.

use aes::cipher::{KeyIvInit, StreamCipher};
use hmac::{Hmac, Mac};
use sha1::Sha1;
use subtle::ConstantTimeEq;

use super::CryptoError;

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

pub const MASTER_KEY_LEN: usize = 32;
pub const MASTER_SALT_LEN: usize = 14;
pub const HEADER_LEN: usize = 12;
pub const TAG_LEN: usize = 10;
pub const REPLAY_WINDOW: u64 = 64;
pub const MAX_INDEX: u64 = 1 << 48;
const PAYLOAD_TYPE: u8 = 111;
/// 20 ms at 48 kHz.
const TIMESTAMP_STEP: u32 = 960;

const LABEL_CIPHER: u8 = 0x00;
const LABEL_AUTH: u8 = 0x01;
const LABEL_SALT: u8 = 0x02;

fn salt_int(salt: &[u8; MASTER_SALT_LEN]) -> u128 {
    let mut b = [0u8; 16];
    b[2..].copy_from_slice(salt);
    u128::from_be_bytes(b)
}

fn prf(
    master_key: &[u8; MASTER_KEY_LEN],
    master_salt: &[u8; MASTER_SALT_LEN],
    label: u8,
    out: &mut [u8],
) {
    let x = salt_int(master_salt) ^ (u128::from(label) << 48);
    let iv = (x << 16).to_be_bytes();
    out.fill(0);
    Aes256Ctr::new(master_key.into(), &iv.into()).apply_keystream(out);
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ReplayWindow {
    highest: Option<u64>,
    bitmap: u64,
}

impl ReplayWindow {
    fn check(&self, index: u64) -> Result<(), CryptoError> {
        let Some(h) = self.highest else { return Ok(()) };
        if index > h {
            return Ok(());
        }
        let delta = h - index;
        if delta >= REPLAY_WINDOW || self.bitmap & (1 << delta) != 0 {
            return Err(CryptoError::Replay);
        }
        Ok(())
    }

    fn accept(&mut self, index: u64) {
        match self.highest {
            None => {
                self.highest = Some(index);
                self.bitmap = 1;
            }
            Some(h) if index > h => {
                let shift = index - h;
                self.bitmap = if shift >= REPLAY_WINDOW {
                    0
                } else {
                    self.bitmap << shift
                };
                self.bitmap |= 1;
                self.highest = Some(index);
            }
            Some(h) => self.bitmap |= 1 << (h - index),
        }
    }

    /// RFC 3711 appendix A index estimate from a 16-bit sequence number.
    fn estimate(&self, seq: u16) -> Option<u64> {
        let Some(h) = self.highest else {
            return Some(u64::from(seq));
        };
        let s_l = (h & 0xffff) as i64;
        let roc = (h >> 16) as i64;
        let seq_i = i64::from(seq);
        let v = if s_l < 32768 {
            if seq_i - s_l > 32768 {
                roc - 1
            } else {
                roc
            }
        } else if s_l - 32768 > seq_i {
            roc + 1
        } else {
            roc
        };
        (v >= 0).then(|| ((v as u64) << 16) | u64::from(seq))
    }
}

/// Keys and counters for one media direction.
#[derive(Clone, PartialEq, Eq)]
pub struct SrtpContext {
    master_key: [u8; MASTER_KEY_LEN],
    master_salt: [u8; MASTER_SALT_LEN],
    cipher_key: [u8; 32],
    auth_key: [u8; 20],
    session_salt: [u8; 14],
    ssrc: u32,
    next_index: u64,
    timestamp: u32,
    window: ReplayWindow,
}

impl std::fmt::Debug for SrtpContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SrtpContext")
            .field("ssrc", &self.ssrc)
            .field("next_index", &self.next_index)
            .finish_non_exhaustive()
    }
}

pub fn srtp_derive(
    master_key: &[u8],
    master_salt: &[u8],
    ssrc: u32,
) -> Result<SrtpContext, CryptoError> {
    let master_key: [u8; MASTER_KEY_LEN] = master_key
        .try_into()
        .map_err(|_| CryptoError::InvalidArgument("master key must be 32 bytes".into()))?;
    let master_salt: [u8; MASTER_SALT_LEN] = master_salt
        .try_into()
        .map_err(|_| CryptoError::InvalidArgument("master salt must be 14 bytes".into()))?;
    let mut cipher_key = [0u8; 32];
    let mut auth_key = [0u8; 20];
    let mut session_salt = [0u8; 14];
    prf(&master_key, &master_salt, LABEL_CIPHER, &mut cipher_key);
    prf(&master_key, &master_salt, LABEL_AUTH, &mut auth_key);
    prf(&master_key, &master_salt, LABEL_SALT, &mut session_salt);
    Ok(SrtpContext {
        master_key,
        master_salt,
        cipher_key,
        auth_key,
        session_salt,
        ssrc,
        next_index: 0,
        timestamp: 0,
        window: ReplayWindow::default(),
    })
}

impl SrtpContext {
    pub fn cipher_key(&self) -> &[u8; 32] {
        &self.cipher_key
    }

    pub fn auth_key(&self) -> &[u8; 20] {
        &self.auth_key
    }

    pub fn session_salt(&self) -> &[u8; 14] {
        &self.session_salt
    }

    pub fn ssrc(&self) -> u32 {
        self.ssrc
    }

    pub fn master_key(&self) -> &[u8; MASTER_KEY_LEN] {
        &self.master_key
    }

    pub fn master_salt(&self) -> &[u8; MASTER_SALT_LEN] {
        &self.master_salt
    }

    /// Next packet index the sender will use.
    pub fn send_index(&self) -> u64 {
        self.next_index
    }

    pub fn highest_received(&self) -> Option<u64> {
        self.window.highest
    }

    /// Jumps the send counter (test hook for the wrap guard).
    pub fn set_send_index(&mut self, index: u64) {
        self.next_index = index;
    }

    /// RTP timestamp of the next packet.
    pub fn set_timestamp(&mut self, ts: u32) {
        self.timestamp = ts;
    }

    fn keystream_iv(&self, index: u64) -> [u8; 16] {
        let iv = (salt_int(&self.session_salt) << 16)
            ^ (u128::from(self.ssrc) << 64)
            ^ (u128::from(index) << 16);
        iv.to_be_bytes()
    }

    fn tag(&self, authenticated: &[u8], roc: u32) -> [u8; TAG_LEN] {
        let mut mac = Hmac::<Sha1>::new_from_slice(&self.auth_key).unwrap();
        mac.update(authenticated);
        mac.update(&roc.to_be_bytes());
        let full = mac.finalize().into_bytes();
        full[..TAG_LEN].try_into().unwrap()
    }

    pub fn protect(&mut self, payload: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if payload.is_empty() {
            return Err(CryptoError::InvalidArgument("empty payload".into()));
        }
        let index = self.next_index;
        if index >= MAX_INDEX {
            return Err(CryptoError::SequenceExhausted);
        }
        let seq = (index & 0xffff) as u16;
        let roc = (index >> 16) as u32;
        let mut pkt = Vec::with_capacity(HEADER_LEN + payload.len() + TAG_LEN);
        pkt.push(0x80);
        pkt.push(PAYLOAD_TYPE);
        pkt.extend_from_slice(&seq.to_be_bytes());
        pkt.extend_from_slice(&self.timestamp.to_be_bytes());
        pkt.extend_from_slice(&self.ssrc.to_be_bytes());
        let start = pkt.len();
        pkt.extend_from_slice(payload);
        Aes256Ctr::new(&self.cipher_key.into(), &self.keystream_iv(index).into())
            .apply_keystream(&mut pkt[start..]);
        let tag = self.tag(&pkt, roc);
        pkt.extend_from_slice(&tag);
        self.next_index += 1;
        self.timestamp = self.timestamp.wrapping_add(TIMESTAMP_STEP);
        Ok(pkt)
    }

    /// Verifies the tag before decrypting; on any failure no plaintext is
    /// produced and the replay window is left untouched.
    pub fn unprotect(&mut self, packet: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if packet.len() < HEADER_LEN + 1 + TAG_LEN || packet[0] >> 6 != 2 {
            return Err(CryptoError::Malformed("srtp packet".into()));
        }
        let ssrc = u32::from_be_bytes(packet[8..12].try_into().unwrap());
        if ssrc != self.ssrc {
            return Err(CryptoError::UnknownSsrc(ssrc));
        }
        let seq = u16::from_be_bytes([packet[2], packet[3]]);
        let index = self.window.estimate(seq).ok_or(CryptoError::Replay)?;
        self.window.check(index)?;
        let (authenticated, tag) = packet.split_at(packet.len() - TAG_LEN);
        let expected = self.tag(authenticated, (index >> 16) as u32);
        if !bool::from(expected.ct_eq(tag)) {
            return Err(CryptoError::Auth);
        }
        let mut payload = authenticated[HEADER_LEN..].to_vec();
        Aes256Ctr::new(&self.cipher_key.into(), &self.keystream_iv(index).into())
            .apply_keystream(&mut payload);
        self.window.accept(index);
        Ok(payload)
    }
}

/// Reads `(seq, timestamp, ssrc)` from a protected packet header.
pub fn packet_header(packet: &[u8]) -> Option<(u16, u32, u32)> {
    if packet.len() < HEADER_LEN {
        return None;
    }
    Some((
        u16::from_be_bytes([packet[2], packet[3]]),
        u32::from_be_bytes(packet[4..8].try_into().unwrap()),
        u32::from_be_bytes(packet[8..12].try_into().unwrap()),
    ))
}
