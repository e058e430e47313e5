//! Length-prefixed multiplexed frames for the persistent voice-service
//! connection: `stream id (u32 BE) ‖ length (u32 BE) ‖ bytes`.

use super::WireError;

pub const STREAM_SYSTEM: u32 = 1;
pub const STREAM_SIP_CLIENT: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub stream: u32,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.data.len());
        out.extend_from_slice(&self.stream.to_be_bytes());
        out.extend_from_slice(&(self.data.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    /// Decodes a buffer holding one or more complete frames.
    pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<Frame>, WireError> {
        let mut frames = Vec::new();
        while !bytes.is_empty() {
            if bytes.len() < 8 {
                return Err(WireError::Frame("truncated frame header".into()));
            }
            let stream = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
            let len = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
            let rest = &bytes[8..];
            if rest.len() < len {
                return Err(WireError::Frame("truncated frame body".into()));
            }
            frames.push(Frame {
                stream,
                data: rest[..len].to_vec(),
            });
            bytes = &rest[len..];
        }
        Ok(frames)
    }
}
