//! Byte-level codecs for every message the testbed puts on the fabric.

pub mod control;
pub mod frame;
mod headers;
pub mod http;
pub mod oobe;
pub mod sdp;
pub mod sip;

pub use control::{control_decode, control_encode, ControlMessage};
pub use frame::Frame;
pub use headers::Headers;
pub use http::{http_parse, http_serialize, HttpMessage, HttpStart};
pub use oobe::{
    oobe_decode, oobe_decode_response, oobe_encode, oobe_encode_response, OobeEnvelope,
};
pub use sdp::{sdp_decode, sdp_encode, Candidate, CandidateKind, CryptoAttr, SdpBody};
pub use sip::{sip_parse, sip_serialize, Method, SipMessage, SipStart};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("incomplete message: no header terminator")]
    Incomplete,
    #[error("message head is not valid UTF-8")]
    NotUtf8,
    #[error("malformed start line: {0:?}")]
    MalformedStartLine(String),
    #[error("malformed header line: {0:?}")]
    MalformedHeader(String),
    #[error("header value contains CR or LF: {0}")]
    HeaderInjection(String),
    #[error("missing Content-Length with non-empty body")]
    MissingContentLength,
    #[error("non-numeric Content-Length: {0:?}")]
    BadContentLength(String),
    #[error("body length mismatch: declared {declared}, got {actual}")]
    BodyLengthMismatch { declared: usize, actual: usize },
    #[error("{0} unparsed trailing bytes")]
    TrailingBytes(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unsupported SIP method {0}")]
    UnsupportedMethod(String),
    #[error("missing mandatory header {0}")]
    MissingHeader(String),
    #[error("bad CSeq: {0}")]
    BadCSeq(String),
    #[error("oobe: {0}")]
    Oobe(String),
    #[error("sdp: {0}")]
    Sdp(String),
    #[error("control: {0}")]
    Control(String),
    #[error("frame: {0}")]
    Frame(String),
}
