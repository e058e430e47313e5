//! HTTP/1.1 subset: Content-Length framing only, no chunked bodies, one
//! message per buffer.

use super::headers::{framed_body, split_head, Headers};
use super::WireError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HttpStart {
    Request { method: String, path: String },
    Response { status: u16, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpMessage {
    pub start: HttpStart,
    pub headers: Headers,
    pub body: Vec<u8>,
}

impl HttpMessage {
    pub fn request(method: &str, path: &str) -> Self {
        HttpMessage {
            start: HttpStart::Request {
                method: method.to_string(),
                path: path.to_string(),
            },
            headers: Headers::new(),
            body: Vec::new(),
        }
    }

    pub fn response(status: u16, reason: &str) -> Self {
        HttpMessage {
            start: HttpStart::Response {
                status,
                reason: reason.to_string(),
            },
            headers: Headers::new(),
            body: Vec::new(),
        }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push(name, value);
        self
    }

    /// Sets the body and keeps `Content-Length` in the header list consistent.
    pub fn with_body(mut self, content_type: &str, body: Vec<u8>) -> Self {
        self.headers.set("Content-Type", content_type);
        self.headers.set("Content-Length", body.len().to_string());
        self.body = body;
        self
    }

    pub fn method(&self) -> Option<&str> {
        match &self.start {
            HttpStart::Request { method, .. } => Some(method),
            HttpStart::Response { .. } => None,
        }
    }

    pub fn path(&self) -> Option<&str> {
        match &self.start {
            HttpStart::Request { path, .. } => Some(path),
            HttpStart::Response { .. } => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match &self.start {
            HttpStart::Response { status, .. } => Some(*status),
            HttpStart::Request { .. } => None,
        }
    }
}

pub fn http_parse(bytes: &[u8]) -> Result<HttpMessage, WireError> {
    let (head, rest) = split_head(bytes)?;
    let mut lines = head.split("\r\n");
    let start_line = lines.next().unwrap_or_default();
    let start = parse_start(start_line)?;
    let mut headers = Headers::new();
    for line in lines {
        let (n, v) = Headers::parse_line(line)?;
        headers.push(n, v);
    }
    if headers
        .get("Transfer-Encoding")
        .is_some_and(|te| te.to_ascii_lowercase().contains("chunked"))
    {
        return Err(WireError::Unsupported("chunked transfer encoding".into()));
    }
    let body = framed_body(headers.get("Content-Length"), rest)?;
    Ok(HttpMessage {
        start,
        headers,
        body,
    })
}

fn parse_start(line: &str) -> Result<HttpStart, WireError> {
    let bad = || WireError::MalformedStartLine(line.to_string());
    if let Some(rest) = line.strip_prefix("HTTP/1.1 ") {
        let (code, reason) = rest.split_once(' ').unwrap_or((rest, ""));
        if code.len() != 3 {
            return Err(bad());
        }
        let status: u16 = code.parse().map_err(|_| bad())?;
        if !(100..=599).contains(&status) {
            return Err(bad());
        }
        return Ok(HttpStart::Response {
            status,
            reason: reason.to_string(),
        });
    }
    let mut parts = line.split(' ');
    let (Some(method), Some(path), Some(version), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    if version != "HTTP/1.1"
        || method.is_empty()
        || !method.bytes().all(|b| b.is_ascii_uppercase())
        || !path.starts_with('/')
    {
        return Err(bad());
    }
    Ok(HttpStart::Request {
        method: method.to_string(),
        path: path.to_string(),
    })
}

pub fn http_serialize(msg: &HttpMessage) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(128 + msg.body.len());
    match &msg.start {
        HttpStart::Request { method, path } => {
            if method.contains([' ', '\r', '\n']) || path.contains([' ', '\r', '\n']) {
                return Err(WireError::MalformedStartLine(format!("{method} {path}")));
            }
            out.extend_from_slice(format!("{method} {path} HTTP/1.1\r\n").as_bytes());
        }
        HttpStart::Response { status, reason } => {
            if reason.contains(['\r', '\n']) {
                return Err(WireError::HeaderInjection(
                    reason.escape_debug().to_string(),
                ));
            }
            out.extend_from_slice(format!("HTTP/1.1 {status:03} {reason}\r\n").as_bytes());
        }
    }
    msg.headers
        .write_framed(&mut out, &["Content-Length"], msg.body.len())?;
    out.extend_from_slice(&msg.body);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_post() {
        let m = http_parse(b"POST /OOBE HTTP/1.1\r\nContent-Length: 2\r\n\r\n{}").unwrap();
        assert_eq!(m.method(), Some("POST"));
        assert_eq!(m.path(), Some("/OOBE"));
        assert_eq!(m.body, b"{}");
    }

    #[test]
    fn body_without_length_is_rejected() {
        assert_eq!(
            http_parse(b"POST /OOBE HTTP/1.1\r\n\r\nabc"),
            Err(WireError::MissingContentLength)
        );
    }

    #[test]
    fn non_numeric_length() {
        assert!(matches!(
            http_parse(b"POST /OOBE HTTP/1.1\r\nContent-Length: x\r\n\r\n"),
            Err(WireError::BadContentLength(_))
        ));
    }

    #[test]
    fn trailing_bytes_reported() {
        assert_eq!(
            http_parse(b"POST /OOBE HTTP/1.1\r\nContent-Length: 1\r\n\r\nab"),
            Err(WireError::TrailingBytes(1))
        );
    }

    #[test]
    fn malformed_start_line() {
        assert!(matches!(
            http_parse(b"POST/OOBE\r\n\r\n"),
            Err(WireError::MalformedStartLine(_))
        ));
        assert!(matches!(
            http_parse(b"HTTP/1.1 2000 OK\r\n\r\n"),
            Err(WireError::MalformedStartLine(_))
        ));
    }

    #[test]
    fn empty_response_ends_with_zero_length() {
        let bytes = http_serialize(&HttpMessage::response(200, "OK")).unwrap();
        assert!(bytes.ends_with(b"Content-Length: 0\r\n\r\n"));
    }

    #[test]
    fn header_order_preserved() {
        let m = HttpMessage::request("GET", "/")
            .with_header("Zeta", "1")
            .with_header("Alpha", "2")
            .with_header("Mid", "3");
        let text = String::from_utf8(http_serialize(&m).unwrap()).unwrap();
        let z = text.find("Zeta").unwrap();
        let a = text.find("Alpha").unwrap();
        let mid = text.find("Mid").unwrap();
        assert!(z < a && a < mid);
    }

    #[test]
    fn header_injection_rejected() {
        let m = HttpMessage::request("GET", "/").with_header("X", "a\r\nb");
        assert!(matches!(
            http_serialize(&m),
            Err(WireError::HeaderInjection(_))
        ));
    }

    #[test]
    fn stale_content_length_is_rewritten() {
        let mut m = HttpMessage::request("POST", "/x").with_header("Content-Length", "99");
        m.body = b"abc".to_vec();
        let bytes = http_serialize(&m).unwrap();
        let back = http_parse(&bytes).unwrap();
        assert_eq!(back.headers.get("content-length"), Some("3"));
        assert_eq!(back.body, b"abc");
    }

    #[test]
    fn canonical_round_trip() {
        let raw: &[u8] =
            b"HTTP/1.1 403 Forbidden\r\nServer: t\r\nContent-Type: text/plain\r\nContent-Length: 4\r\n\r\nnope";
        assert_eq!(http_serialize(&http_parse(raw).unwrap()).unwrap(), raw);
    }
}
