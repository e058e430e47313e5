//! OOBE method envelope carried as JSON in an HTTP POST to `/OOBE`.
//!
//! The body shape `{"method": <name>, "args": {...}}` is our own stand-in
//! for the device's JSON-serialized Thrift messages; responses reuse the
//! same envelope with the method name echoed back.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::http::HttpMessage;
use super::WireError;

pub const OOBE_PATH: &str = "/OOBE";
pub const OOBE_PORT: u16 = 8080;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OobeEnvelope {
    pub method: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl OobeEnvelope {
    pub fn new(method: &str) -> Self {
        OobeEnvelope {
            method: method.to_string(),
            args: Map::new(),
        }
    }

    pub fn with_arg(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.args.insert(key.to_string(), value.into());
        self
    }

    pub fn arg_str(&self, key: &str) -> Option<&str> {
        self.args.get(key).and_then(Value::as_str)
    }

    fn to_json(&self) -> Result<Vec<u8>, WireError> {
        if self.method.is_empty() {
            return Err(WireError::Oobe("empty method name".into()));
        }
        serde_json::to_vec(self).map_err(|e| WireError::Oobe(e.to_string()))
    }

    fn from_json(body: &[u8]) -> Result<Self, WireError> {
        let value: Value =
            serde_json::from_slice(body).map_err(|e| WireError::Oobe(format!("bad json: {e}")))?;
        let Value::Object(mut obj) = value else {
            return Err(WireError::Oobe("body is not a JSON object".into()));
        };
        let method = match obj.remove("method") {
            Some(Value::String(m)) if !m.is_empty() => m,
            _ => return Err(WireError::Oobe("missing method name".into())),
        };
        let args = match obj.remove("args") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(a)) => a,
            Some(_) => return Err(WireError::Oobe("args is not an object".into())),
        };
        Ok(OobeEnvelope { method, args })
    }
}

pub fn oobe_encode(env: &OobeEnvelope) -> Result<HttpMessage, WireError> {
    Ok(HttpMessage::request("POST", OOBE_PATH).with_body("application/json", env.to_json()?))
}

pub fn oobe_decode(msg: &HttpMessage) -> Result<OobeEnvelope, WireError> {
    match (msg.method(), msg.path()) {
        (Some("POST"), Some(OOBE_PATH)) => OobeEnvelope::from_json(&msg.body),
        (Some(m), Some(p)) => Err(WireError::Oobe(format!(
            "expected POST {OOBE_PATH}, got {m} {p}"
        ))),
        _ => Err(WireError::Oobe("not a request".into())),
    }
}

pub fn oobe_encode_response(env: &OobeEnvelope, status: u16) -> Result<HttpMessage, WireError> {
    let reason = if status == 200 { "OK" } else { "Bad Request" };
    Ok(HttpMessage::response(status, reason).with_body("application/json", env.to_json()?))
}

/// Decodes a response; returns the HTTP status alongside the envelope.
pub fn oobe_decode_response(msg: &HttpMessage) -> Result<(u16, OobeEnvelope), WireError> {
    let status = msg
        .status()
        .ok_or_else(|| WireError::Oobe("not a response".into()))?;
    Ok((status, OobeEnvelope::from_json(&msg.body)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::http::{http_parse, http_serialize};
    use serde_json::json;

    #[test]
    fn ping_encodes_to_post_oobe() {
        let msg = oobe_encode(&OobeEnvelope::new("ping")).unwrap();
        assert_eq!(msg.method(), Some("POST"));
        assert_eq!(msg.path(), Some("/OOBE"));
        assert_eq!(msg.body, br#"{"method":"ping","args":{}}"#);
    }

    #[test]
    fn nested_args_round_trip() {
        let env = OobeEnvelope::new("connectToAP")
            .with_arg("blob", "-----BEGIN-----")
            .with_arg("meta", json!({"a": [1, 2, {"b": null}], "c": true}));
        let wire = http_serialize(&oobe_encode(&env).unwrap()).unwrap();
        assert_eq!(oobe_decode(&http_parse(&wire).unwrap()).unwrap(), env);
    }

    #[test]
    fn wrong_path_rejected() {
        let mut msg = oobe_encode(&OobeEnvelope::new("ping")).unwrap();
        msg.start = crate::wire::http::HttpStart::Request {
            method: "POST".into(),
            path: "/other".into(),
        };
        assert!(oobe_decode(&msg).is_err());
    }

    #[test]
    fn body_must_be_object_with_method() {
        let arr =
            HttpMessage::request("POST", "/OOBE").with_body("application/json", b"[]".to_vec());
        assert!(oobe_decode(&arr).is_err());
        let nomethod = HttpMessage::request("POST", "/OOBE")
            .with_body("application/json", br#"{"args":{}}"#.to_vec());
        assert!(oobe_decode(&nomethod).is_err());
        let empty = HttpMessage::request("POST", "/OOBE")
            .with_body("application/json", br#"{"method":""}"#.to_vec());
        assert!(oobe_decode(&empty).is_err());
    }
}
