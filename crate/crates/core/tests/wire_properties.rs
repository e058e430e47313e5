use std::net::Ipv4Addr;

use proptest::prelude::*;
use serde_json::{Map, Value};

use echo_testbed::wire::{
    control_decode, control_encode, http_parse, http_serialize, oobe_decode, oobe_decode_response,
    oobe_encode, oobe_encode_response, sdp_decode, sdp_encode, sip_parse, sip_serialize, Candidate,
    CandidateKind, ControlMessage, CryptoAttr, HttpMessage, Method, OobeEnvelope, SdpBody,
    SipMessage,
};

const VALUE: &str = "[!-~]([ -~]{0,30}[!-~])?";

fn extra_header() -> impl Strategy<Value = (String, String)> {
    ("X-[A-Za-z0-9]{1,10}", VALUE)
}

fn json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        "[ -~\u{a0}-\u{2fff}]{0,20}".prop_map(Value::String),
    ]
}

fn json_value() -> impl Strategy<Value = Value> {
    json_leaf().prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            proptest::collection::btree_map("[a-zA-Z_]{1,8}", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn json_map() -> impl Strategy<Value = Map<String, Value>> {
    proptest::collection::btree_map("[a-zA-Z_]{1,10}", json_value(), 0..5)
        .prop_map(|m| m.into_iter().collect())
}

fn method() -> impl Strategy<Value = Method> {
    prop_oneof![
        Just(Method::Register),
        Just(Method::Invite),
        Just(Method::Ack),
        Just(Method::Bye),
        Just(Method::Cancel),
    ]
}

fn sdp_body() -> impl Strategy<Value = SdpBody> {
    let cand = (any::<bool>(), any::<u32>(), any::<u16>()).prop_map(|(relay, a, port)| Candidate {
        kind: if relay {
            CandidateKind::Relay
        } else {
            CandidateKind::Host
        },
        address: Ipv4Addr::from(a),
        port,
    });
    (
        any::<u64>(),
        any::<u32>(),
        any::<u16>(),
        any::<u32>(),
        proptest::collection::vec(cand, 1..4),
        1u32..1000,
        proptest::collection::vec(any::<u8>(), 46),
    )
        .prop_map(
            |(session_id, a, media_port, ssrc, candidates, tag, key_salt)| SdpBody {
                session_id,
                address: Ipv4Addr::from(a),
                media_port,
                ssrc,
                candidates,
                crypto: CryptoAttr {
                    tag,
                    suite: "AES_256_CM_HMAC_SHA1_80".into(),
                    key_salt,
                },
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn http_round_trip(m in "[A-Z]{1,8}",
                       path in "/[a-zA-Z0-9/_.-]{0,20}",
                       headers in proptest::collection::vec(extra_header(), 0..6),
                       body in proptest::collection::vec(any::<u8>(), 0..64)) {
        let mut msg = HttpMessage::request(&m, &path);
        for (n, v) in &headers {
            msg = msg.with_header(n, v.clone());
        }
        let msg = msg.with_body("application/octet-stream", body);
        let bytes = http_serialize(&msg).unwrap();
        prop_assert_eq!(http_parse(&bytes).unwrap(), msg);
    }

    #[test]
    fn oobe_round_trip(name in "[a-zA-Z]{1,16}", args in json_map(), status in prop_oneof![Just(200u16), Just(400)]) {
        let env = OobeEnvelope { method: name, args };
        let req = http_serialize(&oobe_encode(&env).unwrap()).unwrap();
        prop_assert_eq!(oobe_decode(&http_parse(&req).unwrap()).unwrap(), env.clone());
        let resp = http_serialize(&oobe_encode_response(&env, status).unwrap()).unwrap();
        prop_assert_eq!(oobe_decode_response(&http_parse(&resp).unwrap()).unwrap(), (status, env));
    }

    #[test]
    fn sip_round_trip(m in method(),
                      uri in "sip:[a-z0-9.-]{1,12}@[a-z0-9.]{1,12}",
                      call_id in "[a-zA-Z0-9.@-]{1,20}",
                      cseq in any::<u32>(),
                      token in "[A-Za-z0-9+/=]{1,40}",
                      extra in proptest::collection::vec(extra_header(), 0..4),
                      sdp in proptest::option::of(sdp_body())) {
        let mut msg = SipMessage::request(m, uri)
            .with_header("Via", "SIP/2.0/TLS 10.0.0.1:5061;branch=z9hG4bK-1")
            .with_header("From", "<sip:a@x>;tag=1")
            .with_header("To", "<sip:b@x>")
            .with_header("Call-ID", call_id)
            .with_header("CSeq", format!("{cseq} {m}"))
            .with_header("X-authtoken", token.clone());
        for (n, v) in &extra {
            msg = msg.with_header(n, v.clone());
        }
        msg = match &sdp {
            Some(b) => msg.with_sdp(sdp_encode(b).unwrap()),
            None => msg.with_header("Content-Length", "0"),
        };
        let bytes = sip_serialize(&msg).unwrap();
        let back = sip_parse(&bytes).unwrap();
        prop_assert_eq!(back.auth_token(), Some(token.as_str()));
        prop_assert_eq!(&back, &msg);
        prop_assert_eq!(sip_serialize(&back).unwrap(), bytes);
        if let Some(b) = sdp {
            prop_assert_eq!(sdp_decode(&back.body).unwrap(), b);
        }
    }

    #[test]
    fn sdp_round_trip(b in sdp_body()) {
        let bytes = sdp_encode(&b).unwrap();
        prop_assert_eq!(sdp_decode(&bytes).unwrap(), b);
    }

    #[test]
    fn sdp_rejects_wrong_key_length(b in sdp_body(), n in (0usize..80).prop_filter("not 46", |n| *n != 46)) {
        let mut b = b;
        b.crypto.key_salt = vec![7; n];
        prop_assert!(sdp_encode(&b).is_err());
    }

    #[test]
    fn control_round_trip(iface in prop_oneof![Just("SipClient".to_string()), Just("System".to_string()), "[A-Z][a-z]{1,8}"],
                          name in prop_oneof![Just("BeginCall".to_string()), Just("EndCall".to_string()), "[A-Z][a-zA-Z]{1,12}"],
                          payload in json_value()) {
        let m = ControlMessage::new(&iface, &name, payload);
        let back = control_decode(&control_encode(&m)).unwrap();
        prop_assert_eq!(back, m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn parsers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let _ = http_parse(&bytes);
        let _ = sip_parse(&bytes);
        let _ = sdp_decode(&bytes);
        let _ = control_decode(&bytes);
        if let Ok(m) = http_parse(&bytes) {
            let _ = oobe_decode(&m);
            let _ = oobe_decode_response(&m);
        }
    }

    #[test]
    fn mutated_messages_never_panic(pos in any::<prop::sample::Index>(), byte in any::<u8>(), cut in any::<prop::sample::Index>()) {
        let sip = b"INVITE sip:b@x SIP/2.0\r\nVia: v\r\nFrom: <sip:a@x>\r\nTo: <sip:b@x>\r\nCall-ID: c\r\nCSeq: 1 INVITE\r\nX-authtoken: t\r\nContent-Length: 3\r\n\r\nabc";
        let http = b"POST /OOBE HTTP/1.1\r\nContent-Type: application/json\r\nContent-Length: 27\r\n\r\n{\"method\":\"ping\",\"args\":{}}";
        for base in [&sip[..], &http[..]] {
            let mut m = base.to_vec();
            let i = pos.index(m.len());
            m[i] = byte;
            m.truncate(cut.index(m.len() + 1));
            let _ = sip_parse(&m);
            if let Ok(h) = http_parse(&m) {
                let _ = oobe_decode(&h);
            }
        }
    }
}

#[test]
fn header_lookup_is_case_insensitive_and_order_preserving() {
    let raw = b"INVITE sip:b@x SIP/2.0\r\nvia: 1\r\nVia: 2\r\nFROM: <sip:a@x>\r\nto: <sip:b@x>\r\ncall-id: c\r\ncseq: 1 INVITE\r\nx-AuthToken: t\r\nContent-Length: 0\r\n\r\n";
    let m = sip_parse(raw).unwrap();
    assert_eq!(m.header_all("Via"), vec!["1", "2"]);
    assert_eq!(m.header("X-authtoken"), Some("t"));
    assert_eq!(sip_serialize(&m).unwrap(), raw);
}

#[test]
fn oobe_rejects_other_paths() {
    let m = HttpMessage::request("POST", "/other").with_body(
        "application/json",
        br#"{"method":"ping","args":{}}"#.to_vec(),
    );
    assert!(oobe_decode(&m).is_err());
}
