use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use echo_testbed_ffi::*;

fn cstr(p: *const std::ffi::c_char) -> String {
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn version_matches_crate() {
    assert_eq!(cstr(et_version()), env!("CARGO_PKG_VERSION"));
}

#[test]
fn builtin_run_through_handle() {
    let mut run = ptr::null_mut();
    let st = unsafe { et_run_builtin(c"avs_handshake".as_ptr(), 0, 1, &mut run) };
    assert_eq!(st, EtStatus::Ok);
    unsafe {
        assert_eq!(et_run_passed(run), 1);
        assert!(et_run_event_count(run) > 0);
        let jsonl = cstr(et_run_trace_jsonl(run));
        assert_eq!(jsonl.lines().count(), et_run_event_count(run));
        assert_eq!(cstr(et_run_trace_hash(run)).len(), 64);

        let n = et_run_verdict_count(run);
        assert!(n > 0);
        let mut buf = [0u8; 512];
        let mut len = 0usize;
        assert_eq!(
            et_run_verdict(run, 0, buf.as_mut_ptr(), buf.len(), &mut len),
            EtStatus::Ok
        );
        assert!(buf[..len].starts_with(b"PASS "));
        assert_eq!(
            et_run_verdict(run, 0, buf.as_mut_ptr(), 2, &mut len),
            EtStatus::BufferTooSmall
        );
        assert!(len > 2);
        assert_eq!(
            et_run_verdict(run, n, buf.as_mut_ptr(), buf.len(), &mut len),
            EtStatus::InvalidArgument
        );
        et_run_free(run);
    }
}

#[test]
fn same_seed_same_hash_through_abi() {
    let hash = |seed| unsafe {
        let mut run = ptr::null_mut();
        assert_eq!(
            et_run_builtin(c"pair".as_ptr(), seed, 0, &mut run),
            EtStatus::Ok
        );
        let h = cstr(et_run_trace_hash(run));
        et_run_free(run);
        h
    };
    assert_eq!(hash(5), hash(5));
    assert_ne!(hash(5), hash(6));
}

#[test]
fn error_codes_and_messages() {
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(
            et_run_builtin(c"nope".as_ptr(), 0, 1, &mut run),
            EtStatus::UnknownScenario
        );
        assert!(run.is_null());
        assert!(cstr(et_last_error()).contains("nope"));
        assert_eq!(
            et_run_builtin(ptr::null(), 0, 1, &mut run),
            EtStatus::NullArgument
        );
        assert_eq!(
            et_run_json(c"{\"name\":1}".as_ptr(), &mut run),
            EtStatus::ScenarioParse
        );
        assert_eq!(et_run_passed(ptr::null()), -1);
        assert!(et_run_trace_jsonl(ptr::null()).is_null());
        et_run_free(ptr::null_mut());
        et_srtp_free(ptr::null_mut());
    }
}

#[test]
fn srtp_round_trip_and_replay() {
    let key = [7u8; 32];
    let salt = [9u8; 14];
    let (mut tx, mut rx) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(
            et_srtp_new(key.as_ptr(), 32, salt.as_ptr(), 14, 0x1234, &mut tx),
            EtStatus::Ok
        );
        assert_eq!(
            et_srtp_new(key.as_ptr(), 32, salt.as_ptr(), 14, 0x1234, &mut rx),
            EtStatus::Ok
        );
        assert_eq!(
            et_srtp_new(key.as_ptr(), 31, salt.as_ptr(), 14, 1, &mut rx),
            EtStatus::InvalidArgument
        );
        assert_eq!(
            et_srtp_new(key.as_ptr(), 32, salt.as_ptr(), 14, 0x1234, &mut rx),
            EtStatus::Ok
        );

        let msg = b"hello media";
        let mut pkt = [0u8; 64];
        let mut plen = 0usize;
        assert_eq!(
            et_srtp_protect(
                tx,
                msg.as_ptr(),
                msg.len(),
                pkt.as_mut_ptr(),
                pkt.len(),
                &mut plen
            ),
            EtStatus::Ok
        );
        assert_eq!(plen, msg.len() + 22);

        let mut out = [0u8; 64];
        let mut olen = 0usize;
        assert_eq!(
            et_srtp_unprotect(
                rx,
                pkt.as_ptr(),
                plen,
                out.as_mut_ptr(),
                out.len(),
                &mut olen
            ),
            EtStatus::Ok
        );
        assert_eq!(&out[..olen], msg);
        assert_eq!(
            et_srtp_unprotect(
                rx,
                pkt.as_ptr(),
                plen,
                out.as_mut_ptr(),
                out.len(),
                &mut olen
            ),
            EtStatus::Replay
        );

        let mut pkt2 = [0u8; 64];
        et_srtp_protect(
            tx,
            msg.as_ptr(),
            msg.len(),
            pkt2.as_mut_ptr(),
            pkt2.len(),
            &mut plen,
        );
        pkt2[14] ^= 1;
        assert_eq!(
            et_srtp_unprotect(
                rx,
                pkt2.as_ptr(),
                plen,
                out.as_mut_ptr(),
                out.len(),
                &mut olen
            ),
            EtStatus::Auth
        );
        et_srtp_free(tx);
        et_srtp_free(rx);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("include/echo_testbed.h"),
    )
    .unwrap();
    for f in [
        "et_version",
        "et_last_error",
        "et_scenario_count",
        "et_scenario_name",
        "et_run_builtin",
        "et_run_json",
        "et_run_passed",
        "et_run_event_count",
        "et_run_verdict_count",
        "et_run_verdict",
        "et_run_trace_jsonl",
        "et_run_trace_hash",
        "et_run_free",
        "et_srtp_new",
        "et_srtp_protect",
        "et_srtp_unprotect",
        "et_srtp_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct EtRun EtRun;"));
    assert!(header.contains("ET_STATUS_REPLAY = 8"));
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"echo_testbed.h\"\nint probe(void) { EtRun *r = 0; return et_run_builtin(\"pair\", 0, 1, &r) == ET_STATUS_OK; }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler; skipping");
            return;
        }
    };
    assert!(status.success());
}
