//! Cloud-side records and the request handlers that do not touch the network.

use std::collections::{BTreeMap, BTreeSet};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use hmac::{Hmac, Mac};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;

use crate::avs::{split_negotiation, NegotiationClaims, NEGOTIATION_WINDOW_S};
use crate::calling::CommsConfig;
use crate::crypto::{
    keygen, mint_auth_token, mint_call_token, open_auth_token, verify_detached, AsymKeypair,
    AuthToken, CallAuthToken, CallType, PublicKey,
};

pub const LINK_CODE_ALPHABET: &[u8; 36] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
pub const LINK_CODE_LEN: usize = 5;
pub const LINK_CODE_TTL_S: u64 = 600;
pub const CALL_TOKEN_TTL_S: u32 = 120;
pub const COMMS_DOMAIN: &str = "comms.cloud.test";
pub const PSTN_DOMAIN: &str = "pstn.cloud.test";
pub const REGISTRAR_HOST: &str = "sip.cloud.test";
pub const REGISTRAR_PORT: u16 = 443;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CloudError {
    #[error("unauthorized")]
    Unauthorized,
    #[error("bad cookie")]
    BadCookie,
    #[error("invalid link code")]
    InvalidCode,
    #[error("already registered")]
    AlreadyRegistered,
    #[error("unknown account {0}")]
    UnknownAccount(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("session not authenticated")]
    Unauthenticated,
    #[error("negotiation rejected: {0}")]
    Rejected(&'static str),
}

#[derive(Debug, Clone)]
pub struct InventoryRecord {
    pub device_type: String,
    pub serial: String,
    pub secret: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkState {
    Pending,
    Registered,
    Expired,
}

/// What a registered device receives: its private key, an auth token and the
/// name the account gave it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub private_key: String,
    pub auth_token: String,
    pub friendly_name: String,
}

#[derive(Debug, Clone)]
pub struct LinkCodeRecord {
    pub code: String,
    pub serial: String,
    pub state: LinkState,
    pub account: Option<String>,
    pub grant: Option<Grant>,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkCheck {
    Pending,
    Granted(Grant),
    Expired,
}

#[derive(Debug, Clone)]
pub struct Account {
    pub id: String,
    pub password: String,
    pub cookies: BTreeSet<String>,
    pub signing: AsymKeypair,
    pub devices: BTreeSet<String>,
    pub friendly_names: BTreeMap<String, String>,
}

/// An authenticated voice-service connection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvsSession {
    pub account: String,
    pub serial: String,
}

pub fn account_uri(account: &str) -> String {
    format!("sip:acct-{account}@{COMMS_DOMAIN}")
}

pub fn device_uri(serial: &str) -> String {
    format!("sip:dev-{serial}@{COMMS_DOMAIN}")
}

pub fn phone_uri(number: &str) -> String {
    format!("sip:{number}@{PSTN_DOMAIN}")
}

pub fn friendly_name(serial: &str) -> String {
    let tail: String = serial
        .chars()
        .rev()
        .take(4)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    format!("Echo-{tail}")
}

pub struct CloudState {
    pub keypair: AsymKeypair,
    comms_secret: [u8; 32],
    pub inventory: BTreeMap<String, InventoryRecord>,
    pub codes: BTreeMap<String, LinkCodeRecord>,
    pub accounts: BTreeMap<String, Account>,
    cookies: BTreeMap<String, String>,
    pub owners: BTreeMap<String, String>,
    pub grant_keys: BTreeMap<String, PublicKey>,
    pub drop_in_grants: BTreeSet<(String, String)>,
    pub phone_contacts: BTreeSet<String>,
    pub link_code_regenerations: u64,
}

impl CloudState {
    pub fn new(rng: &mut impl RngCore) -> Self {
        let keypair = keygen(rng);
        let mut comms_secret = [0u8; 32];
        rng.fill_bytes(&mut comms_secret);
        CloudState {
            keypair,
            comms_secret,
            inventory: BTreeMap::new(),
            codes: BTreeMap::new(),
            accounts: BTreeMap::new(),
            cookies: BTreeMap::new(),
            owners: BTreeMap::new(),
            grant_keys: BTreeMap::new(),
            drop_in_grants: BTreeSet::new(),
            phone_contacts: BTreeSet::new(),
            link_code_regenerations: 0,
        }
    }

    pub fn add_inventory(&mut self, device_type: &str, serial: &str, secret: [u8; 32]) {
        self.inventory.insert(
            serial.to_string(),
            InventoryRecord {
                device_type: device_type.to_string(),
                serial: serial.to_string(),
                secret,
            },
        );
    }

    pub fn add_account(&mut self, id: &str, password: &str, rng: &mut impl RngCore) {
        self.accounts.insert(
            id.to_string(),
            Account {
                id: id.to_string(),
                password: password.to_string(),
                cookies: BTreeSet::new(),
                signing: keygen(rng),
                devices: BTreeSet::new(),
                friendly_names: BTreeMap::new(),
            },
        );
    }

    pub fn login(
        &mut self,
        id: &str,
        password: &str,
        rng: &mut impl RngCore,
    ) -> Result<String, CloudError> {
        let acct = self.accounts.get_mut(id).ok_or(CloudError::Unauthorized)?;
        if !bool::from(acct.password.as_bytes().ct_eq(password.as_bytes())) {
            return Err(CloudError::Unauthorized);
        }
        let mut raw = [0u8; 12];
        rng.fill_bytes(&mut raw);
        let cookie = format!("cookie-canary-{}", hex::encode(raw));
        acct.cookies.insert(cookie.clone());
        self.cookies.insert(cookie.clone(), id.to_string());
        Ok(cookie)
    }

    pub fn account_for_cookie(&self, cookie: &str) -> Option<&str> {
        self.cookies.get(cookie).map(String::as_str)
    }

    fn check_secret(
        &self,
        device_type: Option<&str>,
        serial: &str,
        secret: &[u8],
    ) -> Result<(), CloudError> {
        let rec = self.inventory.get(serial).ok_or(CloudError::Unauthorized)?;
        if device_type.is_some_and(|t| t != rec.device_type) {
            return Err(CloudError::Unauthorized);
        }
        if secret.len() != rec.secret.len() || !bool::from(rec.secret.ct_eq(secret)) {
            return Err(CloudError::Unauthorized);
        }
        Ok(())
    }

    fn is_live(rec: &LinkCodeRecord, now_s: u64) -> bool {
        rec.state != LinkState::Expired && now_s < rec.created_at + LINK_CODE_TTL_S
    }

    /// Issues a fresh code for `serial`, expiring any earlier one.
    pub fn create_link_code(
        &mut self,
        device_type: &str,
        serial: &str,
        secret: &[u8],
        now_s: u64,
        rng: &mut impl RngCore,
    ) -> Result<String, CloudError> {
        self.check_secret(Some(device_type), serial, secret)?;
        for rec in self.codes.values_mut().filter(|r| r.serial == serial) {
            rec.state = LinkState::Expired;
        }
        let code = loop {
            let c = random_code(rng);
            match self.codes.get(&c) {
                Some(r) if Self::is_live(r, now_s) => self.link_code_regenerations += 1,
                _ => break c,
            }
        };
        self.codes.insert(
            code.clone(),
            LinkCodeRecord {
                code: code.clone(),
                serial: serial.to_string(),
                state: LinkState::Pending,
                account: None,
                grant: None,
                created_at: now_s,
            },
        );
        Ok(code)
    }

    /// Device-side poll. The grant is minted on the first poll after
    /// registration and returned unchanged on every later poll.
    pub fn check_link_code(
        &mut self,
        serial: &str,
        secret: &[u8],
        code: &str,
        now_s: u64,
        rng: &mut impl RngCore,
    ) -> Result<LinkCheck, CloudError> {
        self.check_secret(None, serial, secret)?;
        let Some(rec) = self.codes.get(code) else {
            return Ok(LinkCheck::Expired);
        };
        if rec.serial != serial {
            return Err(CloudError::Unauthorized);
        }
        match rec.state {
            LinkState::Expired => return Ok(LinkCheck::Expired),
            LinkState::Pending if !Self::is_live(rec, now_s) => {
                self.codes.get_mut(code).unwrap().state = LinkState::Expired;
                return Ok(LinkCheck::Expired);
            }
            LinkState::Pending => return Ok(LinkCheck::Pending),
            LinkState::Registered => {}
        }
        if let Some(g) = &rec.grant {
            return Ok(LinkCheck::Granted(g.clone()));
        }
        let account = rec
            .account
            .clone()
            .expect("registered codes carry an account");
        let grant = self.mint_grant(serial, &account, now_s, rng);
        self.codes.get_mut(code).unwrap().grant = Some(grant.clone());
        Ok(LinkCheck::Granted(grant))
    }

    fn mint_grant(
        &mut self,
        serial: &str,
        account: &str,
        now_s: u64,
        rng: &mut impl RngCore,
    ) -> Grant {
        let device_key = keygen(rng);
        let token = mint_auth_token(&self.keypair, account, serial, now_s, rng);
        self.grant_keys
            .insert(serial.to_string(), *device_key.public());
        let name = self
            .accounts
            .get(account)
            .and_then(|a| a.friendly_names.get(serial).cloned())
            .unwrap_or_else(|| friendly_name(serial));
        Grant {
            private_key: B64.encode(device_key.to_secret_bytes()),
            auth_token: token.to_text(),
            friendly_name: name,
        }
    }

    /// Associates `serial` with the cookie's account.
    pub fn register_device(
        &mut self,
        cookie: &str,
        device_type: &str,
        serial: &str,
        code: &str,
        now_s: u64,
    ) -> Result<String, CloudError> {
        let account = self
            .account_for_cookie(cookie)
            .ok_or(CloudError::BadCookie)?
            .to_string();
        let rec = self.codes.get(code).ok_or(CloudError::InvalidCode)?;
        if !Self::is_live(rec, now_s) || rec.serial != serial || rec.state == LinkState::Registered
        {
            return Err(CloudError::InvalidCode);
        }
        match self.inventory.get(serial) {
            Some(inv) if inv.device_type == device_type => {}
            _ => return Err(CloudError::InvalidCode),
        }
        if let Some(owner) = self.owners.get(serial) {
            if *owner != account {
                return Err(CloudError::AlreadyRegistered);
            }
        }
        self.bind_owner(serial, &account);
        let rec = self.codes.get_mut(code).unwrap();
        rec.state = LinkState::Registered;
        rec.account = Some(account.clone());
        Ok(self.accounts[&account].friendly_names[serial].clone())
    }

    fn bind_owner(&mut self, serial: &str, account: &str) {
        self.owners.insert(serial.to_string(), account.to_string());
        let acct = self.accounts.get_mut(account).expect("account exists");
        acct.devices.insert(serial.to_string());
        acct.friendly_names
            .entry(serial.to_string())
            .or_insert_with(|| friendly_name(serial));
    }

    /// Records the purchase-time association.
    pub fn preregister(&mut self, serial: &str, account: &str) -> Result<(), CloudError> {
        if !self.accounts.contains_key(account) {
            return Err(CloudError::UnknownAccount(account.to_string()));
        }
        if !self.inventory.contains_key(serial) {
            return Err(CloudError::UnknownDevice(serial.to_string()));
        }
        if self.owners.get(serial).is_some_and(|o| o != account) {
            return Err(CloudError::AlreadyRegistered);
        }
        self.bind_owner(serial, account);
        Ok(())
    }

    pub fn deregister(&mut self, serial: &str) -> Option<String> {
        let owner = self.owners.remove(serial)?;
        if let Some(a) = self.accounts.get_mut(&owner) {
            a.devices.remove(serial);
            a.friendly_names.remove(serial);
        }
        self.grant_keys.remove(serial);
        Some(owner)
    }

    /// Registers and grants in one step, for devices that start out paired.
    pub fn provision(
        &mut self,
        serial: &str,
        account: &str,
        now_s: u64,
        rng: &mut impl RngCore,
    ) -> Result<Grant, CloudError> {
        self.preregister(serial, account)?;
        Ok(self.mint_grant(serial, account, now_s, rng))
    }

    /// Checks a NegotiationCommand payload.
    pub fn avs_accept(
        &self,
        payload: &serde_json::Value,
        now_s: u64,
    ) -> Result<AvsSession, CloudError> {
        let (signed, sig) = split_negotiation(payload).ok_or(CloudError::Rejected("malformed"))?;
        let claims: NegotiationClaims =
            serde_json::from_slice(&signed).map_err(|_| CloudError::Rejected("malformed"))?;
        let token =
            AuthToken::from_text(&claims.auth_token).map_err(|_| CloudError::Rejected("token"))?;
        let opened =
            open_auth_token(&self.keypair, &token).map_err(|_| CloudError::Rejected("token"))?;
        if opened.serial != claims.serial {
            return Err(CloudError::Rejected("token/serial mismatch"));
        }
        match self.inventory.get(&claims.serial) {
            Some(inv) if inv.device_type == claims.device_type => {}
            _ => return Err(CloudError::Rejected("unknown device")),
        }
        if self.owners.get(&claims.serial) != Some(&opened.account) {
            return Err(CloudError::Rejected("not owned by token account"));
        }
        let key = self
            .grant_keys
            .get(&claims.serial)
            .ok_or(CloudError::Rejected("no grant"))?;
        if !verify_detached(key, &signed, &sig) {
            return Err(CloudError::Rejected("signature"));
        }
        if now_s.abs_diff(claims.timestamp) > NEGOTIATION_WINDOW_S {
            return Err(CloudError::Rejected("stale timestamp"));
        }
        Ok(AvsSession {
            account: opened.account,
            serial: claims.serial,
        })
    }

    fn comms_credential(&self, device_uri: &str) -> String {
        let mut mac = Hmac::<Sha256>::new_from_slice(&self.comms_secret).expect("any key length");
        mac.update(device_uri.as_bytes());
        hex::encode(&mac.finalize().into_bytes()[..16])
    }

    pub fn configure_comms(&self, session: Option<&AvsSession>) -> Result<CommsConfig, CloudError> {
        let s = session.ok_or(CloudError::Unauthenticated)?;
        let device = device_uri(&s.serial);
        Ok(CommsConfig {
            sip_username: format!("dev-{}", s.serial),
            registrar_domain: COMMS_DOMAIN.to_string(),
            registrar_host: REGISTRAR_HOST.to_string(),
            registrar_port: REGISTRAR_PORT,
            credential: self.comms_credential(&device),
            account_uri: account_uri(&s.account),
            device_uri: device,
        })
    }

    /// Registration check for the SIP registrar. Returns the account URI the
    /// device may bind alongside its device URI.
    pub fn check_sip_credential(&self, device_uri_: &str, credential: &str) -> Option<String> {
        let expected = self.comms_credential(device_uri_);
        if !bool::from(expected.as_bytes().ct_eq(credential.as_bytes())) {
            return None;
        }
        let serial = device_uri_
            .strip_prefix("sip:dev-")?
            .strip_suffix(&format!("@{COMMS_DOMAIN}"))?;
        self.owners.get(serial).map(|a| account_uri(a))
    }

    pub fn account_by_uri(&self, uri: &str) -> Option<&Account> {
        let id = uri
            .strip_prefix("sip:acct-")?
            .strip_suffix(&format!("@{COMMS_DOMAIN}"))?;
        self.accounts.get(id)
    }

    pub fn grant_drop_in(&mut self, caller_account: &str, callee_account: &str) {
        self.drop_in_grants
            .insert((caller_account.to_string(), callee_account.to_string()));
    }

    pub fn may_drop_in(&self, caller_account: &str, callee_account: &str) -> bool {
        self.drop_in_grants
            .contains(&(caller_account.to_string(), callee_account.to_string()))
    }

    pub fn mint_call(
        &self,
        caller_account: &str,
        callee_uri: &str,
        call_type: CallType,
        now_s: u64,
        rng: &mut impl RngCore,
    ) -> Result<CallAuthToken, CloudError> {
        let acct = self
            .accounts
            .get(caller_account)
            .ok_or_else(|| CloudError::UnknownAccount(caller_account.to_string()))?;
        mint_call_token(
            &acct.signing,
            &account_uri(caller_account),
            callee_uri,
            call_type,
            CALL_TOKEN_TTL_S,
            now_s,
            rng,
        )
        .map_err(|_| CloudError::Unauthorized)
    }
}

pub fn random_code(rng: &mut impl RngCore) -> String {
    (0..LINK_CODE_LEN)
        .map(|_| LINK_CODE_ALPHABET[rng.gen_range(0..LINK_CODE_ALPHABET.len())] as char)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avs::build_negotiation;
    use crate::crypto::AsymKeypair;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const SERIAL: &str = "G090LF1172340567";
    const TYPE: &str = "AB72C64C86AW2";
    const SECRET: [u8; 32] = [7; 32];

    fn cloud() -> (CloudState, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut c = CloudState::new(&mut rng);
        c.add_inventory(TYPE, SERIAL, SECRET);
        c.add_account("alice", "pw-a", &mut rng);
        c.add_account("mallory", "pw-m", &mut rng);
        (c, rng)
    }

    #[test]
    fn link_code_shape_and_secret_gate() {
        let (mut c, mut rng) = cloud();
        let code = c
            .create_link_code(TYPE, SERIAL, &SECRET, 0, &mut rng)
            .unwrap();
        assert!(regex::Regex::new("^[A-Z0-9]{5}$").unwrap().is_match(&code));
        assert_eq!(
            c.create_link_code(TYPE, SERIAL, &[0; 32], 0, &mut rng),
            Err(CloudError::Unauthorized)
        );
        assert_eq!(
            c.create_link_code(TYPE, "nope", &SECRET, 0, &mut rng),
            Err(CloudError::Unauthorized)
        );
    }

    #[test]
    fn new_code_expires_old_one() {
        let (mut c, mut rng) = cloud();
        let old = c
            .create_link_code(TYPE, SERIAL, &SECRET, 0, &mut rng)
            .unwrap();
        let new = c
            .create_link_code(TYPE, SERIAL, &SECRET, 1, &mut rng)
            .unwrap();
        assert_ne!(old, new);
        assert_eq!(
            c.check_link_code(SERIAL, &SECRET, &old, 2, &mut rng),
            Ok(LinkCheck::Expired)
        );
        assert_eq!(
            c.check_link_code(SERIAL, &SECRET, &new, 2, &mut rng),
            Ok(LinkCheck::Pending)
        );
    }

    #[test]
    fn grant_is_released_once_and_idempotently() {
        let (mut c, mut rng) = cloud();
        let code = c
            .create_link_code(TYPE, SERIAL, &SECRET, 0, &mut rng)
            .unwrap();
        let cookie = c.login("alice", "pw-a", &mut rng).unwrap();
        assert!(cookie.starts_with("cookie-canary-"));
        assert_eq!(
            c.register_device(&cookie, TYPE, SERIAL, &code, 5),
            Ok("Echo-0567".into())
        );
        assert_eq!(
            c.check_link_code(SERIAL, &[1; 32], &code, 6, &mut rng),
            Err(CloudError::Unauthorized)
        );
        let LinkCheck::Granted(g1) = c
            .check_link_code(SERIAL, &SECRET, &code, 6, &mut rng)
            .unwrap()
        else {
            panic!("expected grant")
        };
        let LinkCheck::Granted(g2) = c
            .check_link_code(SERIAL, &SECRET, &code, 8, &mut rng)
            .unwrap()
        else {
            panic!("expected grant")
        };
        assert_eq!(g1, g2);
        assert!(!g1.friendly_name.is_empty());
    }

    #[test]
    fn code_expires_after_ttl() {
        let (mut c, mut rng) = cloud();
        let code = c
            .create_link_code(TYPE, SERIAL, &SECRET, 0, &mut rng)
            .unwrap();
        assert_eq!(
            c.check_link_code(SERIAL, &SECRET, &code, LINK_CODE_TTL_S, &mut rng),
            Ok(LinkCheck::Expired)
        );
        let cookie = c.login("alice", "pw-a", &mut rng).unwrap();
        assert_eq!(
            c.register_device(&cookie, TYPE, SERIAL, &code, LINK_CODE_TTL_S),
            Err(CloudError::InvalidCode)
        );
    }

    #[test]
    fn registered_device_cannot_be_taken_by_another_account() {
        let (mut c, mut rng) = cloud();
        c.preregister(SERIAL, "alice").unwrap();
        let code = c
            .create_link_code(TYPE, SERIAL, &SECRET, 0, &mut rng)
            .unwrap();
        let evil = c.login("mallory", "pw-m", &mut rng).unwrap();
        assert_eq!(
            c.register_device(&evil, TYPE, SERIAL, &code, 1),
            Err(CloudError::AlreadyRegistered)
        );
        let good = c.login("alice", "pw-a", &mut rng).unwrap();
        assert!(c.register_device(&good, TYPE, SERIAL, &code, 1).is_ok());
    }

    #[test]
    fn deregistered_device_can_be_taken() {
        let (mut c, mut rng) = cloud();
        c.preregister(SERIAL, "alice").unwrap();
        c.deregister(SERIAL);
        let code = c
            .create_link_code(TYPE, SERIAL, &SECRET, 0, &mut rng)
            .unwrap();
        let evil = c.login("mallory", "pw-m", &mut rng).unwrap();
        assert!(c.register_device(&evil, TYPE, SERIAL, &code, 1).is_ok());
        assert_eq!(c.owners[SERIAL], "mallory");
    }

    #[test]
    fn bad_cookie_and_bad_login() {
        let (mut c, mut rng) = cloud();
        let code = c
            .create_link_code(TYPE, SERIAL, &SECRET, 0, &mut rng)
            .unwrap();
        assert_eq!(
            c.register_device("x", TYPE, SERIAL, &code, 1),
            Err(CloudError::BadCookie)
        );
        assert_eq!(
            c.login("alice", "wrong", &mut rng),
            Err(CloudError::Unauthorized)
        );
    }

    fn negotiation(
        c: &mut CloudState,
        rng: &mut ChaCha20Rng,
        ts: u64,
    ) -> (serde_json::Value, Grant) {
        let g = c.provision(SERIAL, "alice", 0, rng).unwrap();
        let key = AsymKeypair::from_secret_bytes(&B64.decode(&g.private_key).unwrap()).unwrap();
        let claims = NegotiationClaims {
            device_type: TYPE.into(),
            serial: SERIAL.into(),
            auth_token: g.auth_token.clone(),
            timestamp: ts,
        };
        (build_negotiation(&claims, &key), g)
    }

    #[test]
    fn avs_accepts_valid_and_rejects_stale() {
        let (mut c, mut rng) = cloud();
        let (p, _) = negotiation(&mut c, &mut rng, 1000);
        assert_eq!(
            c.avs_accept(&p, 1000),
            Ok(AvsSession {
                account: "alice".into(),
                serial: SERIAL.into()
            })
        );
        assert_eq!(c.avs_accept(&p, 1300), Ok(c.avs_accept(&p, 1000).unwrap()));
        assert_eq!(
            c.avs_accept(&p, 1600),
            Err(CloudError::Rejected("stale timestamp"))
        );
    }

    #[test]
    fn avs_rejects_token_for_other_serial() {
        let (mut c, mut rng) = cloud();
        c.add_inventory(TYPE, "OTHER999", [9; 32]);
        let (_, g) = negotiation(&mut c, &mut rng, 10);
        let key = AsymKeypair::from_secret_bytes(&B64.decode(&g.private_key).unwrap()).unwrap();
        let claims = NegotiationClaims {
            device_type: TYPE.into(),
            serial: "OTHER999".into(),
            auth_token: g.auth_token,
            timestamp: 10,
        };
        let p = build_negotiation(&claims, &key);
        assert_eq!(
            c.avs_accept(&p, 10),
            Err(CloudError::Rejected("token/serial mismatch"))
        );
    }

    #[test]
    fn comms_config_is_stable_and_shares_account_uri() {
        let (mut c, mut rng) = cloud();
        c.add_inventory(TYPE, "SECOND222", [2; 32]);
        c.provision(SERIAL, "alice", 0, &mut rng).unwrap();
        c.provision("SECOND222", "alice", 0, &mut rng).unwrap();
        let s1 = AvsSession {
            account: "alice".into(),
            serial: SERIAL.into(),
        };
        let s2 = AvsSession {
            account: "alice".into(),
            serial: "SECOND222".into(),
        };
        let a = c.configure_comms(Some(&s1)).unwrap();
        let b = c.configure_comms(Some(&s2)).unwrap();
        assert_eq!(a.account_uri, b.account_uri);
        assert_ne!(a.device_uri, b.device_uri);
        assert_eq!(a, c.configure_comms(Some(&s1)).unwrap());
        assert_eq!(c.configure_comms(None), Err(CloudError::Unauthenticated));
        assert_eq!(
            c.check_sip_credential(&a.device_uri, &a.credential),
            Some(a.account_uri.clone())
        );
        assert_eq!(c.check_sip_credential(&a.device_uri, &b.credential), None);
    }
}
