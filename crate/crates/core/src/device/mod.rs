//! The Echo emulator: pairing-mode OOBE server and 443 proxy, registration
//! polling, the voice-service connection and the embedded SIP user agent.

use std::net::Ipv4Addr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::crypto::{keygen, self_sign, AsymKeypair, DeviceCertificate};

mod node;

pub use node::{Device, RegistrationStatus};

/// Address the device takes on its pairing network.
pub const PAIRING_ADDR: Ipv4Addr = Ipv4Addr::new(192, 168, 0, 1);
/// Addresses other models use; clients probe all of them.
pub const PAIRING_ALTERNATES: [Ipv4Addr; 2] = [
    Ipv4Addr::new(192, 168, 0, 20),
    Ipv4Addr::new(192, 168, 0, 254),
];
pub const CHECK_LINK_CODE_INTERVAL_MS: u64 = 2_000;
pub const PING_ACK: &str = "echo-oobe";

/// Every address a pairing client should probe.
pub fn pairing_candidates() -> Vec<Ipv4Addr> {
    let mut v = vec![PAIRING_ADDR];
    v.extend(PAIRING_ALTERNATES);
    v
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeviceError {
    #[error("serial {0:?} has fewer than 3 digits")]
    SerialDigits(String),
    #[error("already in pairing mode")]
    AlreadyPairing,
    #[error("mode transition {from:?} -> {to:?} not allowed")]
    Transition { from: DeviceMode, to: DeviceMode },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceMode {
    Factory,
    Pairing,
    Paired,
}

impl DeviceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceMode::Factory => "factory",
            DeviceMode::Pairing => "pairing",
            DeviceMode::Paired => "paired",
        }
    }

    pub fn can_enter(self, to: DeviceMode) -> bool {
        matches!(
            (self, to),
            (DeviceMode::Factory, DeviceMode::Pairing)
                | (DeviceMode::Pairing, DeviceMode::Paired)
                | (DeviceMode::Paired, DeviceMode::Pairing)
        )
    }
}

/// "Amazon-" followed by the last three digit characters of the serial.
pub fn derive_pairing_ssid(serial: &str) -> Result<String, DeviceError> {
    let digits: Vec<char> = serial.chars().filter(char::is_ascii_digit).collect();
    if digits.len() < 3 {
        return Err(DeviceError::SerialDigits(serial.to_string()));
    }
    let tail: String = digits[digits.len() - 3..].iter().collect();
    Ok(format!("Amazon-{tail}"))
}

/// Factory-provisioned identity.
#[derive(Debug, Clone)]
pub struct DeviceIdentity {
    pub device_type: String,
    pub serial: String,
    pub secret: [u8; 32],
    pub keypair: AsymKeypair,
    pub certificate: DeviceCertificate,
    pub software_version: String,
    pub locale: String,
    pub mac: String,
    pub pairing_addr: Ipv4Addr,
}

impl DeviceIdentity {
    pub fn generate(
        device_type: &str,
        serial: &str,
        locale: &str,
        rng: &mut impl RngCore,
    ) -> Result<Self, DeviceError> {
        derive_pairing_ssid(serial)?;
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        let keypair = keygen(rng);
        let certificate = self_sign(&keypair, serial);
        let mut mac = [0u8; 6];
        rng.fill_bytes(&mut mac);
        mac[0] = (mac[0] & 0xfe) | 0x02;
        let mac = mac
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<Vec<_>>()
            .join(":");
        Ok(DeviceIdentity {
            device_type: device_type.to_string(),
            serial: serial.to_string(),
            secret,
            keypair,
            certificate,
            software_version: "5470237316".to_string(),
            locale: locale.to_string(),
            mac,
            pairing_addr: PAIRING_ADDR,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn ssid_from_last_three_digits() {
        assert_eq!(derive_pairing_ssid("AB12CD345").unwrap(), "Amazon-345");
        assert_eq!(derive_pairing_ssid("000").unwrap(), "Amazon-000");
        assert_eq!(derive_pairing_ssid("G0A9B1C").unwrap(), "Amazon-091");
        assert_eq!(
            derive_pairing_ssid("ABCDEF"),
            Err(DeviceError::SerialDigits("ABCDEF".into()))
        );
        assert!(derive_pairing_ssid("A1B2").is_err());
    }

    #[test]
    fn mode_transitions() {
        use DeviceMode::*;
        assert!(Factory.can_enter(Pairing));
        assert!(Pairing.can_enter(Paired));
        assert!(Paired.can_enter(Pairing));
        assert!(!Factory.can_enter(Paired));
        assert!(!Paired.can_enter(Factory));
        assert!(!Pairing.can_enter(Factory));
    }

    #[test]
    fn identity_is_deterministic_and_certified() {
        let a = DeviceIdentity::generate(
            "A3S5BH2HU6VAYF",
            "G090LF1172610345",
            "en-US",
            &mut ChaCha20Rng::seed_from_u64(3),
        )
        .unwrap();
        let b = DeviceIdentity::generate(
            "A3S5BH2HU6VAYF",
            "G090LF1172610345",
            "en-US",
            &mut ChaCha20Rng::seed_from_u64(3),
        )
        .unwrap();
        assert_eq!(a.secret, b.secret);
        assert_eq!(a.certificate, b.certificate);
        assert_eq!(a.certificate.subject, a.serial);
        assert!(a.certificate.verify());
        assert!(DeviceIdentity::generate(
            "T",
            "NODIGITS",
            "en-US",
            &mut ChaCha20Rng::seed_from_u64(3)
        )
        .is_err());
    }
}
