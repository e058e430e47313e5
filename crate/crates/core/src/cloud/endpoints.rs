/// Cloud endpoints a client or device talks to, picked by locale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointSet {
    pub name: &'static str,
    pub api: String,
    pub avs: String,
}

pub const REGIONS: &[&str] = &["na", "eu", "fe"];

pub fn region_for_locale(locale: &str) -> &'static str {
    let lang = locale
        .split(['-', '_'])
        .next()
        .unwrap_or_default()
        .to_ascii_lowercase();
    match lang.as_str() {
        "de" | "fr" | "es" | "it" => "eu",
        "ja" => "fe",
        _ => "na",
    }
}

pub fn endpoint_set(locale: &str) -> EndpointSet {
    region(region_for_locale(locale))
}

pub fn region(name: &'static str) -> EndpointSet {
    EndpointSet {
        name,
        api: format!("api.{name}.cloud.test"),
        avs: format!("avs.{name}.cloud.test"),
    }
}

/// Every regional hostname; the device's pairing resolver answers these.
pub fn regional_hostnames() -> Vec<String> {
    REGIONS
        .iter()
        .flat_map(|r| {
            let e = region(r);
            [e.api, e.avs]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn german_locale_selects_eu() {
        assert_eq!(endpoint_set("de").name, "eu");
        assert_eq!(endpoint_set("de-DE").api, "api.eu.cloud.test");
        assert_eq!(endpoint_set("en-US").name, "na");
        assert_eq!(endpoint_set("ja-JP").name, "fe");
    }
}
