use super::WireError;

/// Ordered, repeatable header list shared by the HTTP and SIP codecs.
///
/// Lookup is case-insensitive; serialization writes entries in insertion
/// order with the original name spelling.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Headers(Vec<(String, String)>);

impl Headers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.0
            .iter()
            .filter(move |(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.push((name.into(), value.into()));
    }

    /// Replaces the first occurrence of `name` in place, or appends.
    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        let value = value.into();
        match self
            .0
            .iter_mut()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
        {
            Some(slot) => slot.1 = value,
            None => self.0.push((name.to_string(), value)),
        }
    }

    /// Inserts before every existing entry (used for proxy Via stacking).
    pub fn prepend(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.insert(0, (name.into(), value.into()));
    }

    /// Removes the first occurrence of `name` and returns its value.
    pub fn remove_first(&mut self, name: &str) -> Option<String> {
        let idx = self
            .0
            .iter()
            .position(|(n, _)| n.eq_ignore_ascii_case(name))?;
        Some(self.0.remove(idx).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn parse_line(line: &str) -> Result<(String, String), WireError> {
        let (name, value) = line
            .split_once(':')
            .ok_or_else(|| WireError::MalformedHeader(line.to_string()))?;
        let name = name.trim_end();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(WireError::MalformedHeader(line.to_string()));
        }
        Ok((name.to_string(), value.trim().to_string()))
    }

    /// Writes `Name: value\r\n` for each entry, with `Content-Length` forced to
    /// `body_len` (in place when present, appended otherwise).
    pub(crate) fn write_framed(
        &self,
        out: &mut Vec<u8>,
        length_names: &[&str],
        body_len: usize,
    ) -> Result<(), WireError> {
        let mut wrote_len = false;
        for (name, value) in &self.0 {
            check_field(name)?;
            check_field(value)?;
            let is_len = length_names.iter().any(|l| name.eq_ignore_ascii_case(l));
            if is_len {
                if wrote_len {
                    continue;
                }
                wrote_len = true;
                out.extend_from_slice(format!("{name}: {body_len}\r\n").as_bytes());
            } else {
                out.extend_from_slice(name.as_bytes());
                out.extend_from_slice(b": ");
                out.extend_from_slice(value.as_bytes());
                out.extend_from_slice(b"\r\n");
            }
        }
        if !wrote_len {
            out.extend_from_slice(format!("Content-Length: {body_len}\r\n").as_bytes());
        }
        out.extend_from_slice(b"\r\n");
        Ok(())
    }
}

impl<N: Into<String>, V: Into<String>> FromIterator<(N, V)> for Headers {
    fn from_iter<T: IntoIterator<Item = (N, V)>>(iter: T) -> Self {
        Headers(
            iter.into_iter()
                .map(|(n, v)| (n.into(), v.into()))
                .collect(),
        )
    }
}

fn check_field(s: &str) -> Result<(), WireError> {
    if s.bytes().any(|b| b == b'\r' || b == b'\n') {
        return Err(WireError::HeaderInjection(s.escape_debug().to_string()));
    }
    Ok(())
}

/// Splits `bytes` at the first blank line. Returns (head, body).
pub(crate) fn split_head(bytes: &[u8]) -> Result<(&str, &[u8]), WireError> {
    let pos = bytes
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or(WireError::Incomplete)?;
    let head = std::str::from_utf8(&bytes[..pos]).map_err(|_| WireError::NotUtf8)?;
    Ok((head, &bytes[pos + 4..]))
}

/// Applies Content-Length framing to the bytes following the head.
pub(crate) fn framed_body(declared: Option<&str>, rest: &[u8]) -> Result<Vec<u8>, WireError> {
    match declared {
        None if rest.is_empty() => Ok(Vec::new()),
        None => Err(WireError::MissingContentLength),
        Some(v) => {
            let len: usize = v
                .trim()
                .parse()
                .map_err(|_| WireError::BadContentLength(v.to_string()))?;
            match rest.len().cmp(&len) {
                std::cmp::Ordering::Equal => Ok(rest.to_vec()),
                std::cmp::Ordering::Less => Err(WireError::BodyLengthMismatch {
                    declared: len,
                    actual: rest.len(),
                }),
                std::cmp::Ordering::Greater => Err(WireError::TrailingBytes(rest.len() - len)),
            }
        }
    }
}
