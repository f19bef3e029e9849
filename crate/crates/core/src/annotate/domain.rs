use std::net::IpAddr;

use url::Url;

/// Registrable domain (public-suffix + 1 label) of a URL, lowercased.
///
/// `https://www.pinterest.co.uk/pin/1` -> `pinterest.co.uk`. Scheme-less inputs
/// are read as `http://`. IP hosts and hosts without a known suffix are
/// returned as-is. `None` when no host can be parsed.
pub fn registrable_domain(raw: &str) -> Option<String> {
    let raw = raw.trim();
    let parsed = match Url::parse(raw) {
        Ok(u) => u,
        Err(url::ParseError::RelativeUrlWithoutBase) => Url::parse(&format!("http://{raw}")).ok()?,
        Err(_) => return None,
    };
    let host = parsed.host_str()?.trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() {
        return None;
    }
    if host.trim_matches(['[', ']']).parse::<IpAddr>().is_ok() {
        return Some(host);
    }
    match psl::domain_str(&host) {
        Some(d) => Some(d.to_string()),
        None => Some(host),
    }
}
