use url::Url;

use super::ValidationError;

/// Canonical form used to key snapshots: scheme and host lowercased, default
/// port removed, fragment dropped. Query strings are kept verbatim.
pub fn canonicalize_url(raw: &str) -> Result<String, ValidationError> {
    let mut url = Url::parse(raw.trim()).map_err(|e| ValidationError::invalid("url", e.to_string()))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(ValidationError::invalid("url", "scheme must be http or https"));
    }
    if url.host_str().is_none_or(str::is_empty) {
        return Err(ValidationError::invalid("url", "missing host"));
    }
    if !url.username().is_empty() || url.password().is_some() {
        return Err(ValidationError::invalid("url", "credentials are not allowed"));
    }
    url.set_fragment(None);
    Ok(url.into())
}

/// Path (plus query) of the DS GET request for a canonical URL:
/// `http://www.a.com/x?q=1` becomes `/www.a.com/x?q=1`.
pub fn ds_get_path(canonical: &str) -> Result<String, ValidationError> {
    let url = Url::parse(canonical).map_err(|e| ValidationError::invalid("url", e.to_string()))?;
    let host = url
        .host_str()
        .ok_or_else(|| ValidationError::invalid("url", "missing host"))?;
    let mut out = String::with_capacity(canonical.len());
    out.push('/');
    out.push_str(host);
    if let Some(port) = url.port() {
        out.push(':');
        out.push_str(&port.to_string());
    }
    out.push_str(url.path());
    if let Some(q) = url.query() {
        out.push('?');
        out.push_str(q);
    }
    Ok(out)
}

/// Inverse of [`ds_get_path`]: rebuild the canonical page URL from a DS GET
/// request path such as `/www.a.com/x` and its raw query.
pub fn url_from_ds_path(path: &str, query: Option<&str>) -> Result<String, ValidationError> {
    let rest = path
        .strip_prefix('/')
        .ok_or_else(|| ValidationError::invalid("path", "must start with /"))?;
    let (authority, page_path) = match rest.find('/') {
        Some(i) => rest.split_at(i),
        None => (rest, "/"),
    };
    if authority.is_empty()
        || !authority
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'-' | b':' | b'_'))
    {
        return Err(ValidationError::invalid("path", "missing or malformed host"));
    }
    let mut raw = format!("http://{authority}{page_path}");
    if let Some(q) = query {
        raw.push('?');
        raw.push_str(q);
    }
    canonicalize_url(&raw).map_err(|e| match e {
        ValidationError::InvalidField { reason, .. } => ValidationError::invalid("path", reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_form() {
        assert_eq!(canonicalize_url("HTTP://WWW.A.com:80/x?b=2&a=1#frag").unwrap(), "http://www.a.com/x?b=2&a=1");
        assert_eq!(canonicalize_url("http://www.a.com").unwrap(), "http://www.a.com/");
        assert_eq!(canonicalize_url("http://a.com:8080/P").unwrap(), "http://a.com:8080/P");
        assert!(canonicalize_url("ftp://a.com/").is_err());
        assert!(canonicalize_url("not a url").is_err());
        assert!(canonicalize_url("http://u:p@a.com/").is_err());
    }

    #[test]
    fn ds_path_round_trip() {
        let u = "http://www.a.com/news/today?id=4";
        let p = ds_get_path(u).unwrap();
        assert_eq!(p, "/www.a.com/news/today?id=4");
        assert_eq!(url_from_ds_path("/www.a.com/news/today", Some("id=4")).unwrap(), u);
        assert_eq!(url_from_ds_path("/www.a.com", None).unwrap(), "http://www.a.com/");
        assert_eq!(ds_get_path("http://a.com:8080/").unwrap(), "/a.com:8080/");
    }

    #[test]
    fn malformed_ds_paths() {
        assert!(url_from_ds_path("/", None).is_err());
        assert!(url_from_ds_path("", None).is_err());
        assert!(url_from_ds_path("/bad host/x", None).is_err());
        assert!(url_from_ds_path("/a.com:notaport/", None).is_err());
    }

    proptest! {
        #[test]
        fn canonicalization_is_idempotent(
            host in "[a-wyzA-WYZ][a-zA-Z0-9-]{0,10}(\\.[a-zA-Z]{2,5}){1,2}",
            port in proptest::option::of(prop_oneof![Just(80u16), 1024u16..65000]),
            path in "(/[a-zA-Z0-9._~-]{0,8}){0,4}",
            query in proptest::option::of("[a-z0-9]{1,5}=[a-zA-Z0-9]{0,6}(&[a-z]{1,4}=[0-9]{0,3}){0,3}"),
            frag in proptest::option::of("[a-z]{0,6}"),
        ) {
            let mut raw = format!("HtTp://{host}");
            if let Some(p) = port { raw.push_str(&format!(":{p}")); }
            raw.push_str(&path);
            if let Some(q) = &query { raw.push('?'); raw.push_str(q); }
            if let Some(f) = &frag { raw.push('#'); raw.push_str(f); }
            let once = canonicalize_url(&raw).unwrap();
            prop_assert_eq!(canonicalize_url(&once).unwrap(), once.clone());
            prop_assert!(!once.contains('#'));
            let back = {
                let p = ds_get_path(&once).unwrap();
                let (path, q) = match p.split_once('?') { Some((a, b)) => (a.to_string(), Some(b.to_string())), None => (p, None) };
                url_from_ds_path(&path, q.as_deref()).unwrap()
            };
            prop_assert_eq!(back, once);
        }
    }
}
