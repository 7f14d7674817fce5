//! Pre-render token handling.
//!
//! The interstitial page points its pre-render hint at the original URL with
//! one extra query parameter. The proxy recognises that parameter, strips
//! it, and sends the request straight to the origin. Both directions work on
//! the raw string so every other byte of the URL is preserved.

pub const DEFAULT_TOKEN_NAME: &str = "__ds_prerender";

fn split_fragment(url: &str) -> (&str, &str) {
    match url.find('#') {
        Some(i) => url.split_at(i),
        None => (url, ""),
    }
}

/// Append `{token_name}=1` to the query of `url`. An existing empty query
/// still gets a `&` so stripping restores it.
pub fn tokenize_url(url: &str, token_name: &str) -> String {
    let (head, frag) = split_fragment(url);
    let sep = if head.contains('?') { "&" } else { "?" };
    format!("{head}{sep}{token_name}=1{frag}")
}

/// Detect and remove the pre-render token. Returns the input unchanged when
/// no token parameter is present. A query left empty by the removal loses
/// its `?`.
pub fn detect_prerender_token(url: &str, token_name: &str) -> (bool, String) {
    let (head, frag) = split_fragment(url);
    let Some(q) = head.find('?') else {
        return (false, url.to_owned());
    };
    let (base, query) = (&head[..q], &head[q + 1..]);
    let marker = format!("{token_name}=1");
    let total = query.split('&').count();
    let kept: Vec<&str> = query.split('&').filter(|p| *p != marker).collect();
    if kept.len() == total {
        return (false, url.to_owned());
    }
    let mut out = String::with_capacity(url.len());
    out.push_str(base);
    if !kept.is_empty() {
        out.push('?');
        out.push_str(&kept.join("&"));
    }
    out.push_str(frag);
    (true, out)
}
