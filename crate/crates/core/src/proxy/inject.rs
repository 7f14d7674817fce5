//! Client hook injection into origin HTML.

use serde::Serialize;

use super::state::{ConnectionClass, SessionState};

pub const SENTINEL: &str = "<!--ds-hook-->";

/// Bundled hook script, used when no hook path is configured.
pub const DEFAULT_HOOK: &[u8] = include_bytes!("../../assets/ds-hook.js");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DsStatus {
    Available,
    Missing,
    Expired,
}

impl DsStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DsStatus::Available => "available",
            DsStatus::Missing => "missing",
            DsStatus::Expired => "expired",
        }
    }
}

pub fn should_inject(session: &SessionState, status: DsStatus) -> bool {
    status != DsStatus::Available && session.connection_class != ConnectionClass::Cellular
}

#[derive(Clone, Debug, Serialize)]
pub struct HookConfig {
    pub post_path: String,
    pub max_capture_multiplier: u32,
    pub connection_gate: &'static str,
}

impl HookConfig {
    pub fn new(post_path: impl Into<String>) -> Self {
        HookConfig {
            post_path: post_path.into(),
            max_capture_multiplier: 2,
            connection_gate: "wifi-only",
        }
    }
}

/// The exact bytes inserted into a page.
#[derive(Clone, Debug)]
pub struct HookBlock {
    bytes: Vec<u8>,
}

impl HookBlock {
    pub fn new(hook: &[u8], config: &HookConfig) -> Self {
        let json = serde_json::to_string(config)
            .expect("hook config serializes")
            .replace("</", "<\\/");
        let mut bytes = Vec::with_capacity(hook.len() + json.len() + 128);
        bytes.extend_from_slice(SENTINEL.as_bytes());
        bytes.extend_from_slice(b"<script type=\"application/json\" id=\"ds-hook-config\">");
        bytes.extend_from_slice(json.as_bytes());
        bytes.extend_from_slice(b"</script><script id=\"ds-hook\">");
        bytes.extend_from_slice(hook);
        bytes.extend_from_slice(b"</script>");
        HookBlock { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

pub fn is_html_content_type(content_type: Option<&str>) -> bool {
    let Some(ct) = content_type else { return false };
    let mime = ct.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    mime == "text/html" || mime == "application/xhtml+xml"
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Offset of the last `</body>` (case-insensitive, optional whitespace before `>`).
pub fn last_body_close(html: &[u8]) -> Option<usize> {
    const TAG: &[u8] = b"</body";
    let mut end = html.len();
    while end >= TAG.len() {
        let start = html[..end]
            .windows(TAG.len())
            .rposition(|w| w.eq_ignore_ascii_case(TAG))?;
        let rest = &html[start + TAG.len()..];
        let ws = rest.iter().take_while(|b| b.is_ascii_whitespace()).count();
        if rest.get(ws) == Some(&b'>') {
            return Some(start);
        }
        end = start + TAG.len() - 1;
    }
    None
}

pub fn inject_hook(html: &[u8], block: &HookBlock) -> Vec<u8> {
    if contains(html, SENTINEL.as_bytes()) {
        return html.to_vec();
    }
    let at = last_body_close(html).unwrap_or(html.len());
    let mut out = Vec::with_capacity(html.len() + block.len());
    out.extend_from_slice(&html[..at]);
    out.extend_from_slice(block.as_bytes());
    out.extend_from_slice(&html[at..]);
    out
}

/// [`inject_hook`], gated on the response content type.
pub fn inject_response(content_type: Option<&str>, body: &[u8], block: &HookBlock) -> Option<Vec<u8>> {
    if !is_html_content_type(content_type) || contains(body, SENTINEL.as_bytes()) {
        return None;
    }
    Some(inject_hook(body, block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block() -> HookBlock {
        HookBlock::new(b"void 0;", &HookConfig::new("/__ds/post"))
    }

    fn remove_once(out: &[u8], block: &[u8]) -> Vec<u8> {
        let at = out.windows(block.len()).position(|w| w == block).expect("block present");
        let mut v = out[..at].to_vec();
        v.extend_from_slice(&out[at + block.len()..]);
        v
    }

    #[test]
    fn minimal_page() {
        let b = block();
        let out = inject_hook(b"<html><body>x</body></html>", &b);
        let mut expected = b"<html><body>x".to_vec();
        expected.extend_from_slice(b.as_bytes());
        expected.extend_from_slice(b"</body></html>");
        assert_eq!(out, expected);
        assert!(contains(&out, SENTINEL.as_bytes()));
        assert_eq!(inject_hook(&out, &b), out);
    }

    #[test]
    fn anchors() {
        let b = block();
        let page = b"<html><head></head><head></head><body>a</BODY ></body>tail";
        let out = inject_hook(page, &b);
        let at = out.windows(SENTINEL.len()).position(|w| w == SENTINEL.as_bytes()).unwrap();
        assert_eq!(&out[at + b.len()..], b"</body>tail");
        let no_body = b"<p>fragment";
        let out = inject_hook(no_body, &b);
        assert!(out.ends_with(b.as_bytes()));
        assert_eq!(last_body_close(b"</bodyx></body\n\t>"), Some(8));
        assert_eq!(last_body_close(b"</body"), None);
        assert_eq!(last_body_close(b"</bod>"), None);
    }

    #[test]
    fn content_type_gate() {
        let b = block();
        assert!(inject_response(Some("application/json"), b"</body>", &b).is_none());
        assert!(inject_response(None, b"</body>", &b).is_none());
        assert!(inject_response(Some("Text/HTML; charset=utf-8"), b"</body>", &b).is_some());
    }

    #[test]
    fn should_inject_table() {
        let mut s = SessionState::new("a");
        s.connection_class = ConnectionClass::Wifi;
        assert!(should_inject(&s, DsStatus::Missing));
        assert!(should_inject(&s, DsStatus::Expired));
        assert!(!should_inject(&s, DsStatus::Available));
        s.connection_class = ConnectionClass::Unknown;
        assert!(should_inject(&s, DsStatus::Missing));
        s.connection_class = ConnectionClass::Cellular;
        assert!(!should_inject(&s, DsStatus::Missing));
        assert!(!should_inject(&s, DsStatus::Expired));
    }

    #[test]
    fn config_cannot_close_script() {
        let b = HookBlock::new(b"", &HookConfig::new("/</script>"));
        let s = String::from_utf8(b.as_bytes().to_vec()).unwrap();
        assert_eq!(s.matches("</script>").count(), 2);
    }

    proptest! {
        #[test]
        fn preserves_bytes(html in proptest::collection::vec(any::<u8>(), 0..400), body in any::<bool>()) {
            let mut html = html;
            if body {
                html.extend_from_slice(b"</body>");
            }
            prop_assume!(!contains(&html, SENTINEL.as_bytes()));
            let b = block();
            let out = inject_hook(&html, &b);
            prop_assert_eq!(remove_once(&out, b.as_bytes()), html);
            prop_assert_eq!(inject_hook(&out, &b), out);
        }
    }
}
