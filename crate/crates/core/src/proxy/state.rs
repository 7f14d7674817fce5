//! Per-request and per-session proxy state.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestTag {
    Clean,
    PreRendering,
    Snapshot,
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestTag::Clean => "clean",
            RequestTag::PreRendering => "pre-rendering",
            RequestTag::Snapshot => "snapshot",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProxyRequestState {
    pub tag: RequestTag,
    pub created_at: Timestamp,
    pub url: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectionClass {
    Wifi,
    Cellular,
    Unknown,
}

impl ConnectionClass {
    /// Parse a connection hint; anything unrecognised is `Unknown`.
    pub fn from_hint(hint: Option<&str>) -> Self {
        match hint.map(|h| h.trim().to_ascii_lowercase()) {
            Some(h) if h == "wifi" || h == "wi-fi" => ConnectionClass::Wifi,
            Some(h) if h == "cellular" => ConnectionClass::Cellular,
            _ => ConnectionClass::Unknown,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionState {
    pub session_id: String,
    pub connection_class: ConnectionClass,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            connection_class: ConnectionClass::Unknown,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("illegal request-state transition {from} -> {to}")]
pub struct TransitionError {
    pub from: RequestTag,
    pub to: RequestTag,
}

type StateKey = (String, String);

/// Request states keyed by `(session, canonical url)`.
///
/// A state starts `clean`, may move once to `pre-rendering` or `snapshot`,
/// and is then cleared, either explicitly or by [`RequestStateTable::expire_states`].
#[derive(Debug)]
pub struct RequestStateTable {
    timeout: Duration,
    entries: Mutex<HashMap<StateKey, ProxyRequestState>>,
}

impl RequestStateTable {
    pub fn new(timeout: Duration) -> Self {
        RequestStateTable {
            timeout,
            entries: Mutex::new(HashMap::new()),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<StateKey, ProxyRequestState>> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Insert a fresh `clean` state, replacing whatever was there.
    pub fn begin(&self, session: &str, url: &str, now: Timestamp) {
        self.lock().insert(
            (session.to_owned(), url.to_owned()),
            ProxyRequestState {
                tag: RequestTag::Clean,
                created_at: now,
                url: url.to_owned(),
            },
        );
    }

    /// Move a `clean` state to `to`.
    pub fn transition(&self, session: &str, url: &str, to: RequestTag) -> Result<(), TransitionError> {
        let mut entries = self.lock();
        let key = (session.to_owned(), url.to_owned());
        match entries.get_mut(&key) {
            Some(s) if s.tag == RequestTag::Clean && to != RequestTag::Clean => {
                s.tag = to;
                Ok(())
            }
            Some(s) => Err(TransitionError { from: s.tag, to }),
            None => Err(TransitionError {
                from: RequestTag::Clean,
                to,
            }),
        }
    }

    pub fn get(&self, session: &str, url: &str) -> Option<ProxyRequestState> {
        self.lock().get(&(session.to_owned(), url.to_owned())).cloned()
    }

    /// Remove the state only if it currently carries `tag`. Atomic.
    pub fn take_if(&self, session: &str, url: &str, tag: RequestTag) -> Option<ProxyRequestState> {
        let mut entries = self.lock();
        let key = (session.to_owned(), url.to_owned());
        if entries.get(&key).is_some_and(|s| s.tag == tag) {
            entries.remove(&key)
        } else {
            None
        }
    }

    pub fn clear(&self, session: &str, url: &str) -> Option<ProxyRequestState> {
        self.lock().remove(&(session.to_owned(), url.to_owned()))
    }

    /// Drop states older than the timeout (strictly); returns how many.
    pub fn expire_states(&self, now: Timestamp) -> usize {
        let mut entries = self.lock();
        let before = entries.len();
        entries.retain(|_, s| now.since(s.created_at) <= self.timeout);
        before - entries.len()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, tag: RequestTag) -> usize {
        self.lock().values().filter(|s| s.tag == tag).count()
    }
}

/// Session connection hints. A hint, once seen, sticks to the session.
#[derive(Debug, Default)]
pub struct SessionTable {
    sessions: Mutex<HashMap<String, SessionState>>,
}

impl SessionTable {
    pub fn observe(&self, session_id: &str, hint: Option<&str>) -> SessionState {
        let mut sessions = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        let entry = sessions
            .entry(session_id.to_owned())
            .or_insert_with(|| SessionState::new(session_id));
        let class = ConnectionClass::from_hint(hint);
        if class != ConnectionClass::Unknown {
            entry.connection_class = class;
        }
        entry.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: &str = "s1";

    #[test]
    fn transitions() {
        let t = RequestStateTable::new(Duration::from_secs(30));
        t.begin(S, "http://a.com/", Timestamp(0));
        assert_eq!(t.transition(S, "http://a.com/", RequestTag::Snapshot), Ok(()));
        assert_eq!(
            t.transition(S, "http://a.com/", RequestTag::PreRendering),
            Err(TransitionError {
                from: RequestTag::Snapshot,
                to: RequestTag::PreRendering
            })
        );
        assert!(t.take_if(S, "http://a.com/", RequestTag::PreRendering).is_none());
        assert!(t.take_if(S, "http://a.com/", RequestTag::Snapshot).is_some());
        assert!(t.is_empty());
        assert!(t.transition(S, "http://a.com/", RequestTag::Snapshot).is_err());
    }

    #[test]
    fn expiry() {
        let t = RequestStateTable::new(Duration::from_secs(30));
        assert_eq!(t.expire_states(Timestamp(0)), 0);
        t.begin(S, "http://a.com/", Timestamp(0));
        assert_eq!(t.expire_states(Timestamp(31_000)), 1);

        let now = 100_000;
        for (i, age_ms) in [5_000u64, 29_000, 30_100].iter().enumerate() {
            t.begin(S, &format!("http://a{i}.com/"), Timestamp(now - age_ms));
        }
        t.begin(S, "http://edge.com/", Timestamp(now - 30_000));
        assert_eq!(t.expire_states(Timestamp(now)), 1);
        assert_eq!(t.len(), 3);
        assert!(t.get(S, "http://a2.com/").is_none());
    }

    #[test]
    fn sessions_remember_hints() {
        let s = SessionTable::default();
        assert_eq!(s.observe("x", None).connection_class, ConnectionClass::Unknown);
        assert_eq!(s.observe("x", Some("cellular")).connection_class, ConnectionClass::Cellular);
        assert_eq!(s.observe("x", None).connection_class, ConnectionClass::Cellular);
        assert_eq!(s.observe("x", Some("WiFi")).connection_class, ConnectionClass::Wifi);
        assert_eq!(s.observe("y", Some("bogus")).connection_class, ConnectionClass::Unknown);
    }
}
