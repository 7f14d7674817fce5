use serde::{Deserialize, Serialize};

use super::ValidationError;

/// A hyperlink and its bounding box in page pixels. `right` and `bottom`
/// are exclusive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkRect {
    pub url: String,
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

#[derive(Deserialize)]
struct WireLink {
    url: String,
    left: f64,
    top: f64,
    right: f64,
    bottom: f64,
}

impl LinkRect {
    pub fn new(url: impl Into<String>, left: u32, top: u32, right: u32, bottom: u32) -> Result<Self, ValidationError> {
        let link = LinkRect {
            url: url.into(),
            left,
            top,
            right,
            bottom,
        };
        link.check()?;
        Ok(link)
    }

    fn check(&self) -> Result<(), ValidationError> {
        if self.left >= self.right || self.top >= self.bottom {
            return Err(ValidationError::invalid("links", format!("empty rectangle for {}", self.url)));
        }
        url::Url::parse(&self.url)
            .map_err(|e| ValidationError::invalid("links", format!("{}: {e}", self.url)))?;
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.right - self.left
    }

    pub fn height(&self) -> u32 {
        self.bottom - self.top
    }

    /// Parse the JSON array carried in the `links` part. Fractional
    /// coordinates are widened outward to whole pixels.
    pub fn parse_list(json: &[u8]) -> Result<Vec<LinkRect>, ValidationError> {
        let wire: Vec<WireLink> =
            serde_json::from_slice(json).map_err(|e| ValidationError::invalid("links", e.to_string()))?;
        wire.into_iter()
            .enumerate()
            .map(|(i, w)| {
                let coords = [w.left, w.top, w.right, w.bottom];
                if coords.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > u32::MAX as f64) {
                    return Err(ValidationError::invalid("links", format!("links[{i}]: coordinates out of range")));
                }
                let link = LinkRect {
                    url: w.url,
                    left: w.left.floor() as u32,
                    top: w.top.floor() as u32,
                    right: w.right.ceil() as u32,
                    bottom: w.bottom.ceil() as u32,
                };
                link.check()
                    .map_err(|_| ValidationError::invalid("links", format!("links[{i}]: invalid link")))?;
                Ok(link)
            })
            .collect()
    }

    pub fn list_to_json(links: &[LinkRect]) -> String {
        serde_json::to_string(links).expect("link serialization is infallible")
    }

    /// Clamp horizontal extents to `width`; `None` when nothing remains.
    pub fn clamp_to_width(&self, width: u32) -> Option<LinkRect> {
        let left = self.left.min(width);
        let right = self.right.min(width);
        (left < right).then(|| LinkRect {
            left,
            right,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_widens_fractional_coordinates() {
        let json = br#"[{"url":"http://a.com/x","left":1.5,"top":2,"right":10.2,"bottom":20}]"#;
        let links = LinkRect::parse_list(json).unwrap();
        assert_eq!(links, vec![LinkRect::new("http://a.com/x", 1, 2, 11, 20).unwrap()]);
    }

    #[test]
    fn round_trips_through_json() {
        let links = vec![
            LinkRect::new("http://a.com/", 0, 0, 5, 5).unwrap(),
            LinkRect::new("http://b.com/q?x=1", 3, 9, 300, 12).unwrap(),
        ];
        let json = LinkRect::list_to_json(&links);
        assert_eq!(LinkRect::parse_list(json.as_bytes()).unwrap(), links);
    }

    #[test]
    fn rejects_bad_links() {
        assert!(LinkRect::parse_list(b"{}").is_err());
        assert!(LinkRect::parse_list(br#"[{"url":"http://a.com","left":-1,"top":0,"right":2,"bottom":2}]"#).is_err());
        assert!(LinkRect::parse_list(br#"[{"url":"http://a.com","left":5,"top":0,"right":5,"bottom":2}]"#).is_err());
        assert!(LinkRect::parse_list(br#"[{"url":"relative/x","left":0,"top":0,"right":5,"bottom":2}]"#).is_err());
        assert!(LinkRect::parse_list(br#"[{"url":"http://a.com","left":0,"top":0}]"#).is_err());
        assert_eq!(LinkRect::parse_list(b"[]").unwrap(), vec![]);
    }

    #[test]
    fn clamps_horizontally() {
        let l = LinkRect::new("http://a.com/", 300, 0, 400, 10).unwrap();
        assert_eq!(l.clamp_to_width(360).unwrap().right, 360);
        assert_eq!(l.clamp_to_width(300), None);
    }
}
