//! Domain types shared by the proxy, the snapshot service and the harness.

mod error;
mod form_factor;
mod link;
mod payload;
mod png;
mod raster;
mod record;
mod url;

pub use error::ValidationError;
pub use form_factor::{classify_form_factor, FormFactor, FormFactorBuckets, FormFactorClass};
pub use link::LinkRect;
pub use payload::{validate_ds_post, DsPostPayload, PartSizes, PART_NAMES};
pub use png::{decode_png, encode_bilevel_png, encode_png, is_png, PNG_SIGNATURE};
pub use raster::{Raster, Rgba};
pub use record::{RecordMeta, SnapshotRecord};
pub use url::{canonicalize_url, ds_get_path, url_from_ds_path};
