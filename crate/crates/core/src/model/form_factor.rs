use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ValidationError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormFactorClass {
    Phone,
    Tablet,
    Desktop,
}

impl FormFactorClass {
    pub const ALL: [FormFactorClass; 3] = [
        FormFactorClass::Phone,
        FormFactorClass::Tablet,
        FormFactorClass::Desktop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FormFactorClass::Phone => "phone",
            FormFactorClass::Tablet => "tablet",
            FormFactorClass::Desktop => "desktop",
        }
    }
}

impl fmt::Display for FormFactorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormFactorClass {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phone" => Ok(FormFactorClass::Phone),
            "tablet" => Ok(FormFactorClass::Tablet),
            "desktop" => Ok(FormFactorClass::Desktop),
            other => Err(ValidationError::invalid(
                "form_factor",
                format!("unknown class {other:?}"),
            )),
        }
    }
}

/// Bucket boundaries for [`classify_form_factor`]. Upper bounds are exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormFactorBuckets {
    pub phone_max_diagonal_in: f64,
    pub tablet_max_diagonal_in: f64,
    pub phone_max_short_side_px: u32,
    pub tablet_max_short_side_px: u32,
}

impl Default for FormFactorBuckets {
    fn default() -> Self {
        FormFactorBuckets {
            phone_max_diagonal_in: 7.0,
            tablet_max_diagonal_in: 11.0,
            phone_max_short_side_px: 800,
            tablet_max_short_side_px: 1200,
        }
    }
}

impl FormFactorBuckets {
    pub fn classify(
        &self,
        width_px: u32,
        height_px: u32,
        diagonal_in: Option<f64>,
    ) -> Result<FormFactorClass, ValidationError> {
        if width_px == 0 || height_px == 0 {
            return Err(ValidationError::invalid(
                "form_factor",
                "dimensions must be positive",
            ));
        }
        if let Some(d) = diagonal_in {
            if !(d.is_finite() && d > 0.0) {
                return Err(ValidationError::invalid(
                    "ff_diagonal",
                    "diagonal must be a positive number",
                ));
            }
            return Ok(if d < self.phone_max_diagonal_in {
                FormFactorClass::Phone
            } else if d < self.tablet_max_diagonal_in {
                FormFactorClass::Tablet
            } else {
                FormFactorClass::Desktop
            });
        }
        let short = width_px.min(height_px);
        Ok(if short < self.phone_max_short_side_px {
            FormFactorClass::Phone
        } else if short < self.tablet_max_short_side_px {
            FormFactorClass::Tablet
        } else {
            FormFactorClass::Desktop
        })
    }
}

/// Classify a screen into one of the three served modes using the default
/// bucket boundaries.
pub fn classify_form_factor(
    width_px: u32,
    height_px: u32,
    diagonal_in: Option<f64>,
) -> Result<FormFactorClass, ValidationError> {
    FormFactorBuckets::default().classify(width_px, height_px, diagonal_in)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormFactor {
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal_in: Option<f64>,
    pub class: FormFactorClass,
}

impl FormFactor {
    pub fn new(
        width_px: u32,
        height_px: u32,
        diagonal_in: Option<f64>,
        buckets: &FormFactorBuckets,
    ) -> Result<Self, ValidationError> {
        let class = buckets.classify(width_px, height_px, diagonal_in)?;
        Ok(FormFactor {
            width_px,
            height_px,
            diagonal_in,
            class,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn named_examples() {
        assert_eq!(classify_form_factor(1080, 1920, Some(4.7)), Ok(FormFactorClass::Phone));
        assert_eq!(classify_form_factor(1, 1, None), Ok(FormFactorClass::Phone));
        assert_eq!(classify_form_factor(2560, 1600, Some(10.5)), Ok(FormFactorClass::Tablet));
    }

    #[test]
    fn boundaries() {
        assert_eq!(classify_form_factor(10, 10, Some(7.0)), Ok(FormFactorClass::Tablet));
        assert_eq!(classify_form_factor(10, 10, Some(6.999)), Ok(FormFactorClass::Phone));
        assert_eq!(classify_form_factor(10, 10, Some(11.0)), Ok(FormFactorClass::Desktop));
        assert_eq!(classify_form_factor(799, 5000, None), Ok(FormFactorClass::Phone));
        assert_eq!(classify_form_factor(800, 5000, None), Ok(FormFactorClass::Tablet));
        assert_eq!(classify_form_factor(1199, 1199, None), Ok(FormFactorClass::Tablet));
        assert_eq!(classify_form_factor(1920, 1200, None), Ok(FormFactorClass::Desktop));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(classify_form_factor(0, 10, None).is_err());
        assert!(classify_form_factor(10, 0, Some(5.0)).is_err());
        assert!(classify_form_factor(10, 10, Some(-1.0)).is_err());
        assert!(classify_form_factor(10, 10, Some(f64::NAN)).is_err());
    }

    #[test]
    fn overridden_buckets() {
        let b = FormFactorBuckets {
            phone_max_short_side_px: 400,
            ..Default::default()
        };
        assert_eq!(b.classify(412, 915, None), Ok(FormFactorClass::Tablet));
    }

    #[test]
    fn class_parses_case_insensitively() {
        assert_eq!("Tablet".parse::<FormFactorClass>(), Ok(FormFactorClass::Tablet));
        assert!("watch".parse::<FormFactorClass>().is_err());
    }

    proptest! {
        #[test]
        fn total_and_deterministic(w in 1u32..10_000, h in 1u32..10_000, d in proptest::option::of(0.1f64..40.0)) {
            let a = classify_form_factor(w, h, d).unwrap();
            prop_assert_eq!(a, classify_form_factor(w, h, d).unwrap());
            prop_assert!(FormFactorClass::ALL.contains(&a));
        }
    }
}
