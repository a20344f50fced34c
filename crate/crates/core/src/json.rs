use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

/// An `f64` written with 17 significant digits, so a decimal round-trip is
/// bit-exact. Non-finite values are written as `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exact(pub f64);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Exact)
    }
}

/// `serialize_with` helper for plain `f64` fields.
pub fn serialize_exact<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    Exact(*v).serialize(s)
}
