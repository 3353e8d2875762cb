use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Binary class tag. Serialized as `1` / `-1`; `0`, `"positive"`, `"negative"`
/// are also accepted on input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    /// Sign rule with ties resolved to the positive class.
    pub fn from_decision(f: f64) -> Label {
        if f >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        })
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.sign() as i8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Label;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("1, -1, 0, \"positive\" or \"negative\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Label, E> {
                match v {
                    1 => Ok(Label::Positive),
                    -1 | 0 => Ok(Label::Negative),
                    _ => Err(E::custom(format!("label must be binary, got {v}"))),
                }
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Label, E> {
                self.visit_i64(v as i64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Label, E> {
                match v.to_ascii_lowercase().as_str() {
                    "positive" | "+1" | "1" => Ok(Label::Positive),
                    "negative" | "-1" | "0" => Ok(Label::Negative),
                    _ => Err(E::custom(format!("unknown label {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Hidden per-instance concept tag used by synthetic ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concept {
    Positive,
    Negative,
}
