use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Error;

pub const NUM_SCHEMAS: usize = 14;

/// The fourteen image-schema classes, encoded `0..14` in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImageSchemaLabel {
    CenterPeriphery,
    Contact,
    Containment,
    Covering,
    Force,
    Link,
    Object,
    PartWhole,
    Scale,
    SourcePathGoal,
    Splitting,
    Substance,
    Support,
    Verticality,
}

impl ImageSchemaLabel {
    pub const ALL: [Self; NUM_SCHEMAS] = [
        Self::CenterPeriphery,
        Self::Contact,
        Self::Containment,
        Self::Covering,
        Self::Force,
        Self::Link,
        Self::Object,
        Self::PartWhole,
        Self::Scale,
        Self::SourcePathGoal,
        Self::Splitting,
        Self::Substance,
        Self::Support,
        Self::Verticality,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CenterPeriphery => "CENTER-PERIPHERY",
            Self::Contact => "CONTACT",
            Self::Containment => "CONTAINMENT",
            Self::Covering => "COVERING",
            Self::Force => "FORCE",
            Self::Link => "LINK",
            Self::Object => "OBJECT",
            Self::PartWhole => "PART-WHOLE",
            Self::Scale => "SCALE",
            Self::SourcePathGoal => "SOURCE_PATH_GOAL",
            Self::Splitting => "SPLITTING",
            Self::Substance => "SUBSTANCE",
            Self::Support => "SUPPORT",
            Self::Verticality => "VERTICALITY",
        }
    }

    /// The label as a 14-float one-hot vector.
    pub fn one_hot(self) -> [f64; NUM_SCHEMAS] {
        let mut v = [0.0; NUM_SCHEMAS];
        v[self.index()] = 1.0;
        v
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::as_str).join(", ")
    }
}

impl fmt::Display for ImageSchemaLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImageSchemaLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel {
                label: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

impl Serialize for ImageSchemaLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ImageSchemaLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_follows_listed_order() {
        for (i, l) in ImageSchemaLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(ImageSchemaLabel::from_index(i), Some(*l));
            assert_eq!(l.as_str().parse::<ImageSchemaLabel>().unwrap(), *l);
        }
        assert_eq!(ImageSchemaLabel::Verticality.index(), 13);
        assert_eq!(ImageSchemaLabel::from_index(14), None);
    }

    #[test]
    fn unknown_label_lists_all_valid_names() {
        let err = "PATH".parse::<ImageSchemaLabel>().unwrap_err().to_string();
        for l in ImageSchemaLabel::ALL {
            assert!(err.contains(l.as_str()), "{err}");
        }
        assert!(serde_json::from_str::<ImageSchemaLabel>("\"Contact\"").is_err());
        assert_eq!(
            serde_json::to_string(&ImageSchemaLabel::PartWhole).unwrap(),
            "\"PART-WHOLE\""
        );
    }
}
