use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A closed label vocabulary (argument types or quality levels).
pub trait Label:
    Copy + Eq + Ord + Hash + fmt::Debug + fmt::Display + FromStr<Err = LabelParseError> + Send + Sync + 'static
{
    /// Every member, in canonical order.
    const ALL: &'static [Self];
    /// Name of the vocabulary, used in error messages and report sections.
    const FAMILY: &'static str;

    fn name(self) -> &'static str;

    fn ordinal(self) -> usize {
        Self::ALL.iter().position(|l| *l == self).expect("label is a member of ALL")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {family} label {value:?}")]
pub struct LabelParseError {
    pub family: &'static str,
    pub value: String,
}

/// Lowercase, drop whitespace, `_` and `-`: "Concluding  statement" -> "concludingstatement".
fn fold(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace() && *c != '_' && *c != '-').flat_map(char::to_lowercase).collect()
}

fn parse_label<L: Label>(s: &str) -> Result<L, LabelParseError> {
    let key = fold(s);
    L::ALL
        .iter()
        .copied()
        .find(|l| fold(l.name()) == key)
        .ok_or_else(|| LabelParseError { family: L::FAMILY, value: s.to_string() })
}

macro_rules! closed_label {
    ($(#[$meta:meta])* $name:ident, $family:literal, [$($variant:ident => $text:literal),+ $(,)?]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "&'static str")]
        pub enum $name {
            $($variant),+
        }

        impl Label for $name {
            const ALL: &'static [Self] = &[$(Self::$variant),+];
            const FAMILY: &'static str = $family;

            fn name(self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = LabelParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                parse_label(s)
            }
        }

        impl TryFrom<String> for $name {
            type Error = LabelParseError;

            fn try_from(s: String) -> Result<Self, Self::Error> {
                s.parse()
            }
        }

        impl From<$name> for &'static str {
            fn from(l: $name) -> Self {
                l.name()
            }
        }
    };
}

closed_label!(
    /// The seven argument component types.
    ArgType,
    "type",
    [
        Lead => "Lead",
        Position => "Position",
        Claim => "Claim",
        Counterclaim => "Counterclaim",
        Rebuttal => "Rebuttal",
        Evidence => "Evidence",
        ConcludingStatement => "Concluding Statement",
    ]
);

closed_label!(
    /// Effectiveness rating of an argument component, in increasing order.
    QualityLabel,
    "quality",
    [
        Ineffective => "Ineffective",
        Adequate => "Adequate",
        Effective => "Effective",
    ]
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_case_insensitively() {
        assert_eq!("lead".parse::<ArgType>().unwrap(), ArgType::Lead);
        assert_eq!("EVIDENCE".parse::<ArgType>().unwrap(), ArgType::Evidence);
        assert_eq!(" Position ".parse::<ArgType>().unwrap(), ArgType::Position);
        assert_eq!("adequate".parse::<QualityLabel>().unwrap(), QualityLabel::Adequate);
    }

    #[test]
    fn concluding_statement_spellings() {
        for s in ["Concluding Statement", "ConcludingStatement", "concluding  statement", "Concluding_Statement"] {
            assert_eq!(s.parse::<ArgType>().unwrap(), ArgType::ConcludingStatement, "{s}");
        }
        assert_eq!(ArgType::ConcludingStatement.to_string(), "Concluding Statement");
    }

    #[test]
    fn closed_sets() {
        assert_eq!(ArgType::ALL.len(), 7);
        assert_eq!(QualityLabel::ALL.len(), 3);
        let err = "Banana".parse::<ArgType>().unwrap_err();
        assert_eq!(err.family, "type");
        assert!("Good".parse::<QualityLabel>().is_err());
        assert!("".parse::<QualityLabel>().is_err());
    }

    #[test]
    fn serde_uses_canonical_names() {
        let json = serde_json::to_string(&ArgType::ConcludingStatement).unwrap();
        assert_eq!(json, "\"Concluding Statement\"");
        let back: ArgType = serde_json::from_str("\"concluding statement\"").unwrap();
        assert_eq!(back, ArgType::ConcludingStatement);
        assert!(serde_json::from_str::<QualityLabel>("\"Great\"").is_err());
    }

    #[test]
    fn ordinals_follow_canonical_order() {
        assert_eq!(ArgType::Lead.ordinal(), 0);
        assert_eq!(ArgType::ConcludingStatement.ordinal(), 6);
        assert_eq!(QualityLabel::Effective.ordinal(), 2);
    }
}
