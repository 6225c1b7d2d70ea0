use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DetoxError;

/// Supported languages, identified by their ISO 639-1 codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "xh")]
    Xhosa,
    #[serde(rename = "yo")]
    Yoruba,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::Xhosa, Language::Yoruba];

    pub fn code(self) -> &'static str {
        match self {
            Language::Xhosa => "xh",
            Language::Yoruba => "yo",
        }
    }

    /// Default decision threshold on the toxic-class probability.
    pub fn default_threshold(self) -> f64 {
        match self {
            Language::Xhosa => 0.45,
            Language::Yoruba => 0.50,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = DetoxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xh" => Ok(Language::Xhosa),
            "yo" => Ok(Language::Yoruba),
            other => Err(DetoxError::UnknownLanguage(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for lang in Language::ALL {
            assert_eq!(lang.code().parse::<Language>().unwrap(), lang);
        }
        assert!("zz".parse::<Language>().is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(Language::Xhosa.default_threshold(), 0.45);
        assert_eq!(Language::Yoruba.default_threshold(), 0.50);
    }
}
