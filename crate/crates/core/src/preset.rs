use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ged::CostModel;
use crate::scene::Variant;

/// Dataset family: grid scenes with location programs, or relational
/// scenes with multi-hop relation programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Css,
    Crir,
}

impl Preset {
    pub fn variant(self) -> Variant {
        match self {
            Preset::Css => Variant::Grid,
            Preset::Crir => Variant::Relational,
        }
    }

    pub fn cost_model(self) -> CostModel {
        match self {
            Preset::Css => CostModel::css(),
            Preset::Crir => CostModel::crir(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Css => "css",
            Preset::Crir => "crir",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "css" => Ok(Preset::Css),
            "crir" => Ok(Preset::Crir),
            other => Err(format!("unknown preset {other:?} (expected css or crir)")),
        }
    }
}
