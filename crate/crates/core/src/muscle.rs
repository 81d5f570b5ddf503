use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Recorded muscle. The four forelimb muscles have fixed labels; anything else is
/// carried verbatim.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum MuscleId {
    Fcr,
    Fds,
    Pt,
    Ecr,
    Other(String),
}

impl MuscleId {
    pub fn standard() -> [MuscleId; 4] {
        [MuscleId::Fcr, MuscleId::Fds, MuscleId::Pt, MuscleId::Ecr]
    }

    pub fn label(&self) -> &str {
        match self {
            MuscleId::Fcr => "FCR",
            MuscleId::Fds => "FDS",
            MuscleId::Pt => "PT",
            MuscleId::Ecr => "ECR",
            MuscleId::Other(s) => s,
        }
    }
}

impl fmt::Display for MuscleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<&str> for MuscleId {
    fn from(s: &str) -> Self {
        match s {
            "FCR" => MuscleId::Fcr,
            "FDS" => MuscleId::Fds,
            "PT" => MuscleId::Pt,
            "ECR" => MuscleId::Ecr,
            other => MuscleId::Other(other.to_string()),
        }
    }
}

impl From<String> for MuscleId {
    fn from(s: String) -> Self {
        MuscleId::from(s.as_str())
    }
}

impl From<MuscleId> for String {
    fn from(m: MuscleId) -> String {
        m.label().to_string()
    }
}

impl FromStr for MuscleId {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(MuscleId::from(s))
    }
}
