//! Signal-level verification, slicing and preference-pair construction for
//! generated Verilog.

use serde::{Deserialize, Serialize};

pub mod dpomath;
pub mod frontend;
pub mod pipeline;
pub mod preference;
pub mod siggraph;
pub mod simulator;
pub mod stimulus;
pub mod verifier;

/// A signal of the design, identified by its declared name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalId(pub String);

impl SignalId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for SignalId {
    fn from(s: &str) -> Self {
        SignalId(s.to_string())
    }
}

impl From<String> for SignalId {
    fn from(s: String) -> Self {
        SignalId(s)
    }
}

impl std::fmt::Display for SignalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
