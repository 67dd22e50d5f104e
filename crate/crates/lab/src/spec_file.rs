//! JSON form of a cookie chain.
//!
//! Either a full chain, with the transition matrix row-major
//!
//! ```json
//! { "n_states": 2, "transition": [0.9, 0.1, 0.1, 0.9], "p": [0.7, 0.3], "eta": [0.5, 0.5] }
//! ```
//!
//! or nested by rows (`n_states` is then optional)
//!
//! ```json
//! { "transition": [[0.9, 0.1], [0.1, 0.9]], "p": [0.7, 0.3], "eta": [0.5, 0.5] }
//! ```
//!
//! or a deterministic stack of cookies followed by fair coins
//!
//! ```json
//! { "m_cookie": [0.75] }
//! ```

use std::path::Path;

use erw_core::cookie_model::{make_m_cookie_spec, CookieChainSpec, SpecInput};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, LabError, LabResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum SpecFile {
    MCookie(MCookieFile),
    Chain(ChainFile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MCookieFile {
    /// Right-step probabilities of the leading cookies.
    pub m_cookie: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_states: Option<usize>,
    /// Row-stochastic transition matrix.
    pub transition: Transition,
    /// Right-step probability in each state.
    pub p: Vec<f64>,
    /// Law of the first cookie at every site.
    pub eta: Vec<f64>,
    /// Reject probabilities equal to 0 or 1 instead of warning.
    #[serde(default = "default_true")]
    pub strict_interior: bool,
    /// Allowed `|mu . p - 1/2|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criticality_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Transition {
    /// Row-major, `n_states * n_states` entries.
    Flat(Vec<f64>),
    /// One array per row.
    Rows(Vec<Vec<f64>>),
}

fn default_true() -> bool {
    true
}

impl SpecFile {
    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| LabError::Parse { path: path.into(), source })
    }

    /// Flattened input for validation. M-cookie stacks are expanded.
    pub fn to_input(&self) -> LabResult<SpecInput> {
        match self {
            SpecFile::MCookie(m) => Ok(make_m_cookie_spec(&m.m_cookie)?.to_input()),
            SpecFile::Chain(c) => {
                let n = c.p.len();
                if c.n_states.is_some_and(|k| k != n) {
                    return Err(config_err(format!("n_states does not match the {n} entries of p")));
                }
                let transition = match &c.transition {
                    Transition::Flat(v) => v.clone(),
                    Transition::Rows(rows) => {
                        if rows.len() != n || rows.iter().any(|row| row.len() != n) {
                            return Err(config_err(format!("transition must be {n} x {n} to match p")));
                        }
                        rows.concat()
                    }
                };
                if transition.len() != n * n {
                    return Err(config_err(format!("transition needs {} entries to match p", n * n)));
                }
                Ok(SpecInput {
                    n_states: n,
                    transition,
                    p: c.p.clone(),
                    eta: c.eta.clone(),
                    strict_interior: c.strict_interior,
                    criticality_tolerance: c.criticality_tolerance,
                })
            }
        }
    }

    pub fn build(&self) -> LabResult<CookieChainSpec> {
        Ok(CookieChainSpec::new(self.to_input()?)?)
    }
}

/// First 16 hex digits of the SHA-256 of the flattened chain.
pub fn fingerprint(input: &SpecInput) -> String {
    let canonical = serde_json::json!({
        "n_states": input.n_states,
        "transition": input.transition,
        "p": input.p,
        "eta": input.eta,
        "strict_interior": input.strict_interior,
        "criticality_tolerance": input.criticality_tolerance,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
