use serde::{Deserialize, Serialize};

/// Outcome of a numerical convergence classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Converges => "converges",
            Verdict::Diverges => "diverges",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// A verdict together with the numbers it was decided from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub verdict: Verdict,
    /// Class membership implied by the verdict, when one is known.
    pub conclusion: Option<String>,
    /// Accumulated sum up to the last block.
    pub partial_sum: f64,
    /// Sums of the last blocks examined, oldest first.
    pub block_sums: Vec<f64>,
    /// Ratios of consecutive block sums, oldest first.
    pub tail_ratios: Vec<f64>,
}
