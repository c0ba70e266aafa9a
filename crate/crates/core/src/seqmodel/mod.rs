//! Conditional symbol models: the contract, a back-off n-gram reference
//! implementation and the class decider built on top of it.

mod decider;
mod ngram;

pub use decider::{
    parse_tagged_line, renormalize_by_prior, train_decider, DeciderModel, DeciderToken,
    TrainedDecider, DECIDER_FLOOR,
};
pub use ngram::{BackoffNGram, NGramCounter, UniformModel};

use crate::error::Result;

/// `P(next | history)` over a fixed set of outcomes `0..num_outcomes()`.
///
/// Histories are raw token ids without padding; implementations pad with
/// their own begin-of-sentence token. Every distribution is normalized and
/// strictly positive.
pub trait ConditionalSymbolModel: Send + Sync {
    fn num_outcomes(&self) -> usize;

    fn prob(&self, history: &[u32], outcome: u32) -> Result<f64>;

    fn distribution(&self, history: &[u32]) -> Result<Vec<f64>>;

    fn log_prob(&self, history: &[u32], outcome: u32) -> Result<f64> {
        Ok(self.prob(history, outcome)?.ln())
    }
}
