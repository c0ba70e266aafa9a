//! Evaluation surface: corpus perplexity, n-best rescoring and model bundles.

pub mod bundle;
pub mod perplexity;
pub mod rescore;

pub use bundle::{load_bundle, pack_bundle, Bundle, BundleParts, SizeReport};
pub use perplexity::{background_logprob, background_perplexity, nfclm_perplexity, perplexity_with, PerplexityReport};
pub use rescore::{
    crossover_lambda, format_rescored, lm_scores, parse_nbest, parse_references, rescore_nbest,
    rescore_with_scores, top1_accuracy, FusionWeights, NBestEntry, RescoredEntry,
};

use crate::error::{Error, Result};
use crate::vocab::{SymbolId, Vocabulary};

/// Reads a corpus of space-separated sub-word symbols, one sentence per line.
/// Blank lines are empty sentences.
pub fn parse_corpus(text: &str, vocab: &Vocabulary) -> Result<Vec<Vec<SymbolId>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            vocab.parse_symbols(line).map_err(|e| Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
