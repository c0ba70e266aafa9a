use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nfclm::{NfclmModel, ScoringMode};
use crate::seqmodel::ConditionalSymbolModel;
use crate::vocab::SymbolId;

#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityReport {
    pub perplexity: f64,
    pub total_logprob: f64,
    /// Scored symbols including one EOS per sentence.
    pub total_tokens: usize,
    pub sentences: usize,
    /// Sentences excluded because they could not be scored.
    pub skipped: Vec<(usize, String)>,
}

/// `exp(-Σ log p / Σ (len + 1))` over the corpus. Sentences are scored in
/// parallel and summed in input order. A failing sentence aborts unless
/// `skip_failures` is set, in which case it is reported and excluded.
pub fn perplexity_with<F>(corpus: &[Vec<SymbolId>], score: F, skip_failures: bool) -> Result<PerplexityReport>
where
    F: Fn(&[SymbolId]) -> Result<f64> + Sync,
{
    let results: Vec<Result<f64>> = corpus.par_iter().map(|s| score(s)).collect();
    let mut report = PerplexityReport {
        perplexity: f64::NAN,
        total_logprob: 0.0,
        total_tokens: 0,
        sentences: 0,
        skipped: Vec::new(),
    };
    for (index, (sentence, r)) in corpus.iter().zip(results).enumerate() {
        match r {
            Ok(lp) => {
                report.total_logprob += lp;
                report.total_tokens += sentence.len() + 1;
                report.sentences += 1;
            }
            Err(e) if skip_failures => report.skipped.push((index, e.to_string())),
            Err(e) => {
                return Err(Error::Sentence {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    if report.total_tokens == 0 {
        return Err(Error::Empty("scored corpus".into()));
    }
    report.perplexity = (-report.total_logprob / report.total_tokens as f64).exp();
    Ok(report)
}

pub fn nfclm_perplexity(
    model: &NfclmModel,
    corpus: &[Vec<SymbolId>],
    mode: ScoringMode,
    skip_failures: bool,
) -> Result<PerplexityReport> {
    perplexity_with(corpus, |s| model.sequence_logprob(s, mode), skip_failures)
}

/// Sentence log-probability under a plain symbol model, EOS included.
pub fn background_logprob(model: &dyn ConditionalSymbolModel, sentence: &[SymbolId], eos: SymbolId) -> Result<f64> {
    let ids: Vec<u32> = sentence.iter().map(|s| s.0).collect();
    let mut total = 0.0;
    for i in 0..ids.len() {
        total += model.log_prob(&ids[..i], ids[i])?;
    }
    Ok(total + model.log_prob(&ids, eos.0)?)
}

pub fn background_perplexity(
    model: &dyn ConditionalSymbolModel,
    corpus: &[Vec<SymbolId>],
    eos: SymbolId,
) -> Result<PerplexityReport> {
    perplexity_with(corpus, |s| background_logprob(model, s, eos), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::UniformModel;
    use crate::toy;

    #[test]
    fn uniform_model_has_perplexity_of_its_alphabet() {
        let m = UniformModel::new(4);
        let corpus = vec![vec![SymbolId(0), SymbolId(1)], vec![SymbolId(2)], vec![]];
        let r = background_perplexity(&m, &corpus, SymbolId(3)).unwrap();
        assert!((r.perplexity - 4.0).abs() < 1e-12);
        assert_eq!(r.total_tokens, 6);
    }

    #[test]
    fn order_invariant() {
        let m = toy::exact_model();
        let v = m.vocab().clone();
        let mut corpus: Vec<_> = ["_play _ro sie", "_by _browne", "_play _browne _ro salie"]
            .iter()
            .map(|l| v.parse_symbols(l).unwrap())
            .collect();
        let a = nfclm_perplexity(&m, &corpus, ScoringMode::Beam, false).unwrap();
        corpus.reverse();
        let b = nfclm_perplexity(&m, &corpus, ScoringMode::Beam, false).unwrap();
        assert!((a.perplexity - b.perplexity).abs() < 1e-12);
    }

    #[test]
    fn failures_abort_or_skip() {
        let corpus = vec![vec![SymbolId(0)], vec![SymbolId(1)], vec![SymbolId(0)]];
        let score = |s: &[SymbolId]| {
            if s[0] == SymbolId(1) {
                Err(Error::DeadHistory { position: 0 })
            } else {
                Ok(-1.0)
            }
        };
        assert!(matches!(
            perplexity_with(&corpus, score, false),
            Err(Error::Sentence { index: 1, .. })
        ));
        let r = perplexity_with(&corpus, score, true).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.sentences, 2);
        assert!((r.perplexity - 0.5f64.exp()).abs() < 1e-12);
    }
}
