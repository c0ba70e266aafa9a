use std::fmt;
use std::path::Path;
use std::sync::Arc;

use super::ngram::{BackoffNGram, NGramCounter};
use super::ConditionalSymbolModel;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::vocab::{ClassAlphabet, ClassId, SymbolId, Vocabulary};

const MAGIC: &[u8; 4] = b"NDEC";
const VERSION: u32 = 1;

/// Per-class probability floor applied to raw decider output.
pub const DECIDER_FLOOR: f64 = 1e-6;

/// Element of a decider history: background symbols verbatim, class spans
/// collapsed to their label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeciderToken {
    Symbol(SymbolId),
    Class(ClassId),
}

impl DeciderToken {
    /// Dense id in the decider context alphabet: sub-words keep their ids,
    /// `vocab_len + 1` is BOS, classes follow.
    fn encode(self, vocab_len: u32) -> u32 {
        match self {
            DeciderToken::Symbol(s) => s.0,
            DeciderToken::Class(c) => vocab_len + 2 + c.0,
        }
    }

    pub fn render<'a>(self, vocab: &'a Vocabulary, classes: &'a ClassAlphabet) -> &'a str {
        match self {
            DeciderToken::Symbol(s) => vocab.symbol(s),
            DeciderToken::Class(c) => classes.label(c),
        }
    }
}

impl fmt::Display for DeciderToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeciderToken::Symbol(s) => write!(f, "w{}", s.0),
            DeciderToken::Class(c) => write!(f, "c{}", c.0),
        }
    }
}

/// Parses a tagged line: class labels inline, everything else a sub-word.
pub fn parse_tagged_line(
    line: &str,
    vocab: &Vocabulary,
    classes: &ClassAlphabet,
) -> Result<Vec<DeciderToken>> {
    line.split_whitespace()
        .map(|tok| {
            if tok.starts_with('@') {
                match classes.id(tok) {
                    Some(c) if c != classes.background() => Ok(DeciderToken::Class(c)),
                    _ => Err(Error::UnknownClass(tok.to_string())),
                }
            } else {
                vocab
                    .id(tok)
                    .filter(|&id| vocab.is_subword(id))
                    .map(DeciderToken::Symbol)
                    .ok_or_else(|| Error::UnknownSymbol(tok.to_string()))
            }
        })
        .collect()
}

/// `P'(c) ∝ P(c) / prior(c)^alpha`, renormalized.
pub fn renormalize_by_prior(raw: &[f64], prior: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if raw.len() != prior.len() {
        return Err(Error::InvalidParameter(format!(
            "distribution has {} entries, prior {}",
            raw.len(),
            prior.len()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} must be >= 0")));
    }
    if let Some(i) = prior.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidParameter(format!("prior entry {i} is not positive")));
    }
    if alpha == 0.0 {
        return Ok(raw.to_vec());
    }
    let mut out: Vec<f64> = raw
        .iter()
        .zip(prior)
        .map(|(&p, &q)| p / q.powf(alpha))
        .collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("distribution has no mass".into()));
    }
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

/// The serializable result of decider training: a class predictor over the
/// mixed symbol/class alphabet plus the empirical class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedDecider {
    pub ngram: BackoffNGram,
    pub prior: Vec<f64>,
    pub class_labels: Vec<String>,
    pub vocab_len: u32,
}

/// Trains the decider. Every position of every sentence is an event whose
/// outcome is the class of the next token (`@bg` for plain sub-words and for
/// the end of the sentence). The prior counts class tokens and plain
/// sub-words (as `@bg`) in `prior_corpus`, falling back to `corpus`, with
/// add-one smoothing so that every class keeps positive prior mass.
pub fn train_decider(
    corpus: &[Vec<DeciderToken>],
    prior_corpus: Option<&[Vec<DeciderToken>]>,
    vocab: &Vocabulary,
    classes: &ClassAlphabet,
    order: usize,
    discount: f64,
) -> Result<TrainedDecider> {
    if corpus.is_empty() {
        return Err(Error::Empty("decider corpus".into()));
    }
    let vocab_len = vocab.len() as u32;
    let num_classes = classes.len() as u32;
    let bg = classes.background();
    let target = |t: &DeciderToken| match *t {
        DeciderToken::Symbol(_) => bg,
        DeciderToken::Class(c) => c,
    };
    let mut counter = NGramCounter::new(order, num_classes, vocab_len + 2 + num_classes, vocab_len + 1)?;
    let mut encoded = Vec::new();
    for sentence in corpus {
        encoded.clear();
        for tok in sentence {
            if let DeciderToken::Class(c) = tok {
                if *c == bg || c.0 >= num_classes {
                    return Err(Error::UnknownClass(format!("class id {}", c.0)));
                }
            }
            encoded.push(tok.encode(vocab_len));
        }
        for (i, tok) in sentence.iter().enumerate() {
            counter.add(&encoded[..i], target(tok).0)?;
        }
        counter.add(&encoded, bg.0)?;
    }
    let ngram = counter.finish(discount)?;

    let mut counts = vec![1.0f64; classes.len()];
    for sentence in prior_corpus.unwrap_or(corpus) {
        for tok in sentence {
            counts[target(tok).index()] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let prior = counts.iter().map(|c| c / total).collect();
    Ok(TrainedDecider {
        ngram,
        prior,
        class_labels: classes.ids().map(|c| classes.label(c).to_string()).collect(),
        vocab_len,
    })
}

impl TrainedDecider {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.vocab_len);
        w.u32(self.class_labels.len() as u32);
        for (label, p) in self.class_labels.iter().zip(&self.prior) {
            w.str(label);
            w.f64(*p);
        }
        w.bytes(&self.ngram.to_bytes());
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open("decider", data, MAGIC, VERSION)?;
        let vocab_len = r.u32()?;
        let n = r.len(12)?;
        let mut class_labels = Vec::with_capacity(n);
        let mut prior = Vec::with_capacity(n);
        for _ in 0..n {
            class_labels.push(r.str()?);
            let at = r.offset();
            let p = r.f64()?;
            if !(p > 0.0 && p.is_finite()) {
                return Err(r.error_at(at, format!("prior {p} is not positive")));
            }
            prior.push(p);
        }
        let at = r.offset();
        let ngram = BackoffNGram::from_bytes(r.bytes()?).map_err(|e| match e {
            Error::Malformed { what, offset, reason } => Error::Malformed {
                what,
                offset: offset + at + 8,
                reason,
            },
            other => other,
        })?;
        r.finish()?;
        if ngram.num_outcomes() != n || ngram.num_context() != vocab_len + 2 + n as u32 {
            return Err(Error::Malformed {
                what: "decider",
                offset: at,
                reason: "embedded model alphabet does not match class list".into(),
            });
        }
        Ok(TrainedDecider {
            ngram,
            prior,
            class_labels,
            vocab_len,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }

    /// Checks that this decider was trained against `vocab` and `classes`.
    pub fn check_compatible(&self, vocab: &Vocabulary, classes: &ClassAlphabet) -> Result<()> {
        if self.vocab_len as usize != vocab.len() {
            return Err(Error::Bundle(format!(
                "decider expects {} vocabulary symbols, found {}",
                self.vocab_len,
                vocab.len()
            )));
        }
        let labels: Vec<&str> = classes.ids().map(|c| classes.label(c)).collect();
        if labels != self.class_labels {
            return Err(Error::Bundle("decider class list does not match the class alphabet".into()));
        }
        Ok(())
    }

    pub fn into_model(self, alpha: f64) -> Result<DeciderModel> {
        DeciderModel::new(Arc::new(self.ngram), self.prior, self.vocab_len, alpha)
    }
}

/// `P_D'(c | decider history)`: a class predictor with a probability floor
/// and prior renormalization applied at inference time.
#[derive(Clone)]
pub struct DeciderModel {
    model: Arc<dyn ConditionalSymbolModel>,
    prior: Vec<f64>,
    vocab_len: u32,
    alpha: f64,
    floor: f64,
}

impl fmt::Debug for DeciderModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeciderModel")
            .field("classes", &self.prior.len())
            .field("prior", &self.prior)
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl DeciderModel {
    /// `model` predicts over the class alphabet and reads histories encoded
    /// in the decider context alphabet for a vocabulary of `vocab_len` sub-words.
    pub fn new(
        model: Arc<dyn ConditionalSymbolModel>,
        prior: Vec<f64>,
        vocab_len: u32,
        alpha: f64,
    ) -> Result<Self> {
        if model.num_outcomes() != prior.len() {
            return Err(Error::InvalidParameter(format!(
                "decider predicts {} classes, prior has {}",
                model.num_outcomes(),
                prior.len()
            )));
        }
        // validates prior and alpha
        renormalize_by_prior(&prior, &prior, alpha)?;
        Ok(DeciderModel {
            model,
            prior,
            vocab_len,
            alpha,
            floor: DECIDER_FLOOR,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.prior.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        renormalize_by_prior(&self.prior, &self.prior, alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    fn encode(&self, history: &[DeciderToken]) -> Vec<u32> {
        history.iter().map(|t| t.encode(self.vocab_len)).collect()
    }

    /// Model output with the floor applied, before prior renormalization.
    pub fn raw_distribution(&self, history: &[DeciderToken]) -> Result<Vec<f64>> {
        let mut d = self.model.distribution(&self.encode(history))?;
        for p in &mut d {
            *p = p.max(self.floor);
        }
        let total: f64 = d.iter().sum();
        for p in &mut d {
            *p /= total;
        }
        Ok(d)
    }

    /// Renormalized class distribution.
    pub fn distribution(&self, history: &[DeciderToken]) -> Result<Vec<f64>> {
        let raw = self.raw_distribution(history)?;
        renormalize_by_prior(&raw, &self.prior, self.alpha)
    }
}
