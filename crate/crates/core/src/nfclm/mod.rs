//! The class language model: background model, per-class automata and a
//! decider, marginalized over class alignments.
//!
//! A symbol `w` following history `h` has probability
//!
//! ```text
//! P(w | h) = Σ_a P(a | h) Σ_c P(w | c, a, h) P(c | a, h)
//! ```
//!
//! where `a` ranges over class alignments of `h` and `c` over the classes
//! plus epsilon. The beam scorer keeps joint weights `log P(a, h)` for a
//! bounded set of alignments and normalizes them over the beam; the exact
//! scorer enumerates every alignment.

mod alignment;
mod beam;
mod exact;
mod sample;

pub use alignment::{class_prefix, decider_history, last_class, AlignLabel};
pub use beam::{AlignmentBeam, BeamParams, Extension};
pub use exact::MAX_EXACT_HISTORY;

use std::fmt;
use std::sync::Arc;

use crate::classfst::{ProbClassFst, StateId};
use crate::error::{Error, Result};
use crate::seqmodel::{ConditionalSymbolModel, DeciderModel, DeciderToken};
use crate::vocab::{ClassAlphabet, ClassId, SymbolId, Vocabulary};

/// Where an alignment currently is: generating background symbols, or inside
/// an entity-class automaton at some state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassPosition {
    Background,
    InClass { class: ClassId, state: StateId },
}

/// One class alignment of the consumed symbols, keyed by its decider history
/// and position, carrying `log P(alignment, symbols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentHypothesis {
    pub decider_history: Vec<DeciderToken>,
    pub position: ClassPosition,
    pub log_weight: f64,
}

impl AlignmentHypothesis {
    pub fn initial() -> Self {
        AlignmentHypothesis {
            decider_history: Vec::new(),
            position: ClassPosition::Background,
            log_weight: 0.0,
        }
    }

    /// Last non-epsilon class of the underlying alignment.
    pub fn last_class(&self, background: ClassId) -> AlignLabel {
        match self.position {
            ClassPosition::InClass { class, .. } => AlignLabel::Class(class),
            ClassPosition::Background if self.decider_history.is_empty() => AlignLabel::Epsilon,
            ClassPosition::Background => AlignLabel::Class(background),
        }
    }

    pub fn render_history(&self, vocab: &Vocabulary, classes: &ClassAlphabet) -> String {
        let parts: Vec<&str> = self
            .decider_history
            .iter()
            .map(|t| t.render(vocab, classes))
            .collect();
        parts.join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoringMode {
    Exact,
    Beam,
}

pub struct NfclmModel {
    vocab: Vocabulary,
    classes: ClassAlphabet,
    background: Arc<dyn ConditionalSymbolModel>,
    /// Indexed by class id; `None` only for the background class.
    fsts: Vec<Option<ProbClassFst>>,
    decider: DeciderModel,
    params: BeamParams,
}

impl fmt::Debug for NfclmModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NfclmModel")
            .field("vocab", &self.vocab.len())
            .field("classes", &self.classes)
            .field("decider", &self.decider)
            .field("params", &self.params)
            .finish()
    }
}

impl NfclmModel {
    /// `background` predicts over the sub-words plus EOS (`vocab.len() + 1`
    /// outcomes) and reads symbol-id histories.
    pub fn new(
        vocab: Vocabulary,
        classes: ClassAlphabet,
        background: Arc<dyn ConditionalSymbolModel>,
        fsts: Vec<ProbClassFst>,
        decider: DeciderModel,
        params: BeamParams,
    ) -> Result<Self> {
        classes.check_disjoint(&vocab)?;
        params.validate()?;
        if background.num_outcomes() != vocab.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "background model has {} outcomes, expected {}",
                background.num_outcomes(),
                vocab.len() + 1
            )));
        }
        if decider.num_classes() != classes.len() {
            return Err(Error::InvalidParameter(format!(
                "decider predicts {} classes, alphabet has {}",
                decider.num_classes(),
                classes.len()
            )));
        }
        let mut slots: Vec<Option<ProbClassFst>> = vec![None; classes.len()];
        for fst in fsts {
            let id = classes
                .id(fst.class())
                .ok_or_else(|| Error::UnknownClass(fst.class().to_string()))?;
            if id == classes.background() {
                return Err(Error::InvalidParameter("the background class has no automaton".into()));
            }
            if slots[id.index()].is_some() {
                return Err(Error::InvalidParameter(format!("two automata for {}", fst.class())));
            }
            fst.validate()?;
            fst.validate_symbols(vocab.len())?;
            slots[id.index()] = Some(fst);
        }
        if let Some(c) = classes.entity_classes().find(|c| slots[c.index()].is_none()) {
            return Err(Error::MissingFst(classes.label(c).to_string()));
        }
        Ok(NfclmModel {
            vocab,
            classes,
            background,
            fsts: slots,
            decider,
            params,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn classes(&self) -> &ClassAlphabet {
        &self.classes
    }

    pub fn decider(&self) -> &DeciderModel {
        &self.decider
    }

    pub fn background(&self) -> &dyn ConditionalSymbolModel {
        self.background.as_ref()
    }

    pub fn params(&self) -> BeamParams {
        self.params
    }

    pub fn with_params(mut self, params: BeamParams) -> Result<Self> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.decider = self.decider.with_alpha(alpha)?;
        Ok(self)
    }

    pub fn fst(&self, class: ClassId) -> Result<&ProbClassFst> {
        self.fsts
            .get(class.index())
            .and_then(Option::as_ref)
            .ok_or_else(|| {
                let label = if class.index() < self.classes.len() {
                    self.classes.label(class).to_string()
                } else {
                    format!("class id {}", class.0)
                };
                Error::MissingFst(label)
            })
    }

    pub fn fsts(&self) -> impl Iterator<Item = &ProbClassFst> {
        self.fsts.iter().flatten()
    }

    /// Outcomes of next-symbol distributions: the sub-words followed by EOS.
    pub fn num_outcomes(&self) -> usize {
        self.vocab.len() + 1
    }

    fn symbol_history(history: &[SymbolId]) -> Vec<u32> {
        history.iter().map(|s| s.0).collect()
    }

    pub(crate) fn background_prob(&self, history: &[SymbolId], w: SymbolId) -> Result<f64> {
        self.background.prob(&Self::symbol_history(history), w.0)
    }

    pub(crate) fn background_dist(&self, history: &[SymbolId]) -> Result<Vec<f64>> {
        self.background.distribution(&Self::symbol_history(history))
    }

    pub(crate) fn check_subword(&self, w: SymbolId) -> Result<()> {
        if self.vocab.is_subword(w) {
            Ok(())
        } else {
            Err(Error::UnknownSymbol(self.vocab.symbol(w).to_string()))
        }
    }

    fn exit_prob(&self, position: ClassPosition) -> Result<f64> {
        match position {
            ClassPosition::Background => Ok(1.0),
            ClassPosition::InClass { class, state } => self.fst(class)?.exit_prob(state),
        }
    }

    /// Emission distribution over the classes (by id) followed by epsilon.
    pub fn class_emission_dist(&self, hyp: &AlignmentHypothesis) -> Result<Vec<f64>> {
        let exit = self.exit_prob(hyp.position)?;
        let mut out = Vec::with_capacity(self.classes.len() + 1);
        if exit > 0.0 {
            let d = self.decider.distribution(&hyp.decider_history)?;
            out.extend(d.into_iter().map(|p| exit * p));
        } else {
            out.resize(self.classes.len(), 0.0);
        }
        out.push(1.0 - exit);
        Ok(out)
    }

    /// Probability of `w` given that it is generated under `label` from `hyp`.
    /// `history` is the symbol history `hyp` aligns.
    pub fn class_component_prob(
        &self,
        history: &[SymbolId],
        w: SymbolId,
        label: AlignLabel,
        hyp: &AlignmentHypothesis,
    ) -> Result<f64> {
        let bg = self.classes.background();
        match last_class_of(hyp, label, bg) {
            AlignLabel::Epsilon => Ok(0.0),
            AlignLabel::Class(c) if c == bg => self.background_prob(history, w),
            AlignLabel::Class(c) => {
                let fst = self.fst(c)?;
                let state = match (label, hyp.position) {
                    (AlignLabel::Epsilon, ClassPosition::InClass { state, .. }) => state,
                    _ => fst.start(),
                };
                continuation_prob(fst, state, w)
            }
        }
    }

    /// Decider history and position after consuming `w` under `label`.
    pub(crate) fn successor(
        &self,
        hyp: &AlignmentHypothesis,
        label: AlignLabel,
        w: SymbolId,
    ) -> Result<Option<(Vec<DeciderToken>, ClassPosition)>> {
        let bg = self.classes.background();
        Ok(match (label, hyp.position) {
            (AlignLabel::Class(c), _) if c == bg => {
                let mut h = hyp.decider_history.clone();
                h.push(DeciderToken::Symbol(w));
                Some((h, ClassPosition::Background))
            }
            (AlignLabel::Class(c), _) => {
                let fst = self.fst(c)?;
                fst.step(fst.start(), w)?.map(|state| {
                    let mut h = hyp.decider_history.clone();
                    h.push(DeciderToken::Class(c));
                    (h, ClassPosition::InClass { class: c, state })
                })
            }
            (AlignLabel::Epsilon, ClassPosition::InClass { class, state }) => self
                .fst(class)?
                .step(state, w)?
                .map(|next| {
                    (
                        hyp.decider_history.clone(),
                        ClassPosition::InClass { class, state: next },
                    )
                }),
            (AlignLabel::Epsilon, ClassPosition::Background) => None,
        })
    }

    /// Labels in evaluation order: classes by id, then epsilon.
    pub(crate) fn labels(&self) -> impl Iterator<Item = AlignLabel> + '_ {
        self.classes
            .ids()
            .map(AlignLabel::Class)
            .chain(std::iter::once(AlignLabel::Epsilon))
    }

    pub fn sequence_logprob(&self, symbols: &[SymbolId], mode: ScoringMode) -> Result<f64> {
        match mode {
            ScoringMode::Beam => self.beam_sequence_logprob(symbols),
            ScoringMode::Exact => self.exact_sequence_logprob(symbols),
        }
    }

    /// Next-symbol distribution over sub-words plus EOS after `history`.
    pub fn next_distribution(&self, history: &[SymbolId], mode: ScoringMode) -> Result<Vec<f64>> {
        match mode {
            ScoringMode::Exact => self.exact_next_dist(history),
            ScoringMode::Beam => {
                let mut beam = self.initial_beam();
                for &w in history {
                    beam = self.extend(&beam, w)?.beam;
                }
                self.beam_next_dist(&beam)
            }
        }
    }
}

fn last_class_of(hyp: &AlignmentHypothesis, label: AlignLabel, background: ClassId) -> AlignLabel {
    match label {
        AlignLabel::Epsilon => hyp.last_class(background),
        c => c,
    }
}

/// Arc probability conditioned on not exiting at `state`.
pub(crate) fn continuation_prob(fst: &ProbClassFst, state: StateId, w: SymbolId) -> Result<f64> {
    let exit = fst.exit_prob(state)?;
    if exit >= 1.0 {
        return Ok(0.0);
    }
    let arc = fst.arc_prob(state, w)?;
    Ok(if exit == 0.0 { arc } else { arc / (1.0 - exit) })
}
