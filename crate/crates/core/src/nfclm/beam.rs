use std::cmp::Ordering;

use indexmap::IndexMap;

use super::{AlignLabel, AlignmentHypothesis, ClassPosition, NfclmModel};
use crate::error::{Error, Result};
use crate::logmath::{log_add, log_sum_exp};
use crate::seqmodel::DeciderToken;
use crate::vocab::SymbolId;

/// Soft-beam settings. `delta` is in natural-log units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamParams {
    pub max_size: usize,
    pub delta: f64,
    /// Normalize alignment posteriors over the retained hypotheses. When off,
    /// pruned mass is lost and next-symbol distributions may sum below one.
    pub renormalize: bool,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams {
            max_size: 100,
            delta: 30.0,
            renormalize: true,
        }
    }
}

impl BeamParams {
    /// Settings wide enough to keep every alignment on small inputs.
    pub fn unpruned() -> Self {
        BeamParams {
            max_size: 10_000,
            delta: 1e9,
            renormalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_size == 0 {
            return Err(Error::InvalidParameter("beam size must be >= 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beam delta {} must be >= 0", self.delta)));
        }
        Ok(())
    }
}

/// The retained alignments of one symbol history.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentBeam {
    history: Vec<SymbolId>,
    hyps: Vec<AlignmentHypothesis>,
    /// Log of the mass the hypothesis weights are normalized by.
    log_norm: f64,
}

impl AlignmentBeam {
    pub fn history(&self) -> &[SymbolId] {
        &self.history
    }

    /// Hypotheses, best first.
    pub fn hypotheses(&self) -> &[AlignmentHypothesis] {
        &self.hyps
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// `log P(alignment | history)` of a hypothesis within this beam.
    pub fn log_posterior(&self, hyp: &AlignmentHypothesis) -> f64 {
        hyp.log_weight - self.log_norm
    }

    /// Builds a beam from explicit hypotheses, e.g. to test merging.
    pub fn from_parts(history: Vec<SymbolId>, hyps: Vec<AlignmentHypothesis>, renormalize_over: Option<f64>) -> Self {
        let weights: Vec<f64> = hyps.iter().map(|h| h.log_weight).collect();
        let log_norm = renormalize_over.unwrap_or_else(|| log_sum_exp(&weights));
        AlignmentBeam {
            history,
            hyps,
            log_norm,
        }
    }
}

/// Result of consuming one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Extension {
    pub beam: AlignmentBeam,
    /// `log P(w | history)` under the parent beam.
    pub log_prob: f64,
    /// Hypotheses before pruning.
    pub candidates: usize,
}

fn beam_order(a: &AlignmentHypothesis, b: &AlignmentHypothesis) -> Ordering {
    b.log_weight
        .total_cmp(&a.log_weight)
        .then_with(|| a.decider_history.len().cmp(&b.decider_history.len()))
        .then_with(|| a.decider_history.cmp(&b.decider_history))
        .then_with(|| a.position.cmp(&b.position))
}

impl NfclmModel {
    /// Beam for the empty history: a single background hypothesis of weight 0.
    pub fn initial_beam(&self) -> AlignmentBeam {
        AlignmentBeam {
            history: Vec::new(),
            hyps: vec![AlignmentHypothesis::initial()],
            log_norm: 0.0,
        }
    }

    /// Consumes `w`: expands every hypothesis by every label with nonzero
    /// emission and component probability, merges equal keys, prunes, and
    /// returns `log P(w | history)`.
    pub fn extend(&self, beam: &AlignmentBeam, w: SymbolId) -> Result<Extension> {
        self.check_subword(w)?;
        if beam.hyps.is_empty() {
            return Err(Error::InvalidParameter("cannot extend an empty beam".into()));
        }
        let mut bg_prob: Option<f64> = None;
        let mut merged: IndexMap<(Vec<DeciderToken>, ClassPosition), f64> = IndexMap::new();
        let bg = self.classes.background();

        for hyp in &beam.hyps {
            let emission = self.class_emission_dist(hyp)?;
            for (label, &e) in self.labels().zip(&emission) {
                if e == 0.0 {
                    continue;
                }
                let comp = match label {
                    AlignLabel::Class(c) if c == bg => match bg_prob {
                        Some(p) => p,
                        None => *bg_prob.insert(self.background_prob(&beam.history, w)?),
                    },
                    _ => self.class_component_prob(&beam.history, w, label, hyp)?,
                };
                if comp == 0.0 {
                    continue;
                }
                let Some(key) = self.successor(hyp, label, w)? else {
                    continue;
                };
                let weight = hyp.log_weight + e.ln() + comp.ln();
                merged
                    .entry(key)
                    .and_modify(|v| *v = log_add(*v, weight))
                    .or_insert(weight);
            }
        }

        if merged.is_empty() {
            return Err(Error::DeadHistory {
                position: beam.history.len(),
            });
        }
        let candidates = merged.len();
        let mut hyps: Vec<AlignmentHypothesis> = merged
            .into_iter()
            .map(|((decider_history, position), log_weight)| AlignmentHypothesis {
                decider_history,
                position,
                log_weight,
            })
            .collect();
        hyps.sort_by(beam_order);
        let weights: Vec<f64> = hyps.iter().map(|h| h.log_weight).collect();
        let total = log_sum_exp(&weights);
        let log_prob = total - beam.log_norm;

        hyps.truncate(self.params.max_size);
        let best = hyps[0].log_weight;
        let delta = self.params.delta;
        hyps.retain(|h| best - h.log_weight <= delta);

        let log_norm = if self.params.renormalize {
            let kept: Vec<f64> = hyps.iter().map(|h| h.log_weight).collect();
            log_sum_exp(&kept)
        } else {
            total
        };
        let mut history = beam.history.clone();
        history.push(w);
        Ok(Extension {
            beam: AlignmentBeam {
                history,
                hyps,
                log_norm,
            },
            log_prob,
            candidates,
        })
    }

    /// Next-symbol distribution over sub-words plus EOS from a beam.
    pub fn beam_next_dist(&self, beam: &AlignmentBeam) -> Result<Vec<f64>> {
        let bg = self.classes.background();
        let bg_dist = self.background_dist(&beam.history)?;
        let mut out = vec![0.0; self.num_outcomes()];
        for hyp in &beam.hyps {
            let post = beam.log_posterior(hyp).exp();
            let emission = self.class_emission_dist(hyp)?;
            for (label, &e) in self.labels().zip(&emission) {
                if e == 0.0 {
                    continue;
                }
                let mass = post * e;
                match (label, hyp.position) {
                    (AlignLabel::Class(c), _) if c == bg => {
                        for (o, p) in out.iter_mut().zip(&bg_dist) {
                            *o += mass * p;
                        }
                    }
                    (AlignLabel::Class(c), _) => {
                        let fst = self.fst(c)?;
                        for arc in &fst.state(fst.start())?.arcs {
                            out[arc.symbol.index()] += mass * arc.prob;
                        }
                    }
                    (AlignLabel::Epsilon, ClassPosition::InClass { class, state }) => {
                        let st = self.fst(class)?.state(state)?;
                        let keep = 1.0 - st.exit;
                        for arc in &st.arcs {
                            out[arc.symbol.index()] += mass * arc.prob / keep;
                        }
                    }
                    (AlignLabel::Epsilon, ClassPosition::Background) => {}
                }
            }
        }
        Ok(out)
    }

    /// `log P(EOS | history)`: only background emissions end a sentence.
    pub fn beam_eos_logprob(&self, beam: &AlignmentBeam) -> Result<f64> {
        let bg = self.classes.background();
        let mut terms = Vec::with_capacity(beam.hyps.len());
        for hyp in &beam.hyps {
            let e = self.class_emission_dist(hyp)?[bg.index()];
            if e > 0.0 {
                terms.push(beam.log_posterior(hyp) + e.ln());
            }
        }
        let p_eos = self.background_prob(&beam.history, self.vocab.eos())?;
        Ok(log_sum_exp(&terms) + p_eos.ln())
    }

    pub(crate) fn beam_sequence_logprob(&self, symbols: &[SymbolId]) -> Result<f64> {
        let mut beam = self.initial_beam();
        let mut total = 0.0;
        for &w in symbols {
            let ext = self.extend(&beam, w)?;
            total += ext.log_prob;
            beam = ext.beam;
        }
        let eos = self.beam_eos_logprob(&beam)?;
        if eos == f64::NEG_INFINITY {
            return Err(Error::DeadHistory {
                position: symbols.len(),
            });
        }
        Ok(total + eos)
    }
}
