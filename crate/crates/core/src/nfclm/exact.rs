//! Exhaustive marginalization over class alignments. Every factor is
//! recomputed from the full `(history, alignment)` pair, independently of
//! the incremental hypothesis state the beam scorer carries.

use super::alignment::{class_prefix, decider_history, last_class, AlignLabel};
use super::NfclmModel;
use crate::error::{Error, Result};
use crate::logmath::log_sum_exp;
use crate::vocab::{ClassId, SymbolId};

/// Longest history the exact scorer will enumerate.
pub const MAX_EXACT_HISTORY: usize = 12;

impl NfclmModel {
    /// Exit probability of the open span of `alignment`, 1 outside any span.
    /// `None` if the span's prefix is not a path of its automaton.
    fn scratch_exit(&self, history: &[SymbolId], alignment: &[AlignLabel]) -> Result<Option<f64>> {
        let bg = self.classes.background();
        match last_class(alignment, AlignLabel::Epsilon) {
            AlignLabel::Class(c) if c != bg => {
                let fst = self.fst(c)?;
                let prefix = class_prefix(history, alignment, c, bg)?;
                match fst.walk(prefix) {
                    Some(s) => Ok(Some(fst.exit_prob(s)?)),
                    None => Ok(None),
                }
            }
            _ => Ok(Some(1.0)),
        }
    }

    /// Emission probability of `label` after `(history, alignment)`.
    pub fn scratch_emission(
        &self,
        history: &[SymbolId],
        alignment: &[AlignLabel],
        label: AlignLabel,
    ) -> Result<f64> {
        let Some(exit) = self.scratch_exit(history, alignment)? else {
            return Ok(0.0);
        };
        match label {
            AlignLabel::Epsilon => Ok(1.0 - exit),
            AlignLabel::Class(c) => {
                if exit == 0.0 {
                    return Ok(0.0);
                }
                let bg = self.classes.background();
                let dh = decider_history(history, alignment, bg)?;
                Ok(exit * self.decider.distribution(&dh)?[c.index()])
            }
        }
    }

    /// Component distribution over sub-words plus EOS for `label`.
    fn scratch_component_dist(
        &self,
        history: &[SymbolId],
        alignment: &[AlignLabel],
        label: AlignLabel,
        bg_dist: &[f64],
    ) -> Result<Option<Vec<f64>>> {
        let bg = self.classes.background();
        let class = match last_class(alignment, label) {
            AlignLabel::Epsilon => return Ok(None),
            AlignLabel::Class(c) if c == bg => return Ok(Some(bg_dist.to_vec())),
            AlignLabel::Class(c) => c,
        };
        let fst = self.fst(class)?;
        let prefix: &[SymbolId] = match label {
            AlignLabel::Epsilon => class_prefix(history, alignment, class, bg)?,
            AlignLabel::Class(_) => &[],
        };
        let Some(state) = fst.walk(prefix) else {
            return Ok(None);
        };
        let st = fst.state(state)?;
        if st.exit >= 1.0 {
            return Ok(None);
        }
        let mut out = vec![0.0; self.num_outcomes()];
        for arc in &st.arcs {
            out[arc.symbol.index()] = arc.prob / (1.0 - st.exit);
        }
        Ok(Some(out))
    }

    /// `P(w | label, alignment, history)` computed from the whole sequences.
    pub fn scratch_component(
        &self,
        history: &[SymbolId],
        alignment: &[AlignLabel],
        label: AlignLabel,
        w: SymbolId,
    ) -> Result<f64> {
        let bg = self.classes.background();
        match last_class(alignment, label) {
            AlignLabel::Epsilon => Ok(0.0),
            AlignLabel::Class(c) if c == bg => self.background_prob(history, w),
            AlignLabel::Class(c) => {
                let fst = self.fst(c)?;
                let prefix: &[SymbolId] = match label {
                    AlignLabel::Epsilon => class_prefix(history, alignment, c, bg)?,
                    AlignLabel::Class(_) => &[],
                };
                match fst.walk(prefix) {
                    Some(s) => super::continuation_prob(fst, s, w),
                    None => Ok(0.0),
                }
            }
        }
    }

    /// Every alignment of `history` with nonzero joint probability, with its
    /// log joint weight, in lexicographic label order.
    pub fn enumerate_alignments(&self, history: &[SymbolId]) -> Result<Vec<(Vec<AlignLabel>, f64)>> {
        if history.len() > MAX_EXACT_HISTORY {
            return Err(Error::HistoryTooLong {
                len: history.len(),
                max: MAX_EXACT_HISTORY,
            });
        }
        for &w in history {
            self.check_subword(w)?;
        }
        let labels: Vec<AlignLabel> = self.labels().collect();
        let mut out = Vec::new();
        let mut stack = Vec::with_capacity(history.len());
        self.enumerate_from(history, &labels, &mut stack, 0.0, &mut out)?;
        Ok(out)
    }

    fn enumerate_from(
        &self,
        history: &[SymbolId],
        labels: &[AlignLabel],
        alignment: &mut Vec<AlignLabel>,
        log_weight: f64,
        out: &mut Vec<(Vec<AlignLabel>, f64)>,
    ) -> Result<()> {
        let k = alignment.len();
        if k == history.len() {
            out.push((alignment.clone(), log_weight));
            return Ok(());
        }
        let prefix = &history[..k];
        for &label in labels {
            let e = self.scratch_emission(prefix, alignment, label)?;
            if e == 0.0 {
                continue;
            }
            let comp = self.scratch_component(prefix, alignment, label, history[k])?;
            if comp == 0.0 {
                continue;
            }
            alignment.push(label);
            self.enumerate_from(history, labels, alignment, log_weight + e.ln() + comp.ln(), out)?;
            alignment.pop();
        }
        Ok(())
    }

    /// Exact next-symbol distribution (sub-words plus EOS) by enumerating
    /// every alignment of `history`.
    pub fn exact_next_dist(&self, history: &[SymbolId]) -> Result<Vec<f64>> {
        let alignments = self.enumerate_alignments(history)?;
        if alignments.is_empty() {
            return Err(Error::DeadHistory {
                position: history.len().saturating_sub(1),
            });
        }
        let weights: Vec<f64> = alignments.iter().map(|(_, w)| *w).collect();
        let norm = log_sum_exp(&weights);
        let bg_dist = self.background_dist(history)?;
        let labels: Vec<AlignLabel> = self.labels().collect();
        let mut out = vec![0.0; self.num_outcomes()];
        for (alignment, w) in &alignments {
            let post = (w - norm).exp();
            for &label in &labels {
                let e = self.scratch_emission(history, alignment, label)?;
                if e == 0.0 {
                    continue;
                }
                if let Some(dist) = self.scratch_component_dist(history, alignment, label, &bg_dist)? {
                    for (o, p) in out.iter_mut().zip(dist) {
                        *o += post * e * p;
                    }
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn exact_sequence_logprob(&self, symbols: &[SymbolId]) -> Result<f64> {
        if symbols.len() > MAX_EXACT_HISTORY {
            return Err(Error::HistoryTooLong {
                len: symbols.len(),
                max: MAX_EXACT_HISTORY,
            });
        }
        let mut total = 0.0;
        for k in 0..=symbols.len() {
            let dist = self.exact_next_dist(&symbols[..k])?;
            let target = symbols.get(k).copied().unwrap_or(self.vocab.eos());
            let p = dist[target.index()];
            if p == 0.0 {
                return Err(Error::DeadHistory { position: k });
            }
            total += p.ln();
        }
        Ok(total)
    }

    /// Decider histories of every nonzero alignment of `history`.
    pub fn alignment_decider_histories(&self, history: &[SymbolId]) -> Result<Vec<String>> {
        let bg: ClassId = self.classes.background();
        let mut out = Vec::new();
        for (alignment, _) in self.enumerate_alignments(history)? {
            let dh = decider_history(history, &alignment, bg)?;
            let parts: Vec<&str> = dh.iter().map(|t| t.render(&self.vocab, &self.classes)).collect();
            out.push(parts.join(","));
        }
        Ok(out)
    }
}
