use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AlignLabel, AlignmentHypothesis, ClassPosition, NfclmModel};
use crate::error::Result;
use crate::vocab::SymbolId;

/// Index drawn from unnormalized non-negative weights; the last positive
/// entry absorbs rounding.
fn draw(rng: &mut impl Rng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if u < w {
            return Some(i);
        }
        u -= w;
        last = Some(i);
    }
    last
}

impl NfclmModel {
    /// Ancestral sampling along a single alignment: draw a label from the
    /// emission distribution, then a symbol from its component, until the
    /// background emits EOS or `max_len` symbols have been produced.
    pub fn sample(&self, max_len: usize, seed: u64) -> Result<Vec<SymbolId>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, max_len)
    }

    pub fn sample_with(&self, rng: &mut impl Rng, max_len: usize) -> Result<Vec<SymbolId>> {
        let bg = self.classes.background();
        let labels: Vec<AlignLabel> = self.labels().collect();
        let eos = self.vocab.eos();
        let mut hyp = AlignmentHypothesis::initial();
        let mut out = Vec::new();
        while out.len() < max_len {
            let emission = self.class_emission_dist(&hyp)?;
            let Some(li) = draw(rng, &emission) else { break };
            let label = labels[li];
            let w = match (label, hyp.position) {
                (AlignLabel::Class(c), _) if c == bg => {
                    let dist = self.background_dist(&out)?;
                    match draw(rng, &dist) {
                        Some(i) => SymbolId(i as u32),
                        None => break,
                    }
                }
                (AlignLabel::Class(c), _) => {
                    let fst = self.fst(c)?;
                    let arcs = &fst.state(fst.start())?.arcs;
                    let weights: Vec<f64> = arcs.iter().map(|a| a.prob).collect();
                    match draw(rng, &weights) {
                        Some(i) => arcs[i].symbol,
                        None => break,
                    }
                }
                (AlignLabel::Epsilon, ClassPosition::InClass { class, state }) => {
                    let arcs = &self.fst(class)?.state(state)?.arcs;
                    let weights: Vec<f64> = arcs.iter().map(|a| a.prob).collect();
                    match draw(rng, &weights) {
                        Some(i) => arcs[i].symbol,
                        None => break,
                    }
                }
                (AlignLabel::Epsilon, ClassPosition::Background) => break,
            };
            if w == eos {
                break;
            }
            let Some((decider_history, position)) = self.successor(&hyp, label, w)? else {
                break;
            };
            hyp = AlignmentHypothesis {
                decider_history,
                position,
                log_weight: 0.0,
            };
            out.push(w);
        }
        Ok(out)
    }
}
