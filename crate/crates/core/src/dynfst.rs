//! The model as an infinite deterministic automaton, expanded on demand.
//!
//! A state is a symbol history; its payload is the alignment beam for that
//! history. Arc weights are `-log P(symbol | history)` and the final weight
//! is `-log P(EOS | history)`. Beams are evicted least-recently-used and
//! rebuilt from the nearest resident ancestor when needed again; since
//! extension is deterministic, rebuilt beams are bit-identical.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nfclm::{AlignmentBeam, ClassPosition, NfclmModel};
use crate::vocab::SymbolId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DynStateId(pub u32);

/// Arc out of a state: destination and weight, or `None` when the symbol
/// has zero probability under every retained alignment.
pub type DynArc = Option<(DynStateId, f64)>;

#[derive(Debug, Clone)]
struct DynState {
    history: Vec<SymbolId>,
    beam: Option<AlignmentBeam>,
    arcs: BTreeMap<SymbolId, DynArc>,
    final_weight: Option<Option<f64>>,
    last_used: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    /// States ever created (ids are never reused).
    pub states: usize,
    /// States whose beam is currently held.
    pub resident: usize,
    pub evictions: u64,
    /// Beams rebuilt after eviction.
    pub replays: u64,
    /// Extensions performed while rebuilding.
    pub replayed_steps: u64,
}

pub struct DynFstSession<'m> {
    model: &'m NfclmModel,
    states: Vec<DynState>,
    index: HashMap<Vec<SymbolId>, DynStateId>,
    capacity: Option<usize>,
    clock: u64,
    stats: SessionStats,
}

impl<'m> DynFstSession<'m> {
    pub fn new(model: &'m NfclmModel) -> Self {
        let start = DynState {
            history: Vec::new(),
            beam: Some(model.initial_beam()),
            arcs: BTreeMap::new(),
            final_weight: None,
            last_used: 0,
        };
        let mut index = HashMap::new();
        index.insert(Vec::new(), DynStateId(0));
        DynFstSession {
            model,
            states: vec![start],
            index,
            capacity: None,
            clock: 0,
            stats: SessionStats {
                states: 1,
                resident: 1,
                ..SessionStats::default()
            },
        }
    }

    /// Keeps at most `capacity` beams resident (the start state always is).
    pub fn with_capacity(model: &'m NfclmModel, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("session capacity must be >= 1".into()));
        }
        let mut s = Self::new(model);
        s.capacity = Some(capacity);
        Ok(s)
    }

    pub fn model(&self) -> &'m NfclmModel {
        self.model
    }

    pub fn start_state(&self) -> DynStateId {
        DynStateId(0)
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    fn get(&self, id: DynStateId) -> Result<&DynState> {
        self.states
            .get(id.0 as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown dynamic state {}", id.0)))
    }

    pub fn history(&self, id: DynStateId) -> Result<&[SymbolId]> {
        Ok(&self.get(id)?.history)
    }

    pub fn is_resident(&self, id: DynStateId) -> bool {
        self.states
            .get(id.0 as usize)
            .is_some_and(|s| s.beam.is_some())
    }

    /// State for `history`, if it has been created.
    pub fn lookup(&self, history: &[SymbolId]) -> Option<DynStateId> {
        self.index.get(history).copied()
    }

    fn touch(&mut self, id: DynStateId) {
        self.clock += 1;
        self.states[id.0 as usize].last_used = self.clock;
    }

    fn intern(&mut self, history: Vec<SymbolId>) -> DynStateId {
        if let Some(&id) = self.index.get(&history) {
            return id;
        }
        let id = DynStateId(self.states.len() as u32);
        self.index.insert(history.clone(), id);
        self.states.push(DynState {
            history,
            beam: None,
            arcs: BTreeMap::new(),
            final_weight: None,
            last_used: 0,
        });
        self.stats.states += 1;
        id
    }

    fn set_beam(&mut self, id: DynStateId, beam: AlignmentBeam) {
        let st = &mut self.states[id.0 as usize];
        if st.beam.is_none() {
            st.beam = Some(beam);
            self.stats.resident += 1;
        }
    }

    /// Makes the beam of `id` resident, rebuilding it from the nearest
    /// resident ancestor if it was evicted.
    fn ensure_beam(&mut self, id: DynStateId) -> Result<()> {
        if self.states[id.0 as usize].beam.is_some() {
            return Ok(());
        }
        let history = self.states[id.0 as usize].history.clone();
        let (mut k, mut beam) = (0..history.len())
            .rev()
            .find_map(|k| {
                let anc = self.index.get(&history[..k])?;
                self.states[anc.0 as usize].beam.clone().map(|b| (k, b))
            })
            .expect("start state is always resident");
        while k < history.len() {
            beam = self.model.extend(&beam, history[k])?.beam;
            k += 1;
            self.stats.replayed_steps += 1;
        }
        self.stats.replays += 1;
        self.set_beam(id, beam);
        Ok(())
    }

    pub fn beam(&mut self, id: DynStateId) -> Result<&AlignmentBeam> {
        self.get(id)?;
        self.ensure_beam(id)?;
        self.touch(id);
        Ok(self.states[id.0 as usize].beam.as_ref().unwrap())
    }

    /// Follows `symbol` out of `id`, expanding the destination on first use.
    pub fn transition(&mut self, id: DynStateId, symbol: SymbolId) -> Result<DynArc> {
        self.get(id)?;
        self.touch(id);
        if let Some(&arc) = self.states[id.0 as usize].arcs.get(&symbol) {
            if let Some((dst, _)) = arc {
                self.touch(dst);
            }
            return Ok(arc);
        }
        self.ensure_beam(id)?;
        let src = self.states[id.0 as usize].beam.as_ref().unwrap();
        let arc = match self.model.extend(src, symbol) {
            Ok(ext) => {
                let mut history = self.states[id.0 as usize].history.clone();
                history.push(symbol);
                let dst = self.intern(history);
                self.set_beam(dst, ext.beam);
                self.touch(dst);
                Some((dst, -ext.log_prob))
            }
            Err(Error::DeadHistory { .. }) => None,
            Err(e) => return Err(e),
        };
        self.states[id.0 as usize].arcs.insert(symbol, arc);
        self.enforce_capacity();
        Ok(arc)
    }

    /// `-log P(EOS | history)`, or `None` when no retained alignment can end here.
    pub fn final_weight(&mut self, id: DynStateId) -> Result<Option<f64>> {
        self.get(id)?;
        self.touch(id);
        if let Some(w) = self.states[id.0 as usize].final_weight {
            return Ok(w);
        }
        self.ensure_beam(id)?;
        let beam = self.states[id.0 as usize].beam.as_ref().unwrap();
        let lp = self.model.beam_eos_logprob(beam)?;
        let w = (lp > f64::NEG_INFINITY).then_some(-lp);
        self.states[id.0 as usize].final_weight = Some(w);
        self.enforce_capacity();
        Ok(w)
    }

    /// Follows `symbols` from the start state. `None` if some arc is missing.
    pub fn walk(&mut self, symbols: &[SymbolId]) -> Result<Option<(DynStateId, f64)>> {
        let mut cur = self.start_state();
        let mut total = 0.0;
        for &w in symbols {
            match self.transition(cur, w)? {
                Some((dst, weight)) => {
                    cur = dst;
                    total += weight;
                }
                None => return Ok(None),
            }
        }
        Ok(Some((cur, total)))
    }

    /// Drops the beam and cached arcs of `id`. The start state is never evicted.
    pub fn evict(&mut self, id: DynStateId) -> bool {
        if id == self.start_state() {
            return false;
        }
        match self.states.get_mut(id.0 as usize) {
            Some(st) if st.beam.is_some() => {
                st.beam = None;
                st.arcs.clear();
                st.final_weight = None;
                self.stats.resident -= 1;
                self.stats.evictions += 1;
                true
            }
            _ => false,
        }
    }

    /// Evicts least-recently-used beams until the capacity holds.
    pub fn enforce_capacity(&mut self) -> SessionStats {
        if let Some(cap) = self.capacity {
            while self.stats.resident > cap {
                let victim = self
                    .states
                    .iter()
                    .enumerate()
                    .skip(1)
                    .filter(|(_, s)| s.beam.is_some())
                    .min_by_key(|(i, s)| (s.last_used, *i))
                    .map(|(i, _)| DynStateId(i as u32));
                match victim {
                    Some(v) => {
                        self.evict(v);
                    }
                    None => break,
                }
            }
        }
        self.stats
    }

    /// Text rendering of the expanded sub-graph:
    ///
    /// ```text
    /// state <id> <history or -> <final weight, - if none, ? if not computed>
    /// hyp <id> <decider history> <bg | class:state> <log posterior>
    /// arc <src> <symbol> <weight> <dst>
    /// noarc <src> <symbol>
    /// ```
    ///
    /// Fields are tab-separated; hypotheses are listed only for resident states.
    pub fn dump(&self) -> String {
        let vocab = self.model.vocab();
        let classes = self.model.classes();
        let mut out = String::new();
        for (i, st) in self.states.iter().enumerate() {
            let hist = if st.history.is_empty() {
                "-".to_string()
            } else {
                let parts: Vec<&str> = st.history.iter().map(|&w| vocab.symbol(w)).collect();
                parts.join(",")
            };
            let fin = match st.final_weight {
                Some(Some(w)) => w.to_string(),
                Some(None) => "-".to_string(),
                None => "?".to_string(),
            };
            let _ = writeln!(out, "state\t{i}\t{hist}\t{fin}");
            if let Some(beam) = &st.beam {
                for h in beam.hypotheses() {
                    let dh = h.render_history(vocab, classes);
                    let dh = if dh.is_empty() { "-".to_string() } else { dh };
                    let pos = match h.position {
                        ClassPosition::Background => "bg".to_string(),
                        ClassPosition::InClass { class, state } => {
                            format!("{}:{}", classes.label(class), state.0)
                        }
                    };
                    let _ = writeln!(out, "hyp\t{i}\t{dh}\t{pos}\t{}", beam.log_posterior(h));
                }
            }
        }
        for (i, st) in self.states.iter().enumerate() {
            for (&sym, arc) in &st.arcs {
                match arc {
                    Some((dst, w)) => {
                        let _ = writeln!(out, "arc\t{i}\t{}\t{w}\t{}", vocab.symbol(sym), dst.0);
                    }
                    None => {
                        let _ = writeln!(out, "noarc\t{i}\t{}", vocab.symbol(sym));
                    }
                }
            }
        }
        out
    }
}
