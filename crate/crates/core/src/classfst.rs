//! Per-class probabilistic automata built from entity lists.
//!
//! Each automaton is a deterministic, acyclic trie whose outgoing arc
//! probabilities plus the state's exit probability sum to one. States are
//! numbered breadth-first with arcs sorted by symbol, so every arc points to
//! a higher state id and the start state is 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::vocab::{SymbolId, Vocabulary};

const MAGIC: &[u8; 4] = b"NCFS";
const VERSION: u32 = 1;
/// Tolerance for the per-state stochasticity check.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u32);

impl StateId {
    pub const START: StateId = StateId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FstArc {
    pub symbol: SymbolId,
    pub prob: f64,
    pub next: StateId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FstState {
    /// Sorted by symbol, at most one arc per symbol.
    pub arcs: Vec<FstArc>,
    pub exit: f64,
}

/// One entity: its symbols and a positive count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub symbols: Vec<SymbolId>,
    pub count: u64,
}

impl Entity {
    pub fn new(symbols: Vec<SymbolId>) -> Self {
        Entity { symbols, count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbClassFst {
    class: String,
    states: Vec<FstState>,
    entity_count: u64,
    total_weight: u64,
}

#[derive(Default)]
struct TrieNode {
    children: BTreeMap<SymbolId, usize>,
    through: u64,
    ending: u64,
}

impl ProbClassFst {
    /// Builds the relative-frequency trie. Duplicate entities have their
    /// counts summed.
    pub fn build(class: &str, entities: &[Entity]) -> Result<Self> {
        let bad = |reason: String| Error::Entities {
            class: class.to_string(),
            reason,
        };
        if entities.is_empty() {
            return Err(bad("no entities".into()));
        }
        let mut nodes = vec![TrieNode::default()];
        let mut total: u64 = 0;
        for (i, e) in entities.iter().enumerate() {
            if e.symbols.is_empty() {
                return Err(bad(format!("entity {} is empty", i + 1)));
            }
            if e.count == 0 {
                return Err(bad(format!("entity {} has zero count", i + 1)));
            }
            total = total
                .checked_add(e.count)
                .ok_or_else(|| bad("total count overflows".into()))?;
            let mut cur = 0;
            nodes[0].through += e.count;
            for &sym in &e.symbols {
                let next = match nodes[cur].children.get(&sym) {
                    Some(&n) => n,
                    None => {
                        nodes.push(TrieNode::default());
                        let n = nodes.len() - 1;
                        nodes[cur].children.insert(sym, n);
                        n
                    }
                };
                nodes[next].through += e.count;
                cur = next;
            }
            nodes[cur].ending += e.count;
        }
        let entity_count = nodes.iter().filter(|n| n.ending > 0).count() as u64;

        // Canonical breadth-first numbering.
        let mut order = vec![0usize];
        let mut new_id = vec![0u32; nodes.len()];
        let mut head = 0;
        while head < order.len() {
            let n = order[head];
            head += 1;
            for &child in nodes[n].children.values() {
                new_id[child] = order.len() as u32;
                order.push(child);
            }
        }
        let states = order
            .iter()
            .map(|&n| {
                let node = &nodes[n];
                let denom = node.through as f64;
                FstState {
                    arcs: node
                        .children
                        .iter()
                        .map(|(&symbol, &child)| FstArc {
                            symbol,
                            prob: nodes[child].through as f64 / denom,
                            next: StateId(new_id[child]),
                        })
                        .collect(),
                    exit: node.ending as f64 / denom,
                }
            })
            .collect();
        Ok(ProbClassFst {
            class: class.to_string(),
            states,
            entity_count,
            total_weight: total,
        })
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.states.iter().map(|s| s.arcs.len()).sum()
    }

    pub fn entity_count(&self) -> u64 {
        self.entity_count
    }

    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn start(&self) -> StateId {
        StateId::START
    }

    pub fn states(&self) -> &[FstState] {
        &self.states
    }

    pub fn state(&self, state: StateId) -> Result<&FstState> {
        self.states
            .get(state.index())
            .ok_or(Error::UnknownState(state.0))
    }

    fn arc(&self, state: StateId, symbol: SymbolId) -> Result<Option<&FstArc>> {
        let s = self.state(state)?;
        Ok(s.arcs
            .binary_search_by_key(&symbol, |a| a.symbol)
            .ok()
            .map(|i| &s.arcs[i]))
    }

    pub fn step(&self, state: StateId, symbol: SymbolId) -> Result<Option<StateId>> {
        Ok(self.arc(state, symbol)?.map(|a| a.next))
    }

    pub fn arc_prob(&self, state: StateId, symbol: SymbolId) -> Result<f64> {
        Ok(self.arc(state, symbol)?.map_or(0.0, |a| a.prob))
    }

    pub fn exit_prob(&self, state: StateId) -> Result<f64> {
        Ok(self.state(state)?.exit)
    }

    /// Follows `symbols` from the start state.
    pub fn walk(&self, symbols: &[SymbolId]) -> Option<StateId> {
        let mut cur = StateId::START;
        for &sym in symbols {
            cur = self.step(cur, sym).ok()??;
        }
        Some(cur)
    }

    /// Checks every structural and stochastic invariant.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::FstInvariant {
                class: self.class.clone(),
                reason,
            })
        };
        if self.states.is_empty() {
            return fail("no states".into());
        }
        let mut has_incoming = vec![false; self.states.len()];
        has_incoming[0] = true;
        for (i, s) in self.states.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.exit) {
                return fail(format!("state {i}: exit probability {} out of range", s.exit));
            }
            let mut sum = s.exit;
            for (j, a) in s.arcs.iter().enumerate() {
                if j > 0 && s.arcs[j - 1].symbol >= a.symbol {
                    return fail(format!("state {i}: arcs not sorted or not deterministic"));
                }
                if !(a.prob > 0.0 && a.prob <= 1.0) {
                    return fail(format!("state {i}: arc probability {} out of range", a.prob));
                }
                // Forward-only numbering gives acyclicity and rules out loop-back to start.
                if a.next.index() <= i || a.next.index() >= self.states.len() {
                    return fail(format!("state {i}: arc to {} breaks forward numbering", a.next.0));
                }
                has_incoming[a.next.index()] = true;
                sum += a.prob;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return fail(format!("state {i}: outgoing mass {sum} != 1"));
            }
            if s.exit == 1.0 && !s.arcs.is_empty() {
                return fail(format!("state {i}: arcs leave a state with exit 1"));
            }
        }
        if self.states[0].exit != 0.0 {
            return fail("start state has nonzero exit (empty entity)".into());
        }
        if let Some(i) = has_incoming.iter().position(|&b| !b) {
            return fail(format!("state {i} unreachable"));
        }
        Ok(())
    }

    /// Checks that every arc symbol is a sub-word of a vocabulary of `vocab_len` symbols.
    pub fn validate_symbols(&self, vocab_len: usize) -> Result<()> {
        for (i, s) in self.states.iter().enumerate() {
            if let Some(a) = s.arcs.iter().find(|a| a.symbol.index() >= vocab_len) {
                return Err(Error::FstInvariant {
                    class: self.class.clone(),
                    reason: format!("state {i}: symbol id {} outside vocabulary", a.symbol),
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.str(&self.class);
        w.u64(self.entity_count);
        w.u64(self.total_weight);
        w.u32(self.states.len() as u32);
        for s in &self.states {
            w.f64(s.exit);
            w.u32(s.arcs.len() as u32);
            for a in &s.arcs {
                w.u32(a.symbol.0);
                w.f64(a.prob);
                w.u32(a.next.0);
            }
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open("class automaton", data, MAGIC, VERSION)?;
        let class = r.str()?;
        let entity_count = r.u64()?;
        let total_weight = r.u64()?;
        let n = r.len(12)?;
        let mut states = Vec::with_capacity(n);
        for _ in 0..n {
            let exit = r.f64()?;
            let k = r.len(16)?;
            let mut arcs = Vec::with_capacity(k);
            for _ in 0..k {
                let symbol = SymbolId(r.u32()?);
                let prob = r.f64()?;
                let next = StateId(r.u32()?);
                arcs.push(FstArc { symbol, prob, next });
            }
            states.push(FstState { arcs, exit });
        }
        r.finish()?;
        let fst = ProbClassFst {
            class,
            states,
            entity_count,
            total_weight,
        };
        fst.validate()?;
        Ok(fst)
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

    /// One `src symbol prob dst` line per arc and one `src EXIT prob` line
    /// per state with nonzero exit.
    pub fn dump_text(&self, vocab: Option<&Vocabulary>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} states={} entities={}", self.class, self.states.len(), self.entity_count);
        for (i, s) in self.states.iter().enumerate() {
            for a in &s.arcs {
                let sym = match vocab {
                    Some(v) => v.symbol(a.symbol).to_string(),
                    None => a.symbol.0.to_string(),
                };
                let _ = writeln!(out, "{i}\t{sym}\t{}\t{}", a.prob, a.next.0);
            }
            if s.exit > 0.0 {
                let _ = writeln!(out, "{i}\tEXIT\t{}", s.exit);
            }
        }
        out
    }
}

/// Parses an entity list: one entity per line, symbols space-separated,
/// optional `TAB count` suffix. Blank lines are skipped.
pub fn parse_entities(text: &str, vocab: &Vocabulary) -> Result<Vec<Entity>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (syms, count) = match line.split_once('\t') {
            Some((s, c)) => {
                let count: u64 = c.trim().parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    reason: format!("bad count {c:?}"),
                })?;
                if count == 0 {
                    return Err(Error::Parse {
                        line: i + 1,
                        reason: "count must be positive".into(),
                    });
                }
                (s, count)
            }
            None => (line, 1),
        };
        let symbols = vocab.parse_symbols(syms).map_err(|e| Error::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(Entity { symbols, count });
    }
    Ok(out)
}
