use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::ConditionalSymbolModel;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NNGM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    /// Sorted by target.
    targets: Vec<(u32, u64)>,
}

impl ContextCounts {
    fn count(&self, target: u32) -> u64 {
        self.targets
            .binary_search_by_key(&target, |&(t, _)| t)
            .map_or(0, |i| self.targets[i].1)
    }
}

/// Interpolated absolute-discounting n-gram over a context alphabet
/// `0..num_context` and an outcome alphabet `0..num_outcomes`, backing off to
/// a uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BackoffNGram {
    order: usize,
    discount: f64,
    num_outcomes: u32,
    num_context: u32,
    bos: u32,
    /// `levels[k]` holds contexts of length `k`.
    levels: Vec<HashMap<Box<[u32]>, ContextCounts>>,
}

/// Outcome counts per context at one order.
type RawCounts = HashMap<Box<[u32]>, BTreeMap<u32, u64>>;

/// Accumulates `(history, outcome)` events for every order at once.
#[derive(Debug, Clone)]
pub struct NGramCounter {
    order: usize,
    num_outcomes: u32,
    num_context: u32,
    bos: u32,
    levels: Vec<RawCounts>,
    events: u64,
}

fn padded_context(history: &[u32], k: usize, bos: u32, buf: &mut Vec<u32>) {
    buf.clear();
    let take = k.min(history.len());
    buf.extend(std::iter::repeat_n(bos, k - take));
    buf.extend_from_slice(&history[history.len() - take..]);
}

impl NGramCounter {
    pub fn new(order: usize, num_outcomes: u32, num_context: u32, bos: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("n-gram order must be >= 1".into()));
        }
        if num_outcomes == 0 {
            return Err(Error::InvalidParameter("empty outcome alphabet".into()));
        }
        if bos >= num_context {
            return Err(Error::InvalidParameter("BOS outside context alphabet".into()));
        }
        Ok(NGramCounter {
            order,
            num_outcomes,
            num_context,
            bos,
            levels: vec![HashMap::new(); order],
            events: 0,
        })
    }

    pub fn add(&mut self, history: &[u32], outcome: u32) -> Result<()> {
        if outcome >= self.num_outcomes {
            return Err(Error::OutOfAlphabet(outcome));
        }
        let start = history.len().saturating_sub(self.order - 1);
        if let Some(&bad) = history[start..].iter().find(|&&t| t >= self.num_context) {
            return Err(Error::OutOfAlphabet(bad));
        }
        let mut buf = Vec::with_capacity(self.order);
        for k in 0..self.order {
            padded_context(history, k, self.bos, &mut buf);
            let entry = self.levels[k].entry(buf.as_slice().into()).or_default();
            *entry.entry(outcome).or_insert(0) += 1;
        }
        self.events += 1;
        Ok(())
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn finish(self, discount: f64) -> Result<BackoffNGram> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidParameter(format!("discount {discount} not in (0,1)")));
        }
        if self.events == 0 {
            return Err(Error::Empty("training corpus".into()));
        }
        let levels = self
            .levels
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|(ctx, targets)| {
                        let total = targets.values().sum();
                        (ctx, ContextCounts { total, targets: targets.into_iter().collect() })
                    })
                    .collect()
            })
            .collect();
        Ok(BackoffNGram {
            order: self.order,
            discount,
            num_outcomes: self.num_outcomes,
            num_context: self.num_context,
            bos: self.bos,
            levels,
        })
    }
}

impl BackoffNGram {
    /// Trains a sentence-level language model: each sentence is padded with
    /// BOS and terminated with `eos`, which must be an outcome.
    pub fn train_sentences(
        corpus: &[Vec<u32>],
        order: usize,
        discount: f64,
        num_outcomes: u32,
        num_context: u32,
        bos: u32,
        eos: u32,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("training corpus".into()));
        }
        let mut counter = NGramCounter::new(order, num_outcomes, num_context, bos)?;
        for sentence in corpus {
            for i in 0..sentence.len() {
                counter.add(&sentence[..i], sentence[i])?;
            }
            counter.add(sentence, eos)?;
        }
        counter.finish(discount)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn num_context(&self) -> u32 {
        self.num_context
    }

    pub fn bos(&self) -> u32 {
        self.bos
    }

    fn check_history(&self, history: &[u32]) -> Result<()> {
        match history.iter().find(|&&t| t >= self.num_context) {
            Some(&bad) => Err(Error::OutOfAlphabet(bad)),
            None => Ok(()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.order as u32);
        w.f64(self.discount);
        w.u32(self.num_outcomes);
        w.u32(self.num_context);
        w.u32(self.bos);
        for level in &self.levels {
            let mut ctxs: Vec<_> = level.iter().collect();
            ctxs.sort_by(|a, b| a.0.cmp(b.0));
            w.u32(ctxs.len() as u32);
            for (ctx, cc) in ctxs {
                for &t in ctx.iter() {
                    w.u32(t);
                }
                w.u32(cc.targets.len() as u32);
                for &(t, c) in &cc.targets {
                    w.u32(t);
                    w.u64(c);
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open("n-gram model", data, MAGIC, VERSION)?;
        let order = r.u32()? as usize;
        if order == 0 || order > 64 {
            return Err(r.error(format!("implausible order {order}")));
        }
        let discount = r.f64()?;
        if !(discount > 0.0 && discount < 1.0) {
            return Err(r.error(format!("discount {discount} not in (0,1)")));
        }
        let num_outcomes = r.u32()?;
        let num_context = r.u32()?;
        let bos = r.u32()?;
        if bos >= num_context || num_outcomes == 0 {
            return Err(r.error("inconsistent alphabet sizes"));
        }
        let mut levels = Vec::with_capacity(order);
        for k in 0..order {
            let n = r.len(4 * k + 4)?;
            let mut level = HashMap::with_capacity(n);
            for _ in 0..n {
                let at = r.offset();
                let mut ctx = Vec::with_capacity(k);
                for _ in 0..k {
                    let t = r.u32()?;
                    if t >= num_context {
                        return Err(r.error_at(at, format!("context token {t} out of range")));
                    }
                    ctx.push(t);
                }
                let m = r.len(12)?;
                let mut targets = Vec::with_capacity(m);
                for _ in 0..m {
                    let at = r.offset();
                    let t = r.u32()?;
                    let c = r.u64()?;
                    if t >= num_outcomes || c == 0 || targets.last().is_some_and(|&(p, _)| p >= t) {
                        return Err(r.error_at(at, "invalid target entry"));
                    }
                    targets.push((t, c));
                }
                if targets.is_empty() {
                    return Err(r.error_at(at, "context without targets"));
                }
                let total = targets.iter().map(|&(_, c)| c).sum();
                if level.insert(ctx.into_boxed_slice(), ContextCounts { total, targets }).is_some() {
                    return Err(r.error_at(at, "duplicate context"));
                }
            }
            levels.push(level);
        }
        r.finish()?;
        if levels[0].is_empty() {
            return Err(Error::Malformed {
                what: "n-gram model",
                offset: 0,
                reason: "no unigram counts".into(),
            });
        }
        Ok(BackoffNGram {
            order,
            discount,
            num_outcomes,
            num_context,
            bos,
            levels,
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

    /// `order<TAB>context<TAB>target<TAB>count`, contexts space-separated ids.
    pub fn dump_counts(&self) -> String {
        let mut out = String::new();
        for (k, level) in self.levels.iter().enumerate() {
            let mut ctxs: Vec<_> = level.iter().collect();
            ctxs.sort_by(|a, b| a.0.cmp(b.0));
            for (ctx, cc) in ctxs {
                let ctx: Vec<String> = ctx.iter().map(u32::to_string).collect();
                for &(t, c) in &cc.targets {
                    let _ = writeln!(out, "{}\t{}\t{t}\t{c}", k + 1, ctx.join(" "));
                }
            }
        }
        out
    }
}

impl ConditionalSymbolModel for BackoffNGram {
    fn num_outcomes(&self) -> usize {
        self.num_outcomes as usize
    }

    fn prob(&self, history: &[u32], outcome: u32) -> Result<f64> {
        if outcome >= self.num_outcomes {
            return Err(Error::OutOfAlphabet(outcome));
        }
        self.check_history(history)?;
        let mut p = 1.0 / self.num_outcomes as f64;
        let mut buf = Vec::with_capacity(self.order);
        for k in 0..self.order {
            padded_context(history, k, self.bos, &mut buf);
            if let Some(cc) = self.levels[k].get(buf.as_slice()) {
                let total = cc.total as f64;
                let c = cc.count(outcome) as f64;
                let backoff_mass = self.discount * cc.targets.len() as f64;
                p = ((c - self.discount).max(0.0) + backoff_mass * p) / total;
            }
        }
        Ok(p)
    }

    fn distribution(&self, history: &[u32]) -> Result<Vec<f64>> {
        self.check_history(history)?;
        let mut dist = vec![1.0 / self.num_outcomes as f64; self.num_outcomes as usize];
        let mut buf = Vec::with_capacity(self.order);
        for k in 0..self.order {
            padded_context(history, k, self.bos, &mut buf);
            if let Some(cc) = self.levels[k].get(buf.as_slice()) {
                let total = cc.total as f64;
                let scale = self.discount * cc.targets.len() as f64 / total;
                for p in dist.iter_mut() {
                    *p *= scale;
                }
                for &(t, c) in &cc.targets {
                    dist[t as usize] += (c as f64 - self.discount).max(0.0) / total;
                }
            }
        }
        Ok(dist)
    }
}

/// Uniform distribution over `n` outcomes, ignoring history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformModel {
    n: usize,
}

impl UniformModel {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "uniform model over an empty alphabet");
        UniformModel { n }
    }
}

impl ConditionalSymbolModel for UniformModel {
    fn num_outcomes(&self) -> usize {
        self.n
    }

    fn prob(&self, _history: &[u32], outcome: u32) -> Result<f64> {
        if outcome as usize >= self.n {
            return Err(Error::OutOfAlphabet(outcome));
        }
        Ok(1.0 / self.n as f64)
    }

    fn distribution(&self, _history: &[u32]) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.n as f64; self.n])
    }
}
