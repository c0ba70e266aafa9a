use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nfclm::{NfclmModel, ScoringMode};

/// One n-best hypothesis with externally supplied log-domain scores.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub utt: String,
    pub asr: f64,
    pub ilm: f64,
    /// Space-separated sub-word symbols.
    pub hypothesis: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub lambda: f64,
    pub mu: f64,
}

impl FusionWeights {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("mu", mu)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(FusionWeights { lambda, mu })
    }

    /// `asr + lambda * lm - mu * ilm`.
    pub fn fuse(&self, asr: f64, lm: f64, ilm: f64) -> f64 {
        asr + self.lambda * lm - self.mu * ilm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescoredEntry {
    pub entry: NBestEntry,
    /// Position within its utterance in the input.
    pub orig_rank: usize,
    pub new_rank: usize,
    pub lm: Option<f64>,
    pub fused: Option<f64>,
    /// Why the entry could not be scored; such entries rank last.
    pub error: Option<String>,
}

/// Parses `utt TAB asr TAB ilm TAB tokens` lines. Blank lines are skipped.
pub fn parse_nbest(text: &str) -> Result<Vec<NBestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Parse { line: i + 1, reason };
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let score = |s: &str, name: &str| -> Result<f64> {
            match s.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("{name} score {s:?} is not a finite number"))),
            }
        };
        out.push(NBestEntry {
            utt: fields[0].to_string(),
            asr: score(fields[1], "asr")?,
            ilm: score(fields[2], "ilm")?,
            hypothesis: fields[3].trim().to_string(),
        });
    }
    Ok(out)
}

/// Parses `utt TAB tokens` reference lines.
pub fn parse_references(text: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (utt, tokens) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            reason: "expected utt TAB tokens".into(),
        })?;
        let norm: Vec<&str> = tokens.split_whitespace().collect();
        out.insert(utt.to_string(), norm.join(" "));
    }
    Ok(out)
}

/// Ranks entries per utterance (utterances in order of first appearance) by
/// fused score, descending; ties keep input order. Unscorable entries go last.
pub fn rescore_with_scores(
    entries: &[NBestEntry],
    lm_scores: &[std::result::Result<f64, String>],
    weights: FusionWeights,
) -> Result<Vec<RescoredEntry>> {
    if entries.is_empty() {
        return Err(Error::Empty("n-best list".into()));
    }
    if entries.len() != lm_scores.len() {
        return Err(Error::InvalidParameter(format!(
            "{} entries but {} LM scores",
            entries.len(),
            lm_scores.len()
        )));
    }
    let mut groups: indexmap::IndexMap<&str, Vec<RescoredEntry>> = indexmap::IndexMap::new();
    for (entry, lm) in entries.iter().zip(lm_scores) {
        let group = groups.entry(entry.utt.as_str()).or_default();
        let (lm, fused, error) = match lm {
            Ok(lm) if lm.is_finite() => (Some(*lm), Some(weights.fuse(entry.asr, *lm, entry.ilm)), None),
            Ok(lm) => (None, None, Some(format!("LM score {lm}"))),
            Err(e) => (None, None, Some(e.clone())),
        };
        group.push(RescoredEntry {
            entry: entry.clone(),
            orig_rank: group.len(),
            new_rank: 0,
            lm,
            fused,
            error,
        });
    }
    let mut out = Vec::with_capacity(entries.len());
    for (_, mut group) in groups {
        group.sort_by(|a, b| match (a.fused, b.fused) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        for (rank, mut e) in group.into_iter().enumerate() {
            e.new_rank = rank;
            out.push(e);
        }
    }
    Ok(out)
}

/// LM log-probability of each hypothesis, or the reason it has none.
pub fn lm_scores(model: &NfclmModel, entries: &[NBestEntry], mode: ScoringMode) -> Vec<std::result::Result<f64, String>> {
    entries
        .par_iter()
        .map(|e| {
            model
                .vocab()
                .parse_symbols(&e.hypothesis)
                .and_then(|s| model.sequence_logprob(&s, mode))
                .map_err(|err| err.to_string())
        })
        .collect()
}

pub fn rescore_nbest(
    model: &NfclmModel,
    entries: &[NBestEntry],
    weights: FusionWeights,
    mode: ScoringMode,
) -> Result<Vec<RescoredEntry>> {
    rescore_with_scores(entries, &lm_scores(model, entries, mode), weights)
}

/// Smallest `lambda >= 0` at which `target` reaches the top of `group`
/// (all entries of one utterance with finite LM scores), or `None` if it
/// never does. At the boundary itself the entries tie.
pub fn crossover_lambda(group: &[(f64, f64, f64)], target: usize, mu: f64) -> Option<f64> {
    let (ta, tl, ti) = group[target];
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    for (j, &(a, l, i)) in group.iter().enumerate() {
        if j == target {
            continue;
        }
        // competitor leads by `lead - lambda * gain`
        let lead = (a - mu * i) - (ta - mu * ti);
        let gain = tl - l;
        if gain > 0.0 {
            lo = lo.max(lead / gain);
        } else if gain < 0.0 {
            hi = hi.min(lead / gain);
        } else if lead > 0.0 {
            return None;
        }
    }
    (lo <= hi).then_some(lo)
}

/// Fraction of utterances whose top entry matches the reference.
pub fn top1_accuracy(rescored: &[RescoredEntry], refs: &HashMap<String, String>) -> (usize, usize) {
    let mut hit = 0;
    let mut total = 0;
    for e in rescored.iter().filter(|e| e.new_rank == 0) {
        if let Some(r) = refs.get(&e.entry.utt) {
            total += 1;
            let hyp: Vec<&str> = e.entry.hypothesis.split_whitespace().collect();
            if hyp.join(" ") == *r {
                hit += 1;
            }
        }
    }
    (hit, total)
}

/// `utt new_rank orig_rank fused asr lm ilm status hypothesis`, tab-separated.
pub fn format_rescored(rescored: &[RescoredEntry]) -> String {
    let mut out = String::new();
    let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    for e in rescored {
        let status = e.error.as_deref().map_or_else(|| "ok".to_string(), |m| format!("error: {m}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.entry.utt,
            e.new_rank,
            e.orig_rank,
            num(e.fused),
            e.entry.asr,
            num(e.lm),
            e.entry.ilm,
            status,
            e.entry.hypothesis
        );
    }
    out
}
