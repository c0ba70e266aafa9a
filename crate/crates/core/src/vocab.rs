//! Sub-word vocabulary, greedy tokenizer and the class-label alphabet.
//!
//! Symbol ids follow file order. Two sentinels are appended after the
//! sub-words: EOS at id `len()` and BOS at id `len() + 1`, so that the ids
//! `0..=len()` form the predicted alphabet of a background model (V plus EOS).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
/// Start-of-word marker.
pub const WORD_MARKER: char = '_';
pub const BACKGROUND: &str = "@bg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolId(pub u32);

impl SymbolId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u32);

impl ClassId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, SymbolId>,
    max_symbol_len: usize,
}

fn check_symbol(sym: &str, line: usize) -> Result<()> {
    let reason = if sym.is_empty() {
        "empty symbol"
    } else if sym.chars().any(char::is_whitespace) {
        "contains whitespace"
    } else if sym == BOS || sym == EOS {
        "reserved sentinel"
    } else if sym.starts_with('@') {
        "'@' prefix is reserved for class labels"
    } else {
        return Ok(());
    };
    Err(Error::InvalidSymbol {
        symbol: sym.to_string(),
        line,
        reason: reason.to_string(),
    })
}

impl Vocabulary {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for (i, s) in symbols.into_iter().enumerate() {
            let s = s.into();
            let line = i + 1;
            check_symbol(&s, line)?;
            if index.contains_key(&s) {
                return Err(Error::DuplicateSymbol { symbol: s, line });
            }
            index.insert(s.clone(), SymbolId(out.len() as u32));
            out.push(s);
        }
        if out.is_empty() {
            return Err(Error::Empty("vocabulary".into()));
        }
        let max_symbol_len = out.iter().map(|s| s.len()).max().unwrap_or(0);
        Ok(Vocabulary {
            symbols: out,
            index,
            max_symbol_len,
        })
    }

    /// Parses one symbol per line. A single trailing newline is allowed.
    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        Self::new(lines)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for sym in &self.symbols {
            s.push_str(sym);
            s.push('\n');
        }
        s
    }

    /// Number of sub-word symbols, sentinels excluded.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn eos(&self) -> SymbolId {
        SymbolId(self.symbols.len() as u32)
    }

    pub fn bos(&self) -> SymbolId {
        SymbolId(self.symbols.len() as u32 + 1)
    }

    pub fn is_subword(&self, id: SymbolId) -> bool {
        id.index() < self.symbols.len()
    }

    /// Looks up a sub-word or sentinel.
    pub fn id(&self, symbol: &str) -> Option<SymbolId> {
        match symbol {
            EOS => Some(self.eos()),
            BOS => Some(self.bos()),
            _ => self.index.get(symbol).copied(),
        }
    }

    pub fn symbol(&self, id: SymbolId) -> &str {
        match id.index() {
            i if i < self.symbols.len() => &self.symbols[i],
            i if i == self.symbols.len() => EOS,
            i if i == self.symbols.len() + 1 => BOS,
            _ => "<invalid>",
        }
    }

    pub fn symbols(&self) -> impl Iterator<Item = (SymbolId, &str)> {
        self.symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (SymbolId(i as u32), s.as_str()))
    }

    /// Maps space-separated pre-tokenized symbols to ids. Sentinels are rejected.
    pub fn parse_symbols(&self, line: &str) -> Result<Vec<SymbolId>> {
        line.split_whitespace()
            .map(|tok| {
                self.index
                    .get(tok)
                    .copied()
                    .ok_or_else(|| Error::UnknownSymbol(tok.to_string()))
            })
            .collect()
    }

    pub fn render(&self, ids: &[SymbolId]) -> String {
        let parts: Vec<&str> = ids.iter().map(|&id| self.symbol(id)).collect();
        parts.join(" ")
    }

    /// Greedy longest-match segmentation. Each word gets the start-of-word
    /// marker before matching.
    pub fn tokenize(&self, text: &str) -> Result<Vec<SymbolId>> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let marked = format!("{WORD_MARKER}{word}");
            let mut pos = 0;
            while pos < marked.len() {
                let rest = &marked[pos..];
                let limit = rest.len().min(self.max_symbol_len);
                let found = rest
                    .char_indices()
                    .map(|(i, c)| i + c.len_utf8())
                    .take_while(|&end| end <= limit)
                    .collect::<Vec<_>>()
                    .into_iter()
                    .rev()
                    .find_map(|end| self.index.get(&rest[..end]).map(|&id| (id, end)));
                match found {
                    Some((id, end)) => {
                        out.push(id);
                        pos += end;
                    }
                    None => {
                        return Err(Error::Unsegmentable {
                            word: word.to_string(),
                            // offset within the unmarked word
                            offset: pos.saturating_sub(WORD_MARKER.len_utf8()),
                        })
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn detokenize(&self, ids: &[SymbolId]) -> String {
        detokenize(ids.iter().map(|&id| self.symbol(id)))
    }
}

/// Concatenates symbols, turning start-of-word markers into single spaces.
pub fn detokenize<'a>(symbols: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for sym in symbols {
        match sym.strip_prefix(WORD_MARKER) {
            Some(rest) => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(rest);
            }
            None => out.push_str(sym),
        }
    }
    out
}

/// Class labels, `@bg` included. Epsilon is never a member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassAlphabet {
    labels: Vec<String>,
    background: ClassId,
}

impl ClassAlphabet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut background = None;
        for (i, l) in labels.iter().enumerate() {
            if !l.starts_with('@') || l.len() < 2 || l.chars().any(char::is_whitespace) {
                return Err(Error::ClassAlphabet(format!(
                    "line {}: {l:?} is not an '@'-prefixed name",
                    i + 1
                )));
            }
            if labels[..i].contains(l) {
                return Err(Error::ClassAlphabet(format!("line {}: duplicate class {l}", i + 1)));
            }
            if l == BACKGROUND {
                background = Some(ClassId(i as u32));
            }
        }
        let background =
            background.ok_or_else(|| Error::ClassAlphabet(format!("{BACKGROUND} is mandatory")))?;
        Ok(ClassAlphabet { labels, background })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let labels: Vec<&str> = text
            .lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .collect();
        Self::new(labels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        self.labels.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn background(&self) -> ClassId {
        self.background
    }

    pub fn id(&self, label: &str) -> Option<ClassId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| ClassId(i as u32))
    }

    pub fn label(&self, id: ClassId) -> &str {
        &self.labels[id.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> {
        (0..self.labels.len() as u32).map(ClassId)
    }

    /// Non-background classes.
    pub fn entity_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.ids().filter(move |&c| c != self.background)
    }

    pub fn check_disjoint(&self, vocab: &Vocabulary) -> Result<()> {
        match self.labels.iter().find(|l| vocab.id(l).is_some()) {
            Some(l) => Err(Error::ClassAlphabet(format!("{l} is also a vocabulary symbol"))),
            None => Ok(()),
        }
    }
}
