//! Whole-sequence functions over a symbol history and one of its class
//! alignments. The exact scorer is built only from these.

use std::fmt;

use crate::error::{Error, Result};
use crate::seqmodel::DeciderToken;
use crate::vocab::{ClassAlphabet, ClassId, SymbolId};

/// One entry of a class alignment: a class label or the continuation marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlignLabel {
    Class(ClassId),
    Epsilon,
}

impl AlignLabel {
    pub fn render(self, classes: &ClassAlphabet) -> &str {
        match self {
            AlignLabel::Class(c) => classes.label(c),
            AlignLabel::Epsilon => "<eps>",
        }
    }
}

impl fmt::Display for AlignLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlignLabel::Class(c) => write!(f, "c{}", c.0),
            AlignLabel::Epsilon => f.write_str("eps"),
        }
    }
}

/// The last non-epsilon label of `alignment` followed by `candidate`, or
/// epsilon if there is none.
pub fn last_class(alignment: &[AlignLabel], candidate: AlignLabel) -> AlignLabel {
    std::iter::once(&candidate)
        .chain(alignment.iter().rev())
        .copied()
        .find(|l| *l != AlignLabel::Epsilon)
        .unwrap_or(AlignLabel::Epsilon)
}

fn check_lengths(history: &[SymbolId], alignment: &[AlignLabel]) -> Result<()> {
    if history.len() != alignment.len() {
        return Err(Error::LengthMismatch {
            symbols: history.len(),
            labels: alignment.len(),
        });
    }
    Ok(())
}

/// The suffix of `history` generated by the currently open span of `class`
/// (its entry label and the continuations after it). Empty when the
/// alignment is not inside `class` or `class` is the background.
pub fn class_prefix<'a>(
    history: &'a [SymbolId],
    alignment: &[AlignLabel],
    class: ClassId,
    background: ClassId,
) -> Result<&'a [SymbolId]> {
    check_lengths(history, alignment)?;
    if class == background {
        return Ok(&[]);
    }
    match alignment.iter().rposition(|l| *l != AlignLabel::Epsilon) {
        Some(j) if alignment[j] == AlignLabel::Class(class) => Ok(&history[j..]),
        _ => Ok(&[]),
    }
}

/// Drops epsilons, replaces background labels by their symbol and keeps
/// one token per entity-class span.
pub fn decider_history(
    history: &[SymbolId],
    alignment: &[AlignLabel],
    background: ClassId,
) -> Result<Vec<DeciderToken>> {
    check_lengths(history, alignment)?;
    let mut out = Vec::with_capacity(history.len());
    let mut in_class = false;
    for (&w, &label) in history.iter().zip(alignment) {
        match label {
            AlignLabel::Class(c) if c == background => {
                out.push(DeciderToken::Symbol(w));
                in_class = false;
            }
            AlignLabel::Class(c) => {
                out.push(DeciderToken::Class(c));
                in_class = true;
            }
            AlignLabel::Epsilon if in_class => {}
            AlignLabel::Epsilon => {
                return Err(Error::InvalidParameter(
                    "epsilon label outside an entity-class span".into(),
                ))
            }
        }
    }
    Ok(out)
}
