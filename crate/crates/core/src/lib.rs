//! Factored class language model.
//!
//! A background model over sub-word symbols is mixed with per-class
//! probabilistic automata built from entity lists. A decider predicts which
//! class generates the next symbol, and the next-symbol probability
//! marginalizes over class alignments of the history, either exactly or
//! with a soft beam. The model can be queried directly, walked as a lazily
//! expanded automaton, used for perplexity and for n-best rescoring.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cfg;
pub mod classfst;
mod codec;
pub mod dynfst;
pub mod error;
pub mod eval;
pub mod logmath;
pub mod nfclm;
pub mod seqmodel;
pub mod toy;
pub mod vocab;

pub use error::{Error, Result};
pub use nfclm::{AlignmentBeam, BeamParams, NfclmModel, ScoringMode};
pub use vocab::{ClassAlphabet, ClassId, SymbolId, Vocabulary};
