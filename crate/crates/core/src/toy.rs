//! The two-class music example used throughout the tests and docs:
//! `@song` = {_ro sie, _ro salie}, `@artist` = {_ro berta _flack, _browne},
//! a uniform background model and a small trained decider.

use std::sync::Arc;

use crate::classfst::{Entity, ProbClassFst};
use crate::error::Result;
use crate::nfclm::{BeamParams, NfclmModel};
use crate::seqmodel::{parse_tagged_line, train_decider, UniformModel};
use crate::vocab::{ClassAlphabet, Vocabulary};

pub const VOCAB: [&str; 8] = ["_play", "_ro", "sie", "_by", "_browne", "salie", "berta", "_flack"];
pub const CLASSES: [&str; 3] = ["@bg", "@song", "@artist"];
pub const SONGS: [&str; 2] = ["_ro sie", "_ro salie"];
pub const ARTISTS: [&str; 2] = ["_ro berta _flack", "_browne"];
pub const DECIDER_CORPUS: [&str; 6] = [
    "_play @song _by @artist",
    "_play @song _by @artist",
    "_play @song",
    "_play @artist",
    "_play _ro sie _by _browne",
    "_by _browne _play",
];

pub fn vocab() -> Vocabulary {
    Vocabulary::new(VOCAB).expect("toy vocabulary")
}

pub fn classes() -> ClassAlphabet {
    ClassAlphabet::new(CLASSES).expect("toy classes")
}

pub fn entities(vocab: &Vocabulary, lines: &[&str]) -> Result<Vec<Entity>> {
    lines
        .iter()
        .map(|l| Ok(Entity::new(vocab.parse_symbols(l)?)))
        .collect()
}

pub fn song_fst(vocab: &Vocabulary) -> ProbClassFst {
    ProbClassFst::build("@song", &entities(vocab, &SONGS).unwrap()).unwrap()
}

pub fn artist_fst(vocab: &Vocabulary) -> ProbClassFst {
    ProbClassFst::build("@artist", &entities(vocab, &ARTISTS).unwrap()).unwrap()
}

/// The toy model with the given beam settings and prior exponent.
pub fn model(params: BeamParams, alpha: f64) -> NfclmModel {
    let vocab = vocab();
    let classes = classes();
    let corpus: Vec<_> = DECIDER_CORPUS
        .iter()
        .map(|l| parse_tagged_line(l, &vocab, &classes).unwrap())
        .collect();
    let decider = train_decider(&corpus, None, &vocab, &classes, 2, 0.5)
        .unwrap()
        .into_model(alpha)
        .unwrap();
    let background = Arc::new(UniformModel::new(vocab.len() + 1));
    let fsts = vec![song_fst(&vocab), artist_fst(&vocab)];
    NfclmModel::new(vocab, classes, background, fsts, decider, params).unwrap()
}

/// The toy model with exhaustive beam settings.
pub fn exact_model() -> NfclmModel {
    model(BeamParams::unpruned(), 1.0)
}
