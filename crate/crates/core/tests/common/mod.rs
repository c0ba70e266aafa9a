//! Random small models and histories shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nfclm::classfst::{Entity, ProbClassFst};
use nfclm::seqmodel::{train_decider, BackoffNGram, DeciderToken};
use nfclm::{BeamParams, ClassAlphabet, ClassId, NfclmModel, SymbolId, Vocabulary};

pub struct RandomModel {
    pub model: NfclmModel,
    pub entities: Vec<Vec<Entity>>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_entities(rng: &mut impl Rng, n_vocab: u32, max_len: usize) -> Vec<Entity> {
    let n = rng.gen_range(1..=4);
    let mut out: Vec<Entity> = Vec::new();
    for _ in 0..n {
        let len = rng.gen_range(1..=max_len);
        let mut symbols: Vec<SymbolId> = (0..len).map(|_| SymbolId(rng.gen_range(0..n_vocab))).collect();
        // sometimes make an entity a prefix or extension of an earlier one
        if !out.is_empty() && rng.gen_bool(0.3) {
            let base = &out[rng.gen_range(0..out.len())].symbols;
            let cut = rng.gen_range(1..=base.len());
            symbols = base[..cut].to_vec();
            if rng.gen_bool(0.5) && symbols.len() < max_len {
                symbols.push(SymbolId(rng.gen_range(0..n_vocab)));
            }
        }
        out.push(Entity {
            symbols,
            count: rng.gen_range(1..=3),
        });
    }
    out
}

/// |V| in 3..=12, 2 or 3 entity classes, entities of length <= 6, a random
/// back-off background and a decider trained on random tagged sentences.
pub fn random_model(seed: u64, params: BeamParams) -> RandomModel {
    let mut rng = rng(seed);
    let n_vocab: u32 = rng.gen_range(3..=12);
    let vocab = Vocabulary::new((0..n_vocab).map(|i| format!("t{i}"))).unwrap();
    let n_classes = rng.gen_range(2..=3);
    let mut labels = vec!["@bg".to_string()];
    labels.extend((0..n_classes).map(|k| format!("@c{k}")));
    let classes = ClassAlphabet::new(&labels).unwrap();

    let entities: Vec<Vec<Entity>> = (0..n_classes).map(|_| random_entities(&mut rng, n_vocab, 6)).collect();
    let fsts = entities
        .iter()
        .enumerate()
        .map(|(k, e)| ProbClassFst::build(&labels[k + 1], e).unwrap())
        .collect();

    let corpus: Vec<Vec<u32>> = (0..rng.gen_range(3..30))
        .map(|_| (0..rng.gen_range(0..8)).map(|_| rng.gen_range(0..n_vocab)).collect())
        .collect();
    let order = rng.gen_range(1..=3);
    let discount = rng.gen_range(0.1..0.9);
    let background = BackoffNGram::train_sentences(&corpus, order, discount, n_vocab + 1, n_vocab + 2, n_vocab + 1, n_vocab).unwrap();

    let tagged: Vec<Vec<DeciderToken>> = (0..rng.gen_range(3..30))
        .map(|_| {
            (0..rng.gen_range(0..7))
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        DeciderToken::Class(ClassId(rng.gen_range(1..=n_classes as u32)))
                    } else {
                        DeciderToken::Symbol(SymbolId(rng.gen_range(0..n_vocab)))
                    }
                })
                .collect()
        })
        .collect();
    let d_order = rng.gen_range(1..=3);
    let d_discount = rng.gen_range(0.1..0.9);
    let alpha = *[0.0, 0.5, 1.0].choose(&mut rng).unwrap();
    let decider = train_decider(&tagged, None, &vocab, &classes, d_order, d_discount)
        .unwrap()
        .into_model(alpha)
        .unwrap();
    let model = NfclmModel::new(vocab, classes, Arc::new(background), fsts, decider, params).unwrap();
    RandomModel { model, entities }
}

/// Up to `max_len` symbols built from random sub-words and (possibly
/// truncated) entity spellings, so class paths are exercised.
pub fn random_history(rng: &mut impl Rng, rm: &RandomModel, max_len: usize) -> Vec<SymbolId> {
    let target = rng.gen_range(0..=max_len);
    let n_vocab = rm.model.vocab().len() as u32;
    let mut out = Vec::new();
    while out.len() < target {
        if rng.gen_bool(0.5) {
            let class = &rm.entities[rng.gen_range(0..rm.entities.len())];
            let e = &class[rng.gen_range(0..class.len())].symbols;
            out.extend_from_slice(e);
        } else {
            out.push(SymbolId(rng.gen_range(0..n_vocab)));
        }
    }
    out.truncate(target);
    out
}

pub fn log_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol
}
