mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::{random_history, random_model, rng};
use nfclm::classfst::{Entity, ProbClassFst, STOCHASTIC_TOL};
use nfclm::dynfst::DynFstSession;
use nfclm::eval::{rescore_with_scores, FusionWeights, NBestEntry};
use nfclm::seqmodel::{renormalize_by_prior, BackoffNGram, ConditionalSymbolModel};
use nfclm::{toy, BeamParams, ScoringMode, SymbolId, Vocabulary};

fn letters_vocab(extra: &[String]) -> Vocabulary {
    let mut syms: Vec<String> = ('a'..='f').map(|c| c.to_string()).collect();
    syms.extend(('a'..='f').map(|c| format!("_{c}")));
    for e in extra {
        if !syms.contains(e) {
            syms.push(e.clone());
        }
    }
    Vocabulary::new(syms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vocab_text_round_trip(extra in prop::collection::vec("_?[a-f]{2,4}", 0..6)) {
        let v = letters_vocab(&extra);
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), v.to_text());
    }

    #[test]
    fn tokenize_detokenize(extra in prop::collection::vec("_?[a-f]{2,4}", 0..6),
                           words in prop::collection::vec("[a-f]{1,6}", 0..6)) {
        let v = letters_vocab(&extra);
        let text = words.join(" ");
        let ids = v.tokenize(&text).unwrap();
        prop_assert_eq!(v.detokenize(&ids), text);
    }

    #[test]
    fn fst_invariants(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n_vocab = r.gen_range(2..10u32);
        let entities: Vec<Entity> = (0..r.gen_range(1..12))
            .map(|_| Entity {
                symbols: (0..r.gen_range(1..6)).map(|_| SymbolId(r.gen_range(0..n_vocab))).collect(),
                count: r.gen_range(1..5),
            })
            .collect();
        let fst = ProbClassFst::build("@x", &entities).unwrap();
        fst.validate().unwrap();
        for st in fst.states() {
            let total: f64 = st.arcs.iter().map(|a| a.prob).sum::<f64>() + st.exit;
            prop_assert!((total - 1.0).abs() <= STOCHASTIC_TOL);
        }
        // path probability of each distinct entity = its share of the counts
        let total: u64 = entities.iter().map(|e| e.count).sum();
        for e in &entities {
            let same: u64 = entities.iter().filter(|o| o.symbols == e.symbols).map(|o| o.count).sum();
            let mut state = fst.start();
            let mut p = 1.0;
            for &s in &e.symbols {
                p *= fst.arc_prob(state, s).unwrap();
                state = fst.step(state, s).unwrap().unwrap();
            }
            p *= fst.exit_prob(state).unwrap();
            prop_assert!((p - same as f64 / total as f64).abs() < 1e-12);
        }
        // entity order does not matter
        let mut shuffled = entities.clone();
        shuffled.shuffle(&mut r);
        let other = ProbClassFst::build("@x", &shuffled).unwrap();
        prop_assert_eq!(other.to_bytes(), fst.to_bytes());
    }

    #[test]
    fn ngram_normalized(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..8u32);
        let corpus: Vec<Vec<u32>> = (0..r.gen_range(1..20))
            .map(|_| (0..r.gen_range(0..8)).map(|_| r.gen_range(0..n)).collect())
            .collect();
        let m = BackoffNGram::train_sentences(&corpus, r.gen_range(1..5), r.gen_range(0.05..0.95), n + 1, n + 2, n + 1, n).unwrap();
        for _ in 0..10 {
            let h: Vec<u32> = (0..r.gen_range(0..6)).map(|_| r.gen_range(0..n)).collect();
            let d = m.distribution(&h).unwrap();
            prop_assert!(d.iter().all(|&p| p > 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (o, &p) in d.iter().enumerate() {
                prop_assert!((m.prob(&h, o as u32).unwrap() - p).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn renormalization_scale_invariant(raw in prop::collection::vec(0.01f64..1.0, 2..6),
                                       alpha in 0.0f64..3.0, scale in 0.01f64..100.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let prior: Vec<f64> = raw.iter().map(|_| r.gen_range(0.01..1.0)).collect();
        let scaled: Vec<f64> = prior.iter().map(|p| p * scale).collect();
        let a = renormalize_by_prior(&raw, &prior, alpha).unwrap();
        let b = renormalize_by_prior(&raw, &scaled, alpha).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!(*x > 0.0);
        }
        // uniform raw: argmax is the smallest prior at alpha = 1
        let uniform = vec![1.0 / raw.len() as f64; raw.len()];
        let u = renormalize_by_prior(&uniform, &prior, 1.0).unwrap();
        let argmax = (0..u.len()).max_by(|&i, &j| u[i].total_cmp(&u[j])).unwrap();
        let argmin = (0..prior.len()).min_by(|&i, &j| prior[i].total_cmp(&prior[j])).unwrap();
        prop_assert_eq!(argmax, argmin);
    }

    #[test]
    fn nfclm_distributions_normalize(seed in any::<u64>()) {
        let rm = random_model(seed, BeamParams::default());
        let mut r = rng(seed ^ 1);
        let h = random_history(&mut r, &rm, 8);
        for mode in [ScoringMode::Beam, ScoringMode::Exact] {
            let d = rm.model.next_distribution(&h, mode).unwrap();
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{:?}", mode);
        }
    }

    #[test]
    fn beams_are_merged_and_normalized(seed in any::<u64>(), n in 1usize..6, delta in 0.0f64..8.0) {
        let params = BeamParams { max_size: n, delta, renormalize: true };
        let rm = random_model(seed, params);
        let mut r = rng(seed ^ 2);
        let h = random_history(&mut r, &rm, 8);
        let mut beam = rm.model.initial_beam();
        for &w in &h {
            beam = match rm.model.extend(&beam, w) {
                Ok(ext) => ext.beam,
                Err(nfclm::Error::DeadHistory { .. }) => break,
                Err(e) => panic!("{e}"),
            };
            prop_assert!(beam.len() <= n);
            let keys: HashSet<_> = beam.hypotheses().iter().map(|x| (x.decider_history.clone(), x.position)).collect();
            prop_assert_eq!(keys.len(), beam.len());
            let best = beam.hypotheses()[0].log_weight;
            prop_assert!(beam.hypotheses().iter().all(|x| best - x.log_weight <= delta));
            let mass: f64 = beam.hypotheses().iter().map(|x| beam.log_posterior(x).exp()).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dynfst_eviction_is_invisible(seed in any::<u64>(), capacity in 1usize..4) {
        let rm = random_model(seed, BeamParams::default());
        let mut r = rng(seed ^ 3);
        let mut free = DynFstSession::new(&rm.model);
        let mut tight = DynFstSession::with_capacity(&rm.model, capacity).unwrap();
        for _ in 0..4 {
            let h = random_history(&mut r, &rm, 8);
            let (mut a, mut b) = (free.start_state(), tight.start_state());
            for &w in &h {
                if r.gen_bool(0.3) {
                    let victim = nfclm::dynfst::DynStateId(r.gen_range(0..tight.stats().states as u32));
                    tight.evict(victim);
                }
                let arc_a = free.transition(a, w).unwrap();
                let arc_b = tight.transition(b, w).unwrap();
                prop_assert_eq!(arc_a.is_some(), arc_b.is_some());
                let (Some((na, wa)), Some((nb, wb))) = (arc_a, arc_b) else { break };
                prop_assert_eq!(wa.to_bits(), wb.to_bits());
                prop_assert_eq!(na, nb);
                a = na;
                b = nb;
            }
            prop_assert_eq!(free.final_weight(a).unwrap(), tight.final_weight(b).unwrap());
        }
    }

    #[test]
    fn rescoring_shift_invariant(asr in prop::collection::vec(-20.0f64..0.0, 1..6), shift in -50.0f64..50.0,
                                 lambda in 0.0f64..2.0, mu in 0.0f64..1.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let entries: Vec<NBestEntry> = asr.iter().enumerate().map(|(i, &a)| NBestEntry {
            utt: "u".into(), asr: a, ilm: r.gen_range(-10.0..0.0), hypothesis: format!("h{i}"),
        }).collect();
        let lm: Vec<Result<f64, String>> = entries.iter().map(|_| Ok(r.gen_range(-30.0..0.0))).collect();
        let w = FusionWeights::new(lambda, mu).unwrap();
        let shifted: Vec<NBestEntry> = entries.iter().map(|e| NBestEntry { asr: e.asr + shift, ..e.clone() }).collect();
        let a = rescore_with_scores(&entries, &lm, w).unwrap();
        let b = rescore_with_scores(&shifted, &lm, w).unwrap();
        // rounding can only reorder entries whose fused scores nearly tie
        let top_a = &a[0];
        let top_b = b.iter().find(|e| e.entry.hypothesis == top_a.entry.hypothesis).unwrap();
        prop_assert!(top_b.new_rank == 0 || (b[0].fused.unwrap() - top_b.fused.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn larger_lambda_favours_best_lm(lms in prop::collection::vec(-30.0f64..0.0, 2..6),
                                     l1 in 0.0f64..2.0, dl in 0.0f64..2.0) {
        let entries: Vec<NBestEntry> = lms.iter().enumerate().map(|(i, _)| NBestEntry {
            utt: "u".into(), asr: -3.0, ilm: -2.0, hypothesis: format!("h{i}"),
        }).collect();
        let best = (0..lms.len()).max_by(|&i, &j| lms[i].total_cmp(&lms[j])).unwrap();
        prop_assume!(lms.iter().enumerate().all(|(i, &l)| i == best || l < lms[best]));
        let lm: Vec<Result<f64, String>> = lms.iter().map(|&l| Ok(l)).collect();
        let rank = |l: f64| {
            let r = rescore_with_scores(&entries, &lm, FusionWeights::new(l, 0.5).unwrap()).unwrap();
            r.iter().find(|e| e.orig_rank == best).unwrap().new_rank
        };
        prop_assert!(rank(l1 + dl) <= rank(l1));
    }
}

#[test]
fn sampling_matches_sentence_probabilities() {
    let m = toy::exact_model();
    let n = 40_000;
    let mut r = rng(99);
    let mut counts = std::collections::HashMap::<Vec<SymbolId>, usize>::new();
    for _ in 0..n {
        *counts.entry(m.sample_with(&mut r, 40).unwrap()).or_default() += 1;
    }
    for line in ["", "_play", "_browne", "_ro sie"] {
        let s = m.vocab().parse_symbols(line).unwrap();
        let p = m.sequence_logprob(&s, ScoringMode::Exact).unwrap().exp();
        let got = *counts.get(&s).unwrap_or(&0) as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((got - n as f64 * p).abs() <= 4.0 * sigma + 1.0, "{line:?}: {got} vs {}", n as f64 * p);
    }
}

#[test]
fn grammar_expansions_are_reachable() {
    use indexmap::IndexMap;
    use nfclm::cfg::{parse_patterns, CfgGrammar};
    let m = toy::model(BeamParams::default(), 1.0);
    let (patterns, weighted) =
        parse_patterns("_play @song _by @artist\n_play @artist\n@song\n", m.vocab(), m.classes()).unwrap();
    let mut e = IndexMap::new();
    e.insert(m.classes().id("@song").unwrap(), toy::entities(m.vocab(), &toy::SONGS).unwrap());
    e.insert(m.classes().id("@artist").unwrap(), toy::entities(m.vocab(), &toy::ARTISTS).unwrap());
    let g = CfgGrammar::new(patterns, e, weighted, m.classes()).unwrap();
    for s in g.expand(200, 5) {
        let lp = m.sequence_logprob(&s, ScoringMode::Beam).unwrap();
        assert!(lp.is_finite());
    }
}
