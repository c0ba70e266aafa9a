//! Single-level pattern grammars: patterns over terminals and entity-class
//! slots, expanded into plain and class-tagged corpora.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classfst::{parse_entities, Entity};
use crate::error::{Error, Result};
use crate::seqmodel::DeciderToken;
use crate::vocab::{ClassAlphabet, ClassId, SymbolId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternItem {
    Terminal(SymbolId),
    Slot(ClassId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub items: Vec<PatternItem>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct CfgGrammar {
    patterns: Vec<Pattern>,
    entities: IndexMap<ClassId, Vec<Entity>>,
    weighted: bool,
}

/// Parses pattern lines (`tokens[TAB weight]`). `@`-tokens are slots; other
/// tokens are vocabulary symbols, or words that tokenize under `vocab`.
pub fn parse_patterns(text: &str, vocab: &Vocabulary, classes: &ClassAlphabet) -> Result<(Vec<Pattern>, bool)> {
    let mut patterns = Vec::new();
    let mut weighted = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let (body, weight) = match raw.split_once('\t') {
            Some((b, w)) => {
                let w: f64 = w.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    reason: format!("bad pattern weight {w:?}"),
                })?;
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::Parse {
                        line: line_no,
                        reason: format!("pattern weight {w} must be positive"),
                    });
                }
                weighted = true;
                (b, w)
            }
            None => (raw, 1.0),
        };
        let mut items = Vec::new();
        for tok in body.split_whitespace() {
            if tok.starts_with('@') {
                match classes.id(tok) {
                    Some(c) if c != classes.background() => items.push(PatternItem::Slot(c)),
                    _ => return Err(Error::UnknownClass(tok.to_string())),
                }
            } else if let Some(id) = vocab.id(tok).filter(|&id| vocab.is_subword(id)) {
                items.push(PatternItem::Terminal(id));
            } else {
                let ids = vocab.tokenize(tok).map_err(|_| Error::UnknownTerminal {
                    token: tok.to_string(),
                    line: line_no,
                })?;
                items.extend(ids.into_iter().map(PatternItem::Terminal));
            }
        }
        if items.is_empty() {
            return Err(Error::EmptyPattern { line: line_no });
        }
        patterns.push(Pattern { items, weight });
    }
    if patterns.is_empty() {
        return Err(Error::Empty("pattern file".into()));
    }
    Ok((patterns, weighted))
}

/// Entity file for `label` in `dir`: `@song.txt`, else `song.txt`.
pub fn entity_file(dir: &Path, label: &str) -> Option<PathBuf> {
    let bare = label.trim_start_matches('@');
    [format!("{label}.txt"), format!("{bare}.txt")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

/// Reads a pattern file and the entity lists of every slot it uses.
pub fn parse_grammar(
    pattern_file: impl AsRef<Path>,
    entity_dir: impl AsRef<Path>,
    vocab: &Vocabulary,
    classes: &ClassAlphabet,
) -> Result<CfgGrammar> {
    let pattern_file = pattern_file.as_ref();
    let dir = entity_dir.as_ref();
    let text = std::fs::read_to_string(pattern_file).map_err(|e| Error::io(pattern_file, e))?;
    let (patterns, weighted) = parse_patterns(&text, vocab, classes)?;
    let mut entities = IndexMap::new();
    for class in slots(&patterns) {
        let label = classes.label(class);
        let path = entity_file(dir, label).ok_or_else(|| Error::MissingEntities {
            class: label.to_string(),
            looked_for: dir.join(format!("{label}.txt")).display().to_string(),
        })?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        entities.insert(class, parse_entities(&text, vocab)?);
    }
    CfgGrammar::new(patterns, entities, weighted, classes)
}

fn slots(patterns: &[Pattern]) -> Vec<ClassId> {
    let mut seen = Vec::new();
    for p in patterns {
        for item in &p.items {
            if let PatternItem::Slot(c) = *item {
                if !seen.contains(&c) {
                    seen.push(c);
                }
            }
        }
    }
    seen
}

/// One draw from the grammar: the pattern and, per slot, the entity index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub pattern: usize,
    pub choices: Vec<usize>,
}

impl CfgGrammar {
    /// `weighted` selects pattern weights; otherwise patterns are uniform.
    pub fn new(
        patterns: Vec<Pattern>,
        entities: IndexMap<ClassId, Vec<Entity>>,
        weighted: bool,
        classes: &ClassAlphabet,
    ) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::Empty("pattern list".into()));
        }
        for (i, p) in patterns.iter().enumerate() {
            if p.items.is_empty() {
                return Err(Error::EmptyPattern { line: i + 1 });
            }
        }
        for class in slots(&patterns) {
            match entities.get(&class) {
                Some(list) if !list.is_empty() && list.iter().all(|e| !e.symbols.is_empty()) => {}
                _ => {
                    return Err(Error::MissingEntities {
                        class: classes.label(class).to_string(),
                        looked_for: "a nonempty entity list".into(),
                    })
                }
            }
        }
        Ok(CfgGrammar {
            patterns,
            entities,
            weighted,
        })
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn non_terminals(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.entities.keys().copied()
    }

    pub fn entities(&self, class: ClassId) -> Option<&[Entity]> {
        self.entities.get(&class).map(Vec::as_slice)
    }

    /// Draws a pattern, then one entity per slot left to right. Plain and
    /// tagged expansion share this stream.
    pub fn derive(&self, rng: &mut impl Rng) -> Derivation {
        let pattern = if self.weighted {
            WeightedIndex::new(self.patterns.iter().map(|p| p.weight))
                .expect("weights validated positive")
                .sample(rng)
        } else {
            rng.gen_range(0..self.patterns.len())
        };
        let choices = self.patterns[pattern]
            .items
            .iter()
            .filter_map(|item| match item {
                PatternItem::Slot(c) => Some(rng.gen_range(0..self.entities[c].len())),
                PatternItem::Terminal(_) => None,
            })
            .collect();
        Derivation { pattern, choices }
    }

    pub fn plain(&self, d: &Derivation) -> Vec<SymbolId> {
        let mut out = Vec::new();
        let mut choices = d.choices.iter();
        for item in &self.patterns[d.pattern].items {
            match *item {
                PatternItem::Terminal(s) => out.push(s),
                PatternItem::Slot(c) => {
                    let k = *choices.next().expect("one choice per slot");
                    out.extend_from_slice(&self.entities[&c][k].symbols);
                }
            }
        }
        out
    }

    pub fn tagged(&self, d: &Derivation) -> Vec<DeciderToken> {
        self.patterns[d.pattern]
            .items
            .iter()
            .map(|item| match *item {
                PatternItem::Terminal(s) => DeciderToken::Symbol(s),
                PatternItem::Slot(c) => DeciderToken::Class(c),
            })
            .collect()
    }

    pub fn derivations(&self, n: usize, seed: u64) -> Vec<Derivation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.derive(&mut rng)).collect()
    }

    pub fn expand(&self, n: usize, seed: u64) -> Vec<Vec<SymbolId>> {
        self.derivations(n, seed).iter().map(|d| self.plain(d)).collect()
    }

    pub fn expand_tagged(&self, n: usize, seed: u64) -> Vec<Vec<DeciderToken>> {
        self.derivations(n, seed).iter().map(|d| self.tagged(d)).collect()
    }
}

/// Mixes `count` lines, exactly `round(fraction * count)` of them from
/// `background`, the rest from `cfg`, shuffled. Each source is drawn as
/// successive random permutations, so no line repeats before all are used.
pub fn mix_corpora(
    background: &[Vec<SymbolId>],
    cfg: &[Vec<DeciderToken>],
    fraction: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<DeciderToken>>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("background fraction {fraction} not in [0, 1]")));
    }
    let n_bg = (fraction * count as f64).round() as usize;
    let n_cfg = count - n_bg;
    if n_bg > 0 && background.is_empty() {
        return Err(Error::Empty("background corpus".into()));
    }
    if n_cfg > 0 && cfg.is_empty() {
        return Err(Error::Empty("CFG corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in draw(background.len(), n_bg, &mut rng) {
        out.push(background[i].iter().copied().map(DeciderToken::Symbol).collect());
    }
    for i in draw(cfg.len(), n_cfg, &mut rng) {
        out.push(cfg[i].clone());
    }
    out.shuffle(&mut rng);
    Ok(out)
}

fn draw(len: usize, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut perm: Vec<usize> = (0..len).collect();
    while out.len() < n {
        perm.shuffle(rng);
        out.extend(perm.iter().take(n - out.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;

    fn grammar() -> CfgGrammar {
        let vocab = toy::vocab();
        let classes = toy::classes();
        let (patterns, weighted) = parse_patterns("_play @song _by @artist\n", &vocab, &classes).unwrap();
        let mut entities = IndexMap::new();
        entities.insert(classes.id("@song").unwrap(), toy::entities(&vocab, &toy::SONGS).unwrap());
        entities.insert(classes.id("@artist").unwrap(), toy::entities(&vocab, &toy::ARTISTS).unwrap());
        CfgGrammar::new(patterns, entities, weighted, &classes).unwrap()
    }

    #[test]
    fn parse_from_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.txt"), "_play @song _by @artist\n").unwrap();
        std::fs::write(dir.path().join("@song.txt"), toy::SONGS.join("\n")).unwrap();
        std::fs::write(dir.path().join("artist.txt"), toy::ARTISTS.join("\n")).unwrap();
        let g = parse_grammar(dir.path().join("p.txt"), dir.path(), &toy::vocab(), &toy::classes()).unwrap();
        assert_eq!(g.patterns().len(), 1);
        assert_eq!(g.non_terminals().count(), 2);
    }

    #[test]
    fn missing_entity_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.txt"), "_play @artist\n").unwrap();
        let classes = ClassAlphabet::new(["@bg", "@artist", "@genre"]).unwrap();
        let err = parse_grammar(dir.path().join("p.txt"), dir.path(), &toy::vocab(), &classes).unwrap_err();
        assert!(matches!(err, Error::MissingEntities { ref class, .. } if class == "@artist"));
    }

    #[test]
    fn pattern_errors() {
        let v = toy::vocab();
        let c = toy::classes();
        assert!(matches!(parse_patterns("", &v, &c), Err(Error::Empty(_))));
        assert!(matches!(parse_patterns("\n \n", &v, &c), Err(Error::Empty(_))));
        assert!(matches!(
            parse_patterns("_play @song\n\t2\n", &v, &c),
            Err(Error::EmptyPattern { line: 2 })
        ));
        assert!(matches!(
            parse_patterns("_play zzz\n", &v, &c),
            Err(Error::UnknownTerminal { line: 1, .. })
        ));
        assert!(matches!(parse_patterns("_play @genre\n", &v, &c), Err(Error::UnknownClass(_))));
        assert!(matches!(parse_patterns("_play @bg\n", &v, &c), Err(Error::UnknownClass(_))));
        // plain words tokenize into marked sub-words
        let (p, _) = parse_patterns("play @song", &v, &c).unwrap();
        assert_eq!(p[0].items[0], PatternItem::Terminal(v.id("_play").unwrap()));
    }

    #[test]
    fn plain_and_tagged_share_the_stream() {
        let g = grammar();
        let v = toy::vocab();
        let c = toy::classes();
        let plain = g.expand(50, 7);
        let tagged = g.expand_tagged(50, 7);
        for (p, t) in plain.iter().zip(&tagged) {
            assert_eq!(p[0], v.id("_play").unwrap());
            assert!(p.iter().all(|s| v.is_subword(*s)));
            let rendered: Vec<&str> = t.iter().map(|x| x.render(&v, &c)).collect();
            assert_eq!(rendered, ["_play", "@song", "_by", "@artist"]);
        }
        assert_eq!(plain, g.expand(50, 7));
    }

    #[test]
    fn fixed_seed_trace() {
        let g = grammar();
        let v = toy::vocab();
        let first = v.render(&g.expand(1, 0)[0]);
        let d = g.derivations(1, 0).remove(0);
        let song = toy::SONGS[d.choices[0]];
        let artist = toy::ARTISTS[d.choices[1]];
        assert_eq!(first, format!("_play {song} _by {artist}"));
    }

    #[test]
    fn song_choice_is_uniform() {
        let g = grammar();
        let v = toy::vocab();
        let sie = v.id("sie").unwrap();
        let n = 100_000;
        let hits = g.expand(n, 11).iter().filter(|s| s[2] == sie).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((hits - n as f64 * 0.5).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn mix_counts_are_exact() {
        let g = grammar();
        let bg: Vec<Vec<SymbolId>> = (0..37).map(|i| vec![SymbolId(i % 8)]).collect();
        let cfg = g.expand_tagged(200, 1);
        let is_bg = |l: &Vec<DeciderToken>| l.len() == 1;
        let mixed = mix_corpora(&bg, &cfg, 0.1, 1000, 3).unwrap();
        assert_eq!(mixed.len(), 1000);
        assert_eq!(mixed.iter().filter(|l| is_bg(l)).count(), 100);
        assert_eq!(mixed, mix_corpora(&bg, &cfg, 0.1, 1000, 3).unwrap());
        let only_cfg = mix_corpora(&[], &cfg, 0.0, 10, 3).unwrap();
        assert!(only_cfg.iter().all(|l| !is_bg(l)));
        let only_bg = mix_corpora(&bg, &[], 1.0, 10, 3).unwrap();
        assert!(only_bg.iter().all(is_bg));
        assert!(mix_corpora(&[], &cfg, 0.5, 10, 3).is_err());
        assert!(mix_corpora(&bg, &cfg, 1.5, 10, 3).is_err());
    }

    #[test]
    fn weighted_patterns() {
        let v = toy::vocab();
        let c = toy::classes();
        let (p, weighted) = parse_patterns("_play @song\t3\n_by @song\t1\n", &v, &c).unwrap();
        assert!(weighted);
        let mut e = IndexMap::new();
        e.insert(c.id("@song").unwrap(), toy::entities(&v, &toy::SONGS).unwrap());
        let g = CfgGrammar::new(p, e, weighted, &c).unwrap();
        let n = 20_000;
        let first = g.derivations(n, 5).iter().filter(|d| d.pattern == 0).count() as f64 / n as f64;
        assert!((first - 0.75).abs() < 0.02, "{first}");
    }
}
