//! Model bundles: a directory with a TOML manifest and one file per component.
//!
//! ```text
//! manifest.toml
//! vocab.txt
//! classes.txt
//! background.bin
//! decider.bin
//! fst/<class>.bin
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classfst::ProbClassFst;
use crate::error::{Error, Result};
use crate::nfclm::{BeamParams, NfclmModel};
use crate::seqmodel::{BackoffNGram, TrainedDecider};
use crate::vocab::{ClassAlphabet, Vocabulary};

pub const MANIFEST: &str = "manifest.toml";
pub const FORMAT: &str = "nfclm-bundle";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    alpha: f64,
    vocab: String,
    classes: String,
    background: String,
    decider: String,
    beam: BeamSection,
    fst: Vec<FstEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BeamSection {
    max_size: usize,
    delta: f64,
    renormalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FstEntry {
    class: String,
    file: String,
}

/// Everything a bundle holds, before assembly into a model.
#[derive(Debug, Clone)]
pub struct BundleParts {
    pub vocab: Vocabulary,
    pub classes: ClassAlphabet,
    pub background: BackoffNGram,
    pub decider: TrainedDecider,
    pub fsts: Vec<ProbClassFst>,
    pub alpha: f64,
    pub params: BeamParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeReport {
    /// (component, path relative to the bundle, bytes)
    pub components: Vec<(String, String, u64)>,
}

impl SizeReport {
    pub fn total(&self) -> u64 {
        self.components.iter().map(|c| c.2).sum()
    }

    /// `component TAB path TAB bytes` lines, then `total TAB - TAB bytes`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (name, path, bytes) in &self.components {
            let _ = writeln!(out, "{name}\t{path}\t{bytes}");
        }
        let _ = writeln!(out, "total\t-\t{}", self.total());
        out
    }
}

pub struct Bundle {
    pub model: NfclmModel,
    pub report: SizeReport,
}

impl BundleParts {
    /// Validates every component and builds the model.
    pub fn assemble(self) -> Result<NfclmModel> {
        check_background(&self.background, &self.vocab)?;
        self.decider.check_compatible(&self.vocab, &self.classes)?;
        let decider = self.decider.into_model(self.alpha)?;
        NfclmModel::new(
            self.vocab,
            self.classes,
            Arc::new(self.background),
            self.fsts,
            decider,
            self.params,
        )
    }
}

fn check_background(bg: &BackoffNGram, vocab: &Vocabulary) -> Result<()> {
    use crate::seqmodel::ConditionalSymbolModel;
    if bg.num_outcomes() != vocab.len() + 1 || bg.bos() != vocab.bos().0 {
        return Err(Error::Bundle(format!(
            "background model covers {} outcomes with BOS {}, vocabulary needs {} with BOS {}",
            bg.num_outcomes(),
            bg.bos(),
            vocab.len() + 1,
            vocab.bos().0
        )));
    }
    Ok(())
}

fn fst_file(label: &str) -> String {
    format!("fst/{}.bin", label.trim_start_matches('@'))
}

/// Writes `parts` into `dir` after validating that they assemble into a model.
pub fn pack_bundle(dir: impl AsRef<Path>, parts: &BundleParts) -> Result<SizeReport> {
    let dir = dir.as_ref();
    parts.clone().assemble()?;

    let mut fsts: Vec<&ProbClassFst> = parts.fsts.iter().collect();
    fsts.sort_by_key(|f| parts.classes.id(f.class()));
    let manifest = Manifest {
        format: FORMAT.into(),
        version: BUNDLE_VERSION,
        alpha: parts.alpha,
        vocab: "vocab.txt".into(),
        classes: "classes.txt".into(),
        background: "background.bin".into(),
        decider: "decider.bin".into(),
        beam: BeamSection {
            max_size: parts.params.max_size,
            delta: parts.params.delta,
            renormalize: parts.params.renormalize,
        },
        fst: fsts
            .iter()
            .map(|f| FstEntry {
                class: f.class().to_string(),
                file: fst_file(f.class()),
            })
            .collect(),
    };

    let mut files: Vec<(String, String, Vec<u8>)> = vec![
        ("vocab".into(), manifest.vocab.clone(), parts.vocab.to_text().into_bytes()),
        ("classes".into(), manifest.classes.clone(), parts.classes.to_text().into_bytes()),
        ("background".into(), manifest.background.clone(), parts.background.to_bytes()),
        ("decider".into(), manifest.decider.clone(), parts.decider.to_bytes()),
    ];
    for (f, entry) in fsts.iter().zip(&manifest.fst) {
        files.push((format!("fst:{}", entry.class), entry.file.clone(), f.to_bytes()));
    }
    let text = toml::to_string(&manifest).map_err(|e| Error::Bundle(format!("manifest: {e}")))?;
    files.push(("manifest".into(), MANIFEST.into(), text.into_bytes()));

    let fst_dir = dir.join("fst");
    std::fs::create_dir_all(&fst_dir).map_err(|e| Error::io(&fst_dir, e))?;
    let mut report = SizeReport { components: Vec::new() };
    for (name, rel, bytes) in files {
        let path = dir.join(&rel);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        report.components.push((name, rel, bytes.len() as u64));
    }
    Ok(report)
}

fn read_component(dir: &Path, component: &str, rel: &str) -> Result<Vec<u8>> {
    let path: PathBuf = dir.join(rel);
    if !path.is_file() {
        return Err(Error::MissingComponent {
            component: component.to_string(),
            path,
        });
    }
    std::fs::read(&path).map_err(|e| Error::io(&path, e))
}

fn utf8(component: &str, bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).map_err(|e| Error::Bundle(format!("{component} is not UTF-8: {e}")))
}

/// Reads and validates a bundle.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let text = utf8("manifest", read_component(dir, "manifest", MANIFEST)?)?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Bundle(format!("manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(Error::Bundle(format!("manifest format {:?}, expected {FORMAT:?}", manifest.format)));
    }
    if manifest.version != BUNDLE_VERSION {
        return Err(Error::VersionMismatch {
            what: "bundle manifest".into(),
            found: manifest.version,
            expected: BUNDLE_VERSION,
        });
    }
    let mut report = SizeReport { components: Vec::new() };
    let mut read = |name: String, rel: &str| -> Result<Vec<u8>> {
        let bytes = read_component(dir, &name, rel)?;
        report.components.push((name, rel.to_string(), bytes.len() as u64));
        Ok(bytes)
    };
    let vocab = Vocabulary::from_text(&utf8("vocab", read("vocab".into(), &manifest.vocab)?)?)?;
    let classes = ClassAlphabet::from_text(&utf8("classes", read("classes".into(), &manifest.classes)?)?)?;
    let background = BackoffNGram::from_bytes(&read("background".into(), &manifest.background)?)?;
    let decider = TrainedDecider::from_bytes(&read("decider".into(), &manifest.decider)?)?;
    let mut fsts = Vec::new();
    for entry in &manifest.fst {
        let fst = ProbClassFst::from_bytes(&read(format!("fst:{}", entry.class), &entry.file)?)?;
        if fst.class() != entry.class {
            return Err(Error::Bundle(format!(
                "{} holds the automaton of {}, manifest says {}",
                entry.file,
                fst.class(),
                entry.class
            )));
        }
        fsts.push(fst);
    }
    report.components.push(("manifest".into(), MANIFEST.into(), text.len() as u64));
    let params = BeamParams {
        max_size: manifest.beam.max_size,
        delta: manifest.beam.delta,
        renormalize: manifest.beam.renormalize,
    };
    let model = BundleParts {
        vocab,
        classes,
        background,
        decider,
        fsts,
        alpha: manifest.alpha,
        params,
    }
    .assemble()?;
    Ok(Bundle { model, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nfclm::ScoringMode;
    use crate::seqmodel::{parse_tagged_line, train_decider};
    use crate::toy;

    fn parts() -> BundleParts {
        let vocab = toy::vocab();
        let classes = toy::classes();
        let corpus: Vec<Vec<u32>> = ["_play _ro sie", "_by _browne", "_play _flack"]
            .iter()
            .map(|l| vocab.parse_symbols(l).unwrap().iter().map(|s| s.0).collect())
            .collect();
        let n = vocab.len() as u32;
        let background = BackoffNGram::train_sentences(&corpus, 2, 0.75, n + 1, n + 2, n + 1, n).unwrap();
        let tagged: Vec<_> = toy::DECIDER_CORPUS
            .iter()
            .map(|l| parse_tagged_line(l, &vocab, &classes).unwrap())
            .collect();
        let decider = train_decider(&tagged, None, &vocab, &classes, 2, 0.5).unwrap();
        BundleParts {
            fsts: vec![toy::artist_fst(&vocab), toy::song_fst(&vocab)],
            vocab,
            classes,
            background,
            decider,
            alpha: 1.0,
            params: BeamParams::default(),
        }
    }

    #[test]
    fn round_trip_scores() {
        let dir = tempfile::tempdir().unwrap();
        let p = parts();
        let report = pack_bundle(dir.path(), &p).unwrap();
        assert!(report.components.iter().any(|c| c.0 == "fst:@song"));
        assert!(report.components.iter().any(|c| c.0 == "fst:@artist"));
        let direct = p.clone().assemble().unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert_eq!(loaded.report.total(), report.total());
        for line in ["_play _ro sie _by _browne", "_flack", ""] {
            let s = direct.vocab().parse_symbols(line).unwrap();
            let a = direct.sequence_logprob(&s, ScoringMode::Beam).unwrap();
            let b = loaded.model.sequence_logprob(&s, ScoringMode::Beam).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn named_errors() {
        let dir = tempfile::tempdir().unwrap();
        pack_bundle(dir.path(), &parts()).unwrap();
        std::fs::remove_file(dir.path().join("fst/song.bin")).unwrap();
        assert!(matches!(
            load_bundle(dir.path()),
            Err(Error::MissingComponent { ref component, .. }) if component == "fst:@song"
        ));

        let dir = tempfile::tempdir().unwrap();
        pack_bundle(dir.path(), &parts()).unwrap();
        let m = dir.path().join(MANIFEST);
        let text = std::fs::read_to_string(&m).unwrap().replace("version = 1", "version = 7");
        std::fs::write(&m, text).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::VersionMismatch { found: 7, .. })));

        let dir = tempfile::tempdir().unwrap();
        pack_bundle(dir.path(), &parts()).unwrap();
        let f = dir.path().join("fst/artist.bin");
        let mut bytes = std::fs::read(&f).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&f, bytes).unwrap();
        assert!(load_bundle(dir.path()).is_err());

        let mut p = parts();
        p.fsts.pop();
        assert!(matches!(pack_bundle(tempfile::tempdir().unwrap().path(), &p), Err(Error::MissingFst(_))));
    }
}
