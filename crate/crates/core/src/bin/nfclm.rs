#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nfclm::cfg::{mix_corpora, parse_grammar};
use nfclm::classfst::{parse_entities, ProbClassFst};
use nfclm::dynfst::DynFstSession;
use nfclm::eval::{
    background_perplexity, format_rescored, lm_scores, load_bundle, nfclm_perplexity, pack_bundle,
    parse_corpus, parse_nbest, parse_references, rescore_with_scores, top1_accuracy, BundleParts,
    FusionWeights, PerplexityReport,
};
use nfclm::seqmodel::{parse_tagged_line, train_decider, BackoffNGram, DeciderToken, TrainedDecider};
use nfclm::{BeamParams, ClassAlphabet, NfclmModel, ScoringMode, Vocabulary};

/// Factored class language model toolkit.
#[derive(Parser)]
#[command(name = "nfclm", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Global {
    /// Seed for sampling, expansion and mixing.
    #[arg(long, global = true, env = "NFCLM_SEED", default_value_t = 0)]
    seed: u64,
    /// Maximum number of alignment hypotheses per history (default: bundle setting).
    #[arg(long, global = true)]
    beam_n: Option<usize>,
    /// Drop hypotheses trailing the best by more than this many nats (default: bundle setting).
    #[arg(long, global = true)]
    beam_delta: Option<f64>,
    /// Decider prior-renormalization exponent (default: bundle setting, 1 when packing).
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Score by exhaustive alignment enumeration instead of the beam.
    #[arg(long, global = true)]
    exact: bool,
}

impl Global {
    fn mode(&self) -> ScoringMode {
        if self.exact {
            ScoringMode::Exact
        } else {
            ScoringMode::Beam
        }
    }

    fn params(&self, base: BeamParams) -> BeamParams {
        BeamParams {
            max_size: self.beam_n.unwrap_or(base.max_size),
            delta: self.beam_delta.unwrap_or(base.delta),
            ..base
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a class automaton from an entity list.
    BuildFst {
        #[arg(long)]
        vocab: PathBuf,
        /// Class label, e.g. @song.
        #[arg(long)]
        class: String,
        #[arg(long)]
        entities: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write a text dump of the automaton.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Train the background n-gram on a plain corpus.
    TrainBglm {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.75)]
        discount: f64,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the count tables as text.
        #[arg(long)]
        dump_counts: Option<PathBuf>,
    },
    /// Train the class decider on a tagged corpus.
    TrainDecider {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Tagged corpus the class prior is counted on (default: --corpus).
        #[arg(long)]
        prior_corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.75)]
        discount: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Expand a pattern grammar into plain and/or tagged sentences.
    ExpandCfg {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        patterns: PathBuf,
        /// Directory with one entity file per non-terminal.
        #[arg(long)]
        entities: PathBuf,
        #[arg(short = 'n', long)]
        count: usize,
        /// Plain output (sub-words only).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Tagged output (one class token per slot).
        #[arg(long)]
        tagged_out: Option<PathBuf>,
    },
    /// Mix background and tagged grammar sentences into a decider corpus.
    Mix {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        cfg: PathBuf,
        /// Fraction of output lines drawn from the background corpus.
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        /// Output lines (default: enough to use every grammar line once).
        #[arg(long)]
        count: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write a model bundle and print its per-component sizes.
    Pack {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        decider: PathBuf,
        /// Class automata, one per entity class.
        #[arg(long = "fst", num_args = 1..)]
        fsts: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the log-probability of every input sentence.
    Score {
        #[arg(long)]
        bundle: PathBuf,
        /// Corpus file (default: stdin).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Corpus perplexity.
    Ppl {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Use the bundle's background model alone.
        #[arg(long)]
        background_only: bool,
        /// Report and exclude unscorable sentences instead of failing.
        #[arg(long)]
        skip_dead: bool,
    },
    /// Print the next-symbol distribution after a history.
    Next {
        #[arg(long)]
        bundle: PathBuf,
        /// History symbols.
        history: Vec<String>,
    },
    /// Rescore an n-best list by shallow fusion with internal-LM subtraction.
    Rescore {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        /// Reference transcripts (`utt TAB tokens`) for top-1 accuracy.
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Sweep lambda as start:stop:step and print the top entry per step.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Sample sentences from the model.
    Sample {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(short = 'n', long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 50)]
        max_len: usize,
    },
    /// Expand the dynamic automaton along a symbol sequence and dump it.
    DumpDynfst {
        #[arg(long)]
        bundle: PathBuf,
        /// Input symbols.
        symbols: Vec<String>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Ok(Vocabulary::load(path)?)
}

fn load_classes(path: &Path) -> Result<ClassAlphabet> {
    Ok(ClassAlphabet::load(path)?)
}

fn parse_tagged(text: &str, vocab: &Vocabulary, classes: &ClassAlphabet) -> Result<Vec<Vec<DeciderToken>>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| parse_tagged_line(l, vocab, classes).with_context(|| format!("tagged corpus line {}", i + 1)))
        .collect()
}

fn render_tagged(lines: &[Vec<DeciderToken>], vocab: &Vocabulary, classes: &ClassAlphabet) -> String {
    let mut out = String::new();
    for line in lines {
        let parts: Vec<&str> = line.iter().map(|t| t.render(vocab, classes)).collect();
        out.push_str(&parts.join(" "));
        out.push('\n');
    }
    out
}

fn open_model(bundle: &Path, g: &Global) -> Result<NfclmModel> {
    let b = load_bundle(bundle).with_context(|| format!("loading bundle {}", bundle.display()))?;
    let mut model = b.model;
    let params = g.params(model.params());
    model = model.with_params(params)?;
    if let Some(alpha) = g.alpha {
        model = model.with_alpha(alpha)?;
    }
    Ok(model)
}

fn report_lines(r: &PerplexityReport) -> String {
    let mut out = format!(
        "ppl\t{}\nlogprob\t{}\ntokens\t{}\nsentences\t{}\nskipped\t{}\n",
        r.perplexity,
        r.total_logprob,
        r.total_tokens,
        r.sentences,
        r.skipped.len()
    );
    for (i, why) in &r.skipped {
        let _ = writeln!(out, "skip\t{}\t{}", i + 1, why);
    }
    out
}

fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("sweep {spec:?} must be start:stop:step"))?;
    let [start, stop, step] = parts[..] else {
        bail!("sweep {spec:?} must be start:stop:step");
    };
    if !(step > 0.0) || stop < start {
        bail!("sweep needs step > 0 and stop >= start");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

fn run(cli: Cli) -> Result<String> {
    let g = cli.global;
    let mut out = String::new();
    match cli.command {
        Command::BuildFst {
            vocab,
            class,
            entities,
            out: path,
            dump,
        } => {
            let vocab = load_vocab(&vocab)?;
            let list = parse_entities(&read_text(&entities)?, &vocab)
                .with_context(|| format!("entity file {}", entities.display()))?;
            let fst = ProbClassFst::build(&class, &list)?;
            let bytes = fst.to_bytes();
            std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
            if let Some(d) = dump {
                write_out(&d, &fst.dump_text(Some(&vocab)))?;
            }
            let _ = writeln!(
                out,
                "{}\tstates={}\tarcs={}\tentities={}\tbytes={}",
                fst.class(),
                fst.num_states(),
                fst.num_arcs(),
                fst.entity_count(),
                bytes.len()
            );
        }
        Command::TrainBglm {
            vocab,
            corpus,
            order,
            discount,
            out: path,
            dump_counts,
        } => {
            let vocab = load_vocab(&vocab)?;
            let sentences = parse_corpus(&read_text(&corpus)?, &vocab)?;
            let ids: Vec<Vec<u32>> = sentences.iter().map(|s| s.iter().map(|w| w.0).collect()).collect();
            let n = vocab.len() as u32;
            let model = BackoffNGram::train_sentences(&ids, order, discount, n + 1, n + 2, vocab.bos().0, n)?;
            model.save(&path)?;
            if let Some(d) = dump_counts {
                write_out(&d, &model.dump_counts())?;
            }
            let _ = writeln!(out, "sentences\t{}", sentences.len());
        }
        Command::TrainDecider {
            vocab,
            classes,
            corpus,
            prior_corpus,
            order,
            discount,
            out: path,
        } => {
            let vocab = load_vocab(&vocab)?;
            let classes = load_classes(&classes)?;
            let tagged = parse_tagged(&read_text(&corpus)?, &vocab, &classes)?;
            let prior = match prior_corpus {
                Some(p) => Some(parse_tagged(&read_text(&p)?, &vocab, &classes)?),
                None => None,
            };
            let d = train_decider(&tagged, prior.as_deref(), &vocab, &classes, order, discount)?;
            d.save(&path)?;
            for (label, p) in d.class_labels.iter().zip(&d.prior) {
                let _ = writeln!(out, "prior\t{label}\t{p}");
            }
        }
        Command::ExpandCfg {
            vocab,
            classes,
            patterns,
            entities,
            count,
            out: plain_out,
            tagged_out,
        } => {
            if count == 0 {
                bail!("--count must be >= 1");
            }
            if plain_out.is_none() && tagged_out.is_none() {
                bail!("give --out and/or --tagged-out");
            }
            let vocab = load_vocab(&vocab)?;
            let classes = load_classes(&classes)?;
            let grammar = parse_grammar(&patterns, &entities, &vocab, &classes)?;
            let derivations = grammar.derivations(count, g.seed);
            if let Some(p) = plain_out {
                let mut text = String::new();
                for d in &derivations {
                    text.push_str(&vocab.render(&grammar.plain(d)));
                    text.push('\n');
                }
                write_out(&p, &text)?;
            }
            if let Some(p) = tagged_out {
                let lines: Vec<_> = derivations.iter().map(|d| grammar.tagged(d)).collect();
                write_out(&p, &render_tagged(&lines, &vocab, &classes))?;
            }
            let _ = writeln!(out, "sentences\t{count}");
        }
        Command::Mix {
            vocab,
            classes,
            background,
            cfg,
            fraction,
            count,
            out: path,
        } => {
            let vocab = load_vocab(&vocab)?;
            let classes = load_classes(&classes)?;
            let bg = parse_corpus(&read_text(&background)?, &vocab)?;
            let tagged = parse_tagged(&read_text(&cfg)?, &vocab, &classes)?;
            let count = match count {
                Some(c) => c,
                None if fraction < 1.0 => (tagged.len() as f64 / (1.0 - fraction)).round() as usize,
                None => bg.len(),
            };
            let mixed = mix_corpora(&bg, &tagged, fraction, count, g.seed)?;
            write_out(&path, &render_tagged(&mixed, &vocab, &classes))?;
            let n_bg = (fraction * count as f64).round() as usize;
            let _ = writeln!(out, "lines\t{count}\nbackground\t{n_bg}\tcfg\t{}", count - n_bg);
        }
        Command::Pack {
            vocab,
            classes,
            background,
            decider,
            fsts,
            out: dir,
        } => {
            let parts = BundleParts {
                vocab: load_vocab(&vocab)?,
                classes: load_classes(&classes)?,
                background: BackoffNGram::load(&background)?,
                decider: TrainedDecider::load(&decider)?,
                fsts: fsts.iter().map(ProbClassFst::load).collect::<nfclm::Result<_>>()?,
                alpha: g.alpha.unwrap_or(1.0),
                params: g.params(BeamParams::default()),
            };
            out = pack_bundle(&dir, &parts)?.to_tsv();
        }
        Command::Score { bundle, input } => {
            let model = open_model(&bundle, &g)?;
            let text = match input {
                Some(p) => read_text(&p)?,
                None => {
                    let mut s = String::new();
                    std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
                    s
                }
            };
            let corpus = parse_corpus(&text, model.vocab())?;
            let mode = g.mode();
            let scores: Vec<_> = {
                use rayon::prelude::*;
                corpus.par_iter().map(|s| model.sequence_logprob(s, mode)).collect()
            };
            for (s, lp) in corpus.iter().zip(scores) {
                match lp {
                    Ok(lp) => {
                        let _ = writeln!(out, "{lp}\t{}\t{}", s.len() + 1, model.vocab().render(s));
                    }
                    Err(e) => {
                        let _ = writeln!(out, "-\t{}\t{}\terror: {e}", s.len() + 1, model.vocab().render(s));
                    }
                }
            }
        }
        Command::Ppl {
            bundle,
            corpus,
            background_only,
            skip_dead,
        } => {
            let model = open_model(&bundle, &g)?;
            let corpus = parse_corpus(&read_text(&corpus)?, model.vocab())?;
            let report = if background_only {
                background_perplexity(model.background(), &corpus, model.vocab().eos())?
            } else {
                nfclm_perplexity(&model, &corpus, g.mode(), skip_dead)?
            };
            out = report_lines(&report);
        }
        Command::Next { bundle, history } => {
            let model = open_model(&bundle, &g)?;
            let history = model.vocab().parse_symbols(&history.join(" "))?;
            let dist = model.next_distribution(&history, g.mode())?;
            let vocab = model.vocab();
            for (i, p) in dist.iter().enumerate() {
                let sym = if i == vocab.len() {
                    nfclm::vocab::EOS
                } else {
                    vocab.symbol(nfclm::SymbolId(i as u32))
                };
                let _ = writeln!(out, "{sym}\t{p}");
            }
        }
        Command::Rescore {
            bundle,
            nbest,
            lambda,
            mu,
            refs,
            sweep,
        } => {
            let model = open_model(&bundle, &g)?;
            let entries = parse_nbest(&read_text(&nbest)?)?;
            let lm = lm_scores(&model, &entries, g.mode());
            let refs = match refs {
                Some(p) => Some(parse_references(&read_text(&p)?)?),
                None => None,
            };
            match sweep {
                None => {
                    let r = rescore_with_scores(&entries, &lm, FusionWeights::new(lambda, mu)?)?;
                    out = format_rescored(&r);
                    if let Some(refs) = &refs {
                        let (hit, total) = top1_accuracy(&r, refs);
                        let _ = writeln!(out, "#top1\t{hit}\t{total}");
                    }
                }
                Some(spec) => {
                    for l in parse_sweep(&spec)? {
                        let r = rescore_with_scores(&entries, &lm, FusionWeights::new(l, mu)?)?;
                        for e in r.iter().filter(|e| e.new_rank == 0) {
                            let _ = writeln!(out, "{l}\t{}\t{}\t{}", e.entry.utt, e.orig_rank, e.entry.hypothesis);
                        }
                        if let Some(refs) = &refs {
                            let (hit, total) = top1_accuracy(&r, refs);
                            let _ = writeln!(out, "#top1\t{l}\t{hit}\t{total}");
                        }
                    }
                }
            }
        }
        Command::Sample {
            bundle,
            count,
            max_len,
        } => {
            use rand::SeedableRng;
            let model = open_model(&bundle, &g)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(g.seed);
            for _ in 0..count {
                let s = model.sample_with(&mut rng, max_len)?;
                let _ = writeln!(out, "{}", model.vocab().render(&s));
            }
        }
        Command::DumpDynfst { bundle, symbols } => {
            let mut model = open_model(&bundle, &g)?;
            if g.exact {
                model = model.with_params(BeamParams::unpruned())?;
            }
            let symbols = model.vocab().parse_symbols(&symbols.join(" "))?;
            let mut session = DynFstSession::new(&model);
            let mut state = session.start_state();
            session.final_weight(state)?;
            for (i, &w) in symbols.iter().enumerate() {
                match session.transition(state, w)? {
                    Some((next, _)) => state = next,
                    None => bail!("no arc for symbol {} at position {i}", model.vocab().symbol(w)),
                }
                session.final_weight(state)?;
            }
            out = session.dump();
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nfclm: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
