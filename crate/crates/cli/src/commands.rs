//! Subcommand definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use glyphocr::decoder::{decode_lines, LineDecode};
use glyphocr::distortion::distort;
use glyphocr::langmodel::{TrigramTable, Vocabulary};
use glyphocr::net::{train, train_from, Network};
use glyphocr::raster::pnm::{read_pbm, write_pbm, write_pgm};
use glyphocr::raster::{scale_to_square, BinaryImage, GrayImage};
use glyphocr::segmentation::segment_page;
use glyphocr::synth::{gen_corpus, gen_page, gen_training_set, Dataset, LanguageSpec, PageTruth};

use crate::ablate::run_ablation;
use crate::config::Config;
use crate::eval::{parse_ocr_text, report_csv, report_text, score_page};
use crate::UsageError;

#[derive(Debug, Parser)]
#[command(name = "glyphocr", version, about = "Synthetic-glyph OCR: data generation, training, decoding and scoring")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a labelled glyph dataset (train/valid/test PBMs + labels.tsv).
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a corpus from the synthetic language and fit the n-gram model.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sentences: Option<usize>,
    },
    /// Render pages with ground truth.
    GenPages {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pages: Option<usize>,
        /// Per-glyph erasure probability.
        #[arg(long)]
        erasure: Option<f64>,
    },
    /// Train the glyph classifier.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Error-curve CSV; defaults to the model path with a .csv extension.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        no_distortion: bool,
        #[arg(long)]
        no_dropout: bool,
        /// Continue from an existing model with the same architecture.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train each configured variant over several seeds and report medians.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Per-run CSV.
        #[arg(long)]
        out: PathBuf,
        /// Median summary CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated variant names.
        #[arg(long)]
        variants: Option<String>,
    },
    /// Recognize page images.
    Ocr {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        /// Token list; defaults to the configured alphabet's glyph names.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Per-glyph best label without language model or over-segmentation.
        #[arg(long)]
        no_lm: bool,
        /// Write segmentation and recognition graph dumps here.
        #[arg(long, value_name = "DIR")]
        dump_graphs: Option<PathBuf>,
        /// Write `<page>.txt` files here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
        /// PBM files or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score OCR output against ground truth.
    Eval {
        /// Directory of `<page>.truth` files.
        #[arg(long)]
        truth: PathBuf,
        /// Directory of `<page>.txt` OCR outputs.
        #[arg(long)]
        ocr: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a PGM grid of glyphs next to random distortions of them.
    DistortPreview {
        #[arg(long)]
        out: PathBuf,
        /// Distorted copies per glyph.
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
}

/// Defaults, then the config file, then `--set`, then `--seed`.
pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::GenCorpus { sentences: Some(s), .. } => cfg.corpus_sentences = *s,
        Command::GenPages { pages, erasure, .. } => {
            if let Some(p) = pages {
                cfg.pages = *p;
            }
            if let Some(e) = erasure {
                cfg.erasure = *e;
            }
        }
        Command::Train {
            epochs,
            no_distortion,
            no_dropout,
            ..
        } => {
            if let Some(e) = epochs {
                cfg.epochs = *e;
            }
            cfg.distortion &= !no_distortion;
            if *no_dropout {
                cfg.dropout = 0.0;
            }
        }
        Command::Ablate { runs, variants, .. } => {
            if let Some(r) = runs {
                cfg.ablate_runs = *r;
            }
            if let Some(v) = variants {
                cfg.set("ablate_variants", v)?;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    match cli.command {
        Command::GenData { out } => cmd_gen_data(&cfg, &out),
        Command::GenCorpus { out, .. } => cmd_gen_corpus(&cfg, &out),
        Command::GenPages { out, .. } => cmd_gen_pages(&cfg, &out),
        Command::Train { data, out, curve, resume, .. } => cmd_train(&cfg, &data, &out, curve, resume),
        Command::Ablate { data, out, summary, .. } => cmd_ablate(&cfg, &data, &out, summary),
        Command::Ocr {
            model,
            lm,
            vocab,
            no_lm,
            dump_graphs,
            out,
            inputs,
        } => cmd_ocr(&cfg, &model, &lm, vocab, !no_lm, dump_graphs, out, &inputs),
        Command::Eval { truth, ocr, vocab, csv } => cmd_eval(&cfg, &truth, &ocr, vocab, csv),
        Command::DistortPreview { out, samples } => cmd_distort_preview(&cfg, &out, samples),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn config_vocab(cfg: &Config, path: Option<PathBuf>) -> Result<Vocabulary> {
    Ok(match path {
        Some(p) => Vocabulary::load(&p).with_context(|| format!("cannot read vocabulary {}", p.display()))?,
        None => Vocabulary::from_alphabet(&cfg.alphabet_spec()?)?,
    })
}

pub fn language(cfg: &Config) -> Result<LanguageSpec> {
    Ok(LanguageSpec::generate(cfg.alphabet_spec()?.num_classes(), cfg.language_seed)?)
}

pub fn gen_dataset(cfg: &Config) -> Result<Dataset> {
    Ok(gen_training_set(&cfg.alphabet_spec()?, cfg.styles_per_class, cfg.pitch, cfg.seed)?)
}

/// Sampled corpus and the n-gram model fitted to it.
pub fn gen_language_model(cfg: &Config) -> Result<(Vec<Vec<usize>>, TrigramTable)> {
    let lang = language(cfg)?;
    let corpus = gen_corpus(&lang, cfg.corpus_sentences, cfg.seed);
    let lm = TrigramTable::train(&corpus, lang.k, cfg.lm_weights)?.with_order(cfg.n)?;
    Ok((corpus, lm))
}

/// `cfg.pages` pages of sentences from the synthetic language, with line
/// counts and skews drawn from the configured ranges.
pub fn gen_page_set(cfg: &Config) -> Result<Vec<(BinaryImage, PageTruth)>> {
    let alpha = cfg.alphabet_spec()?;
    let lang = language(cfg)?;
    let layout = cfg.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.pages)
        .map(|_| {
            let n = rng.gen_range(cfg.lines_min..=cfg.lines_max);
            let skew = if cfg.skew_max > 0.0 {
                rng.gen_range(-cfg.skew_max..=cfg.skew_max)
            } else {
                0.0
            };
            let lines: Vec<Vec<usize>> = (0..n).map(|_| lang.sample_sentence(&mut rng)).collect();
            Ok(gen_page(&lines, &alpha, &layout, skew, cfg.erasure, &mut rng)?)
        })
        .collect()
}

/// Segments a page and decodes every detected line.
pub fn ocr_page(img: &BinaryImage, net: &Network, lm: &TrigramTable, cfg: &Config, use_lm: bool) -> Result<Vec<LineDecode>> {
    let seg = segment_page(img, &cfg.segment_params())?;
    Ok(decode_lines(seg.extraction.lines, net, lm, &cfg.decode_params(use_lm))?)
}

fn cmd_gen_data(cfg: &Config, out: &Path) -> Result<()> {
    let data = gen_dataset(cfg)?;
    create_dir(out)?;
    data.save(out)?;
    Vocabulary::from_alphabet(&cfg.alphabet_spec()?)?.save(&out.join("vocab.txt"))?;
    println!(
        "wrote {} train, {} valid, {} test glyphs to {}",
        data.train.len(),
        data.valid.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_gen_corpus(cfg: &Config, out: &Path) -> Result<()> {
    let vocab = Vocabulary::from_alphabet(&cfg.alphabet_spec()?)?;
    let (corpus, lm) = gen_language_model(cfg)?;
    create_dir(out)?;
    write(&out.join("corpus.txt"), &vocab.format_corpus(&corpus)?)?;
    vocab.save(&out.join("vocab.txt"))?;
    lm.save(&out.join("lm.txt"))?;
    println!("wrote {} sentences and a {}-gram model to {}", corpus.len(), lm.order, out.display());
    Ok(())
}

fn cmd_gen_pages(cfg: &Config, out: &Path) -> Result<()> {
    let pages = gen_page_set(cfg)?;
    create_dir(out)?;
    let (mut glyphs, mut broken) = (0, 0);
    for (i, (img, truth)) in pages.iter().enumerate() {
        write_pbm(out.join(format!("page_{i:03}.pbm")), img)?;
        write(&out.join(format!("page_{i:03}.truth")), &truth.to_text())?;
        glyphs += truth.glyph_count();
        broken += truth.broken_count();
    }
    println!("wrote {} pages ({glyphs} glyphs, {broken} broken) to {}", pages.len(), out.display());
    Ok(())
}

fn cmd_train(cfg: &Config, data_dir: &Path, out: &Path, curve: Option<PathBuf>, resume: Option<PathBuf>) -> Result<()> {
    let data = Dataset::load(data_dir).with_context(|| format!("cannot load dataset {}", data_dir.display()))?;
    let spec = cfg.network_spec()?;
    if data.num_classes() > spec.num_classes {
        bail!(
            "dataset has {} classes but the architecture has {} outputs",
            data.num_classes(),
            spec.num_classes
        );
    }
    let tc = cfg.train_config();
    let (net, report) = match resume {
        None => train(&spec, &tc, &data)?,
        Some(p) => {
            let mut net = Network::load(&p).with_context(|| format!("cannot load model {}", p.display()))?;
            let s = &net.spec;
            let same = s.arch == spec.arch
                && s.use_location == spec.use_location
                && s.activation == spec.activation
                && s.invert_input == spec.invert_input;
            if !same {
                bail!("model {} was built for {:?}, not {:?}", p.display(), s.arch, spec.arch);
            }
            net.spec = spec.clone();
            train_from(net, &tc, &data)?
        }
    };
    net.save(out).with_context(|| format!("cannot write model {}", out.display()))?;
    let curve = curve.unwrap_or_else(|| out.with_extension("csv"));
    write(&curve, &report.to_csv())?;
    let test = report.epochs.get(report.best_epoch.wrapping_sub(1)).and_then(|e| e.test_err);
    println!(
        "best epoch {} of {}: valid_err {:.4}{}",
        report.best_epoch,
        report.epochs.len(),
        report.best_valid_err,
        test.map(|t| format!(" test_err {t:.4}")).unwrap_or_default()
    );
    Ok(())
}

fn cmd_ablate(cfg: &Config, data_dir: &Path, out: &Path, summary: Option<PathBuf>) -> Result<()> {
    let data = Dataset::load(data_dir).with_context(|| format!("cannot load dataset {}", data_dir.display()))?;
    if data.test.is_empty() {
        bail!("dataset {} has no test split", data_dir.display());
    }
    let twins = cfg.alphabet_spec()?.twin_pairs();
    let report = run_ablation(cfg, &data, &data.test, &twins, |r| {
        eprintln!("{} seed {}: test_err {:.4}", r.variant, r.seed, r.test_err)
    })?;
    write(out, &report.to_csv())?;
    if let Some(s) = summary {
        write(&s, &report.summary_csv())?;
    }
    print!("{}", report.summary_text());
    Ok(())
}

fn pbm_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "pbm"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no page images given");
    }
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "page".into())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ocr(
    cfg: &Config,
    model: &Path,
    lm_path: &Path,
    vocab: Option<PathBuf>,
    use_lm: bool,
    dump: Option<PathBuf>,
    out: Option<PathBuf>,
    inputs: &[PathBuf],
) -> Result<()> {
    let net = Network::load(model).with_context(|| format!("cannot load model {}", model.display()))?;
    let lm = TrigramTable::load(lm_path)
        .with_context(|| format!("cannot load language model {}", lm_path.display()))?
        .with_order(cfg.n)?;
    let vocab = config_vocab(cfg, vocab)?;
    if net.num_classes() != vocab.len() || lm.k != vocab.len() {
        bail!(
            "model has {} classes, language model {} and vocabulary {}",
            net.num_classes(),
            lm.k,
            vocab.len()
        );
    }
    let files = pbm_inputs(inputs)?;
    for d in out.iter().chain(&dump) {
        create_dir(d)?;
    }
    let results: Vec<Result<(String, Vec<LineDecode>)>> = files
        .par_iter()
        .map(|f| {
            let img = read_pbm(f).with_context(|| format!("cannot read image {}", f.display()))?;
            let lines = ocr_page(&img, &net, &lm, cfg, use_lm).with_context(|| format!("page {}", f.display()))?;
            Ok((stem(f), lines))
        })
        .collect();
    let single = files.len() == 1;
    for r in results {
        let (name, lines) = r?;
        let mut text = String::new();
        for l in &lines {
            text.push_str(&vocab.decode(&l.labels)?);
            text.push('\n');
        }
        if let Some(d) = &dump {
            for (i, l) in lines.iter().enumerate() {
                write(&d.join(format!("{name}_line{i:02}.seg.txt")), &l.seg.dump())?;
                write(&d.join(format!("{name}_line{i:02}.rec.txt")), &l.rec.dump(Some(&vocab)))?;
            }
        }
        match &out {
            Some(d) => write(&d.join(format!("{name}.txt")), &text)?,
            None if single => print!("{text}"),
            None => print!("# {name}\n{text}"),
        }
    }
    Ok(())
}

fn cmd_eval(cfg: &Config, truth_dir: &Path, ocr_dir: &Path, vocab: Option<PathBuf>, csv: Option<PathBuf>) -> Result<()> {
    let vocab = config_vocab(cfg, vocab)?;
    let mut truths: Vec<PathBuf> = fs::read_dir(truth_dir)
        .with_context(|| format!("cannot list {}", truth_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|f| f.extension().is_some_and(|x| x == "truth"))
        .collect();
    truths.sort();
    if truths.is_empty() {
        bail!("no .truth files in {}", truth_dir.display());
    }
    let scores: Vec<_> = truths
        .par_iter()
        .map(|t| {
            let name = stem(t);
            let truth = PageTruth::parse(&fs::read_to_string(t)?).with_context(|| format!("truth {}", t.display()))?;
            let hyp_path = ocr_dir.join(format!("{name}.txt"));
            let hyp = fs::read_to_string(&hyp_path).with_context(|| format!("cannot read {}", hyp_path.display()))?;
            score_page(&name, &truth, &parse_ocr_text(&hyp, &vocab)).with_context(|| format!("page {name}"))
        })
        .collect::<Result<_>>()?;
    if let Some(c) = csv {
        write(&c, &report_csv(&scores))?;
    }
    print!("{}", report_text(&scores));
    Ok(())
}

fn cmd_distort_preview(cfg: &Config, out: &Path, samples: usize) -> Result<()> {
    let alpha = cfg.alphabet_spec()?;
    let params = cfg.distortion_params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (side, pad) = (48, 2);
    let cols = samples + 1;
    let mut grid = GrayImage::new(cols * (side + pad) + pad, alpha.num_classes() * (side + pad) + pad, 128);
    for class in 0..alpha.num_classes() {
        let glyph = scale_to_square(&alpha.render_random(class, &mut rng)?.image, side)?;
        let y = pad + class * (side + pad);
        grid.paste(&glyph.to_gray(), pad, y);
        for c in 1..cols {
            let d = distort(&glyph, &params, &mut rng)?;
            grid.paste(&d.to_gray(), pad + c * (side + pad), y);
        }
    }
    write_pgm(out, &grid).with_context(|| format!("cannot write {}", out.display()))?;
    println!("wrote {}x{} preview to {}", alpha.num_classes(), cols, out.display());
    Ok(())
}
