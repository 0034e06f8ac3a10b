//! End-to-end augmentation run.
//!
//! Monolingual: fine-tune on gold, generate, filter. Multilingual: code-mix
//! gold first, fine-tune with language markers on gold plus code-mixed data,
//! then generate from that union and filter. The output corpus is the
//! training data followed by the kept samples.

use std::path::Path;

use log::info;

use crate::codemix::{codemix_corpus, load_embeddings_file, EmbeddingTables};
use crate::config::{Mode, PipelineConfig};
use crate::corpus::{
    build_entity_index, parse_conll, read_conll_file, sample_split, write_conll_annotated, Corpus, Lang,
};
use crate::error::{Error, Result};
use crate::filter::{filter_consistent, train_tagger, FilterReport, PerceptronTagger};
use crate::generate::{augment, write_provenance, AugmentOutput, AugmentedSample, GenerateConfig};
use crate::mlm::{default_label_words, finetune, init_label_embeddings, save_checkpoint, TinyMlm, Vocabulary};
use crate::rng::{self, stage};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs `f` on a pool of `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Gold training corpora, one per configured language in language order,
/// subsampled to `split.n` sentences each when set.
pub fn load_gold(cfg: &PipelineConfig) -> Result<Vec<Corpus>> {
    cfg.train
        .iter()
        .enumerate()
        .map(|(i, (lang, path))| {
            let full = read_conll_file(path, lang)?;
            match cfg.split_n {
                Some(n) => sample_split(&full, n, rng::derive_seed(cfg.seed, &[stage::SPLIT, i as u64])),
                None => Ok(full),
            }
        })
        .collect()
}

pub fn load_test(cfg: &PipelineConfig) -> Result<Vec<Corpus>> {
    cfg.test
        .iter()
        .map(|(lang, path)| read_conll_file(path, lang))
        .collect()
}

pub fn load_tables(cfg: &PipelineConfig) -> Result<EmbeddingTables> {
    let mut tables = EmbeddingTables::default();
    for ((a, b), path) in &cfg.embeddings {
        tables.insert(a.clone(), b.clone(), load_embeddings_file(path)?);
    }
    Ok(tables)
}

/// Code-mixed sentences in multilingual mode, empty otherwise.
pub fn codemix_stage(cfg: &PipelineConfig, gold: &[Corpus], tables: &EmbeddingTables) -> Result<Corpus> {
    if cfg.mode == Mode::Monolingual {
        return Ok(Corpus::default());
    }
    let index = build_entity_index(gold);
    let mixed = codemix_corpus(gold, &cfg.codemix, &index, tables, cfg.seed)?;
    info!("code-mixed {} sentences", mixed.len());
    Ok(mixed)
}

/// Builds the vocabulary and fine-tunes a fresh model on `training`.
pub fn train_stage(cfg: &PipelineConfig, training: &Corpus) -> Result<TinyMlm> {
    let langs: Vec<Lang> = training.languages().iter().cloned().collect();
    let vocab = Vocabulary::build(training, cfg.min_freq, &[], &langs);
    let mut model = TinyMlm::new(vocab, cfg.model, &mut rng::stream(cfg.seed, &[stage::MODEL_INIT]))?;
    if cfg.label_init {
        init_label_embeddings(&mut model, &default_label_words());
    }
    finetune(&mut model, training, &cfg.train_config(), cfg.seed)?;
    info!(
        "fine-tuned on {} sentences, final loss {:.4}",
        training.len(),
        model.loss_history().last().copied().unwrap_or(f64::NAN)
    );
    Ok(model)
}

pub fn generate_config(cfg: &PipelineConfig) -> GenerateConfig {
    GenerateConfig {
        masking: cfg.masking,
        sampling: cfg.sampling,
        language_markers: cfg.mode == Mode::Multilingual,
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub gold: Corpus,
    pub codemixed: Corpus,
    /// Gold plus code-mixed sentences; the generation source.
    pub training: Corpus,
    pub model: TinyMlm,
    pub generated: AugmentOutput,
    pub tagger: PerceptronTagger,
    pub kept: Vec<AugmentedSample>,
    pub report: FilterReport,
    /// `training` followed by the kept samples.
    pub output: Corpus,
}

/// Runs every stage in memory on already loaded inputs.
pub fn run(cfg: &PipelineConfig, gold: &[Corpus], tables: &EmbeddingTables) -> Result<PipelineRun> {
    cfg.validate()?;
    let gold_all = Corpus::concat(gold);
    let codemixed = codemix_stage(cfg, gold, tables)?;
    let training = Corpus::concat([&gold_all, &codemixed]);
    let model = train_stage(cfg, &training)?;
    let generated = augment(&training, &model, &generate_config(cfg), cfg.seed);
    info!(
        "generated {} samples, skipped {}",
        generated.samples.len(),
        generated.skipped.len()
    );
    let tagger = train_tagger(&gold_all, cfg.tagger_epochs, cfg.seed)?;
    let (kept, report) = filter_consistent(&generated.samples, &tagger, training.sentences(), cfg.dedup);
    info!("kept {} of {} samples", kept.len(), generated.samples.len());
    let output = Corpus::new(
        training
            .sentences()
            .iter()
            .cloned()
            .chain(kept.iter().map(|s| s.sentence.clone()))
            .collect(),
    );
    Ok(PipelineRun {
        gold: gold_all,
        codemixed,
        training,
        model,
        generated,
        tagger,
        kept,
        report,
        output,
    })
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Run manifest: version, config hash, seed, counts and the canonical config.
pub fn manifest(cfg: &PipelineConfig, run: &PipelineRun) -> String {
    format!(
        "melm_version = {VERSION}\nconfig_sha256 = {}\nseed = {}\ngold = {}\ncodemixed = {}\ngenerated = {}\nkept = {}\noutput = {}\n\n{}",
        cfg.hash(),
        cfg.seed,
        run.gold.len(),
        run.codemixed.len(),
        run.generated.samples.len(),
        run.kept.len(),
        run.output.len(),
        cfg.canonical()
    )
}

/// Writes all artifacts of `run` into `dir`.
pub fn write_outputs(cfg: &PipelineConfig, run: &PipelineRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let kept = Corpus::new(run.kept.iter().map(|s| s.sentence.clone()).collect());
    write_file(dir, "train_aug.conll", &write_conll_annotated(&run.output))?;
    write_file(dir, "augmented.conll", &write_conll_annotated(&kept))?;
    write_file(dir, "augmented.prov", &write_provenance(&run.kept))?;
    if cfg.mode == Mode::Multilingual {
        write_file(dir, "codemixed.conll", &write_conll_annotated(&run.codemixed))?;
    }
    write_file(dir, "filter_report.txt", &run.report.render())?;
    if cfg.save_checkpoint {
        save_checkpoint(&run.model, &dir.join("mlm.ckpt.json"))?;
    }
    write_file(dir, "manifest.txt", &manifest(cfg, run))?;

    // The emitted training file must parse back to the same corpus.
    let default_lang = run.output.languages().iter().next().cloned().unwrap_or(Lang::new("xx")?);
    let text = std::fs::read_to_string(dir.join("train_aug.conll")).map_err(|e| Error::io(dir, e))?;
    if parse_conll(&text, &default_lang)? != run.output {
        return Err(Error::Structure("train_aug.conll does not re-parse to the output corpus".into()));
    }
    Ok(())
}

/// Loads inputs, runs all stages on `cfg.workers` threads and writes outputs.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    cfg.validate_paths()?;
    let gold = load_gold(cfg)?;
    let tables = load_tables(cfg)?;
    let run = with_workers(cfg.workers, || run(cfg, &gold, &tables))??;
    write_outputs(cfg, &run, &cfg.output_dir)?;
    Ok(run)
}

/// Checks that `model` has marker tokens for every class (and language, with
/// language markers) in `corpus`.
pub fn check_compatible(model: &TinyMlm, corpus: &Corpus, language_markers: bool) -> Result<()> {
    use crate::corpus::Tag;
    use crate::linearize::Marker;
    let mut needed: Vec<Marker> = Vec::new();
    for class in corpus.classes() {
        needed.push(Marker::Label(Tag::B(class.clone())));
        needed.push(Marker::Label(Tag::I(class)));
    }
    if language_markers {
        needed.extend(corpus.languages().iter().cloned().map(Marker::Language));
    }
    for m in needed {
        if crate::mlm::MlmBackend::vocab(model).get(&m.render()).is_none() {
            return Err(Error::Checkpoint(format!("checkpoint vocabulary lacks marker {m}")));
        }
    }
    Ok(())
}
