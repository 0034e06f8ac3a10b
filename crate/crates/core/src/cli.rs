//! Command-line driver.
//!
//! Every subcommand that touches the pipeline reads a flat config file
//! (`--config`) and accepts `--set key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Mode, PipelineConfig};
use crate::corpus::{read_conll_file, sample_split, write_conll, write_conll_annotated, Corpus, Lang};
use crate::error::{Error, Result};
use crate::eval::{compare_runs, micro_f1, unique_valid_entities};
use crate::filter::{filter_consistent, train_tagger};
use crate::generate::{augment, parse_provenance, write_provenance, AugmentedSample};
use crate::mlm::{load_checkpoint, save_checkpoint};
use crate::pipeline::{self, with_workers};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "melm", version, about = "Masked entity language modeling augmentation for NER")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Pipeline config file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set rounds=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        cfg.apply_overrides(&self.overrides, Path::new("."))?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a low-resource training split.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fine-tune the masked LM and save a checkpoint.
    TrainMlm {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output_dir>/mlm.ckpt.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate augmented samples with a trained checkpoint.
    Augment {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Source corpus; defaults to the configured gold (plus code-mixed) data.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output CoNLL; provenance goes next to it with a `.prov` extension.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write code-mixed gold sentences.
    Codemix {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Keep augmented samples the gold-trained tagger labels identically.
    Filter {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Augmented CoNLL with a `.prov` sidecar.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score predictions, or compare gold-only and augmented training.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Extra training sentences for the augmented condition; defaults to
        /// the pipeline's code-mixed and augmented outputs.
        #[arg(long)]
        augmented: Vec<PathBuf>,
        /// Score this file against `--gold` instead of training taggers.
        #[arg(long, requires = "gold")]
        predicted: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Also write the tables as tab-separated files into this directory.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Count unique valid entities per dataset.
    Stats {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Datasets to count; the gold training data is always included.
        #[arg(long)]
        data: Vec<PathBuf>,
    },
    /// Run code-mixing, fine-tuning, generation and filtering end to end.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the synthetic two-language benchmark and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        train_per_language: usize,
        #[arg(long, default_value_t = 200)]
        test_per_language: usize,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_corpus(path: &Path, cfg: &PipelineConfig) -> Result<Corpus> {
    let default = cfg
        .train
        .keys()
        .next()
        .cloned()
        .map_or_else(|| Lang::new("xx"), Ok)?;
    read_conll_file(path, &default)
}

fn read_samples(path: &Path, cfg: &PipelineConfig) -> Result<Vec<AugmentedSample>> {
    let corpus = read_corpus(path, cfg)?;
    let prov_path = path.with_extension("prov");
    if !prov_path.exists() {
        return Err(Error::MissingFile(prov_path));
    }
    let text = std::fs::read_to_string(&prov_path).map_err(|e| Error::io(&prov_path, e))?;
    let prov = parse_provenance(&text)?;
    if prov.len() != corpus.len() {
        return Err(Error::Parse {
            line: 0,
            message: format!("{} sentences but {} provenance lines", corpus.len(), prov.len()),
        });
    }
    Ok(corpus
        .into_sentences()
        .into_iter()
        .zip(prov)
        .map(|(sentence, provenance)| AugmentedSample { sentence, provenance })
        .collect())
}

/// Gold data plus code-mixed sentences in multilingual mode.
fn training_corpus(cfg: &PipelineConfig) -> Result<(Vec<Corpus>, Corpus)> {
    let gold = pipeline::load_gold(cfg)?;
    let tables = pipeline::load_tables(cfg)?;
    let mixed = pipeline::codemix_stage(cfg, &gold, &tables)?;
    let training = Corpus::concat(gold.iter().chain([&mixed]));
    Ok((gold, training))
}

/// Runs one parsed command. Output paths come from the config unless given.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split {
            input,
            lang,
            n,
            seed,
            output,
        } => {
            let lang = Lang::new(lang).map_err(|e| Error::Config(e.to_string()))?;
            let corpus = read_conll_file(&input, &lang)?;
            let split = sample_split(&corpus, n, seed)?;
            write(&output, &write_conll(&split))?;
            println!("wrote {} of {} sentences to {}", split.len(), corpus.len(), output.display());
        }
        Command::TrainMlm { cfg, checkpoint } => {
            let cfg = cfg.load()?;
            cfg.validate_paths()?;
            let path = checkpoint.unwrap_or_else(|| cfg.output_dir.join("mlm.ckpt.json"));
            let model = with_workers(cfg.workers, || -> Result<_> {
                let (_, training) = training_corpus(&cfg)?;
                pipeline::train_stage(&cfg, &training)
            })??;
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            save_checkpoint(&model, &path)?;
            println!(
                "trained {} steps, final loss {:.4}, saved {}",
                model.steps(),
                model.loss_history().last().copied().unwrap_or(f64::NAN),
                path.display()
            );
        }
        Command::Augment {
            cfg,
            checkpoint,
            input,
            output,
        } => {
            let cfg = cfg.load()?;
            cfg.validate_paths()?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.output_dir.join("mlm.ckpt.json"));
            let model = load_checkpoint(&ckpt)?;
            let source = match input {
                Some(p) => read_corpus(&p, &cfg)?,
                None => training_corpus(&cfg)?.1,
            };
            let gen_cfg = pipeline::generate_config(&cfg);
            pipeline::check_compatible(&model, &source, gen_cfg.language_markers)?;
            let out = with_workers(cfg.workers, || augment(&source, &model, &gen_cfg, cfg.seed))?;
            let path = output.unwrap_or_else(|| cfg.output_dir.join("generated.conll"));
            let corpus = Corpus::new(out.samples.iter().map(|s| s.sentence.clone()).collect());
            write(&path, &write_conll_annotated(&corpus))?;
            write(&path.with_extension("prov"), &write_provenance(&out.samples))?;
            println!(
                "generated {} samples ({} skipped) into {}",
                out.samples.len(),
                out.skipped.len(),
                path.display()
            );
        }
        Command::Codemix { cfg, output } => {
            let mut cfg = cfg.load()?;
            cfg.validate_paths()?;
            cfg.mode = Mode::Multilingual;
            let gold = pipeline::load_gold(&cfg)?;
            let tables = pipeline::load_tables(&cfg)?;
            let mixed = pipeline::codemix_stage(&cfg, &gold, &tables)?;
            let path = output.unwrap_or_else(|| cfg.output_dir.join("codemixed.conll"));
            write(&path, &write_conll_annotated(&mixed))?;
            println!("wrote {} code-mixed sentences to {}", mixed.len(), path.display());
        }
        Command::Filter { cfg, input, output } => {
            let cfg = cfg.load()?;
            cfg.validate_paths()?;
            let samples = read_samples(&input, &cfg)?;
            let (gold, training) = training_corpus(&cfg)?;
            let (kept, report) = with_workers(cfg.workers, || -> Result<_> {
                let tagger = train_tagger(&Corpus::concat(&gold), cfg.tagger_epochs, cfg.seed)?;
                Ok(filter_consistent(&samples, &tagger, training.sentences(), cfg.dedup))
            })??;
            let corpus = Corpus::new(kept.iter().map(|s| s.sentence.clone()).collect());
            write(&output, &write_conll_annotated(&corpus))?;
            write(&output.with_extension("prov"), &write_provenance(&kept))?;
            write(&output.with_extension("report.txt"), &report.render())?;
            print!("{}", report.render());
        }
        Command::Eval {
            cfg,
            augmented,
            predicted,
            gold,
            tsv,
        } => {
            let cfg = cfg.load()?;
            if let (Some(pred), Some(gold)) = (predicted, gold) {
                let gold = read_corpus(&gold, &cfg)?;
                let pred = read_corpus(&pred, &cfg)?;
                let report = micro_f1(&gold, &pred)?;
                print!("{}", report.render());
                if let Some(dir) = tsv {
                    write(&dir.join("eval.tsv"), &report.to_tsv())?;
                }
                return Ok(());
            }
            cfg.validate_paths()?;
            if cfg.test.is_empty() {
                return Err(Error::Config("eval needs test.<lang> files".into()));
            }
            let gold = Corpus::concat(&pipeline::load_gold(&cfg)?);
            let test = Corpus::concat(&pipeline::load_test(&cfg)?);
            let paths = if augmented.is_empty() {
                ["codemixed.conll", "augmented.conll"]
                    .iter()
                    .map(|f| cfg.output_dir.join(f))
                    .filter(|p| p.exists())
                    .collect()
            } else {
                augmented
            };
            let mut extra = Vec::new();
            for p in &paths {
                extra.extend(read_corpus(p, &cfg)?.into_sentences());
            }
            let table = with_workers(cfg.workers, || {
                compare_runs(&gold, &extra, &test, &cfg.eval_seeds, cfg.tagger_epochs)
            })??;
            print!("{}", table.render());
            if let Some(dir) = tsv {
                write(&dir.join("compare.tsv"), &table.to_tsv())?;
            }
        }
        Command::Stats { cfg, data } => {
            let cfg = cfg.load()?;
            cfg.validate_paths()?;
            // The oracle sees the full training files, not the low-resource split.
            let full = PipelineConfig {
                split_n: None,
                ..cfg.clone()
            };
            let oracle_data = Corpus::concat(&pipeline::load_gold(&full)?);
            let gold = Corpus::concat(&pipeline::load_gold(&cfg)?);
            let mut sets: BTreeMap<String, Corpus> = BTreeMap::new();
            sets.insert("gold".into(), gold);
            for p in &data {
                sets.insert(p.display().to_string(), read_corpus(p, &cfg)?);
            }
            let counts = with_workers(cfg.workers, || -> Result<_> {
                let oracle = train_tagger(&oracle_data, cfg.tagger_epochs, cfg.seed)?;
                let named: Vec<(&str, &[_])> =
                    sets.iter().map(|(k, v)| (k.as_str(), v.sentences())).collect();
                Ok(unique_valid_entities(&named, &oracle))
            })??;
            println!("{:<40} {:>8} {:>16}", "dataset", "sentences", "valid_entities");
            for (name, n) in counts {
                println!("{:<40} {:>8} {:>16}", name, sets[&name].len(), n);
            }
        }
        Command::Pipeline { cfg } => {
            let cfg = cfg.load()?;
            let run = pipeline::run_pipeline(&cfg)?;
            println!(
                "gold {} + code-mixed {} + kept {} (of {} generated) = {} sentences in {}",
                run.gold.len(),
                run.codemixed.len(),
                run.kept.len(),
                run.generated.samples.len(),
                run.output.len(),
                cfg.output_dir.join("train_aug.conll").display()
            );
        }
        Command::Synth {
            out,
            seed,
            train_per_language,
            test_per_language,
        } => {
            let data = synth::generate(&SynthConfig {
                train_per_language,
                test_per_language,
                seed,
                ..SynthConfig::default()
            });
            synth::write_dataset(&data, &out)?;
            write(&out.join("melm.conf"), &synth::config_text(seed))?;
            println!("wrote synthetic dataset and melm.conf to {}", out.display());
        }
    }
    Ok(())
}

/// Parses arguments and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}
