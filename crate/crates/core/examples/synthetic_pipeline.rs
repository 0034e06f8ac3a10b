//! Full multilingual run on the synthetic benchmark for one seed, followed by
//! the gold-only versus augmented comparison.

use melm::config::PipelineConfig;
use melm::corpus::{Corpus, Sentence};
use melm::eval::compare_runs;
use melm::pipeline;
use melm::synth::{self, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let dir = std::env::temp_dir().join("melm-synthetic-example");
    let data = synth::generate(&SynthConfig::default());
    synth::write_dataset(&data, &dir)?;
    let conf = dir.join("melm.conf");
    std::fs::write(&conf, synth::config_text(1))?;

    let cfg = PipelineConfig::load(&conf)?;
    let run = pipeline::run_pipeline(&cfg)?;
    print!("{}", run.report.render());

    let test = Corpus::concat(&pipeline::load_test(&cfg)?);
    let extra: Vec<Sentence> = run.output.sentences()[run.gold.len()..].to_vec();
    let table = compare_runs(&run.gold, &extra, &test, &cfg.eval_seeds, cfg.tagger_epochs)?;
    print!("{}", table.render());
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
