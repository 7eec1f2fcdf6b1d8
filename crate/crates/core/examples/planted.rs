//! Writes the synthetic planted corpus and a matching `sentex.toml` into a
//! directory, ready for `sentex --config <dir>/sentex.toml preprocess`.

use std::path::PathBuf;

use sentex_core::config::PipelineConfig;
use sentex_core::planted::{PlantedConfig, PlantedCorpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "planted".into()));
    let planted = PlantedCorpus::generate(&PlantedConfig::default())?;
    planted.write(&dir.join("data"))?;

    let mut config = PipelineConfig::default();
    config.paths.reviews = "data/reviews.jsonl".into();
    config.paths.lexicon = "data/attributes.txt".into();
    config.paths.sentence_vectors = Some("data/sentences.vec".into());
    config.paths.word_vectors = Some("data/words.vec".into());
    config.paths.workdir = "work".into();
    config.corpus.min_activity = 1;
    config.model.user_dim = 32;
    config.model.item_dim = 32;
    config.model.hidden = 32;
    config.model.deep_layers = vec![32, 32];
    std::fs::write(dir.join("sentex.toml"), config.to_toml())?;
    println!("wrote {}", dir.join("sentex.toml").display());
    Ok(())
}
