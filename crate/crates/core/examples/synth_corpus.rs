//! Generates a small synthetic corpus on disk and reads it back.
//!
//! `cargo run --example synth_corpus -- /tmp/corpus` keeps the output;
//! without an argument a temporary directory is used.

use std::path::PathBuf;

use motionsynth::synthdata::{build_corpus, load_corpus, CorpusConfig, Split, SplitScheme};

fn main() -> motionsynth::Result<()> {
    let tmp = std::env::temp_dir().join(format!("motionsynth-corpus-{}", std::process::id()));
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or(tmp);
    let config = CorpusConfig {
        per_family: 12,
        ..CorpusConfig::default()
    };
    let manifest = build_corpus(&config, &out)?;
    println!("wrote {} sequences to {}", manifest.sequences.len(), out.display());
    println!("counts {:?}", manifest.counts);
    println!("manifest hash {}", manifest.content_hash());

    let corpus = load_corpus(&out)?;
    for rec in corpus.records.iter().take(6) {
        let contact = rec.labels.iter().filter(|l| l[0] || l[1]).count();
        println!(
            "{} {:<15} {:<8} {:?} subject {:>2} {:?}, {contact}/{} frames in contact",
            rec.id,
            rec.spec.family.name(),
            rec.spec.primitive.kind(),
            rec.spec.hands,
            rec.subject,
            rec.split,
            rec.labels.len()
        );
    }
    let held_out = corpus.split(SplitScheme::Object, Split::Test);
    println!("object split holds out {} {} sequences", held_out.len(), config.held_out_object);
    Ok(())
}
