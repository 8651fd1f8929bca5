//! Regenerates the golden end-to-end fixture.
//!
//! cargo run -p protattn-core --example make_golden -- crates/core/tests/fixtures/golden

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use protattn_core::corpus::write_corpus;
use protattn_core::synth::golden_fixture;
use protattn_core::tensors::{dump_file_name, write_attention, ATTENTION_EXTENSION};

fn main() -> std::io::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "golden".into()));
    let (corpus, tensors) = golden_fixture();
    fs::create_dir_all(out.join("attn"))?;
    write_corpus(corpus.iter(), BufWriter::new(File::create(out.join("corpus.jsonl"))?))?;
    for (id, t) in &tensors {
        let path = out.join("attn").join(dump_file_name(id, ATTENTION_EXTENSION));
        write_attention(t, BufWriter::new(File::create(path)?))?;
    }
    println!("wrote {} proteins to {}", corpus.len(), out.display());
    Ok(())
}
