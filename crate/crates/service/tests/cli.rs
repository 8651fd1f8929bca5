use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use protattn_core::synth::{golden_fixture, planted_embeddings};
use protattn_core::tensors::{dump_file_name, write_embeddings, EMBEDDING_EXTENSION};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden")
}

fn protattn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protattn")).args(args).output().unwrap()
}

fn analyze(out: &Path, extra: &[&str]) -> Output {
    let dir = golden_dir();
    let corpus = dir.join("corpus.jsonl");
    let attn = dir.join("attn");
    let mut args = vec![
        "analyze",
        "--corpus",
        corpus.to_str().unwrap(),
        "--attn",
        attn.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    protattn(&args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn analyze_writes_report_files() {
    let out = tempfile::tempdir().unwrap();
    let o = analyze(out.path(), &["--property", "contact,binding_site", "--aa-correlation"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "report.json",
        "heatmap_contact.csv",
        "topheads_contact.csv",
        "scores_binding_site.csv",
        "aa_correlation.csv",
    ] {
        assert!(out.path().join(name).is_file(), "missing {name}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.path().join("report.json")).unwrap()).unwrap();
    let tables = report["tables"].as_array().unwrap();
    assert_eq!(tables[0]["property"], "binding_site");
    assert_eq!(tables[1]["top_heads"][0]["layer"], 2);
    assert_eq!(tables[1]["top_heads"][0]["head"], 1);
}

#[test]
fn analyze_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for out in [&a, &b] {
        let o = analyze(out.path(), &["--property", "all", "--null-seed", "9"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()));
}

#[test]
fn null_seed_flattens_planted_heads() {
    let out = tempfile::tempdir().unwrap();
    let o = analyze(out.path(), &["--property", "contact", "--null-seed", "3"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["null_seed"], 3);
    let top = report["tables"][0]["top_heads"][0]["score"].as_f64().unwrap();
    assert!(top < 0.6, "shuffled top score {top}");
}

#[test]
fn unknown_property_exits_2_with_valid_names() {
    let out = tempfile::tempdir().unwrap();
    let o = analyze(out.path(), &["--property", "helicity"]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("helicity") && stderr.contains("contact") && stderr.contains("ss_helix"), "{stderr}");
}

#[test]
fn missing_inputs_exit_2() {
    let out = tempfile::tempdir().unwrap();
    let o = protattn(&[
        "analyze",
        "--corpus",
        "/nonexistent/corpus.jsonl",
        "--attn",
        "/nonexistent",
        "--property",
        "contact",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let corpus = golden_dir().join("corpus.jsonl");
    let o = protattn(&[
        "probe",
        "--corpus",
        corpus.to_str().unwrap(),
        "--emb",
        "/nonexistent/emb",
        "--task",
        "binding_site",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/emb"));
}

#[test]
fn probe_finds_planted_layer_and_is_reproducible() {
    let (corpus, _) = golden_fixture();
    let emb_dir = tempfile::tempdir().unwrap();
    for r in corpus.iter() {
        let labels: Vec<usize> = (0..r.len()).map(|i| r.binding_sites.contains(&i) as usize).collect();
        let emb = planted_embeddings(r, 3, 6, 1, &labels, 4.0, 5);
        let file = fs::File::create(emb_dir.path().join(dump_file_name(&r.id, EMBEDDING_EXTENSION))).unwrap();
        write_embeddings(&emb, std::io::BufWriter::new(file)).unwrap();
    }
    let corpus_path = golden_dir().join("corpus.jsonl");
    let run = |out: &Path| {
        protattn(&[
            "probe",
            "--corpus",
            corpus_path.to_str().unwrap(),
            "--emb",
            emb_dir.path().to_str().unwrap(),
            "--task",
            "binding_site",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
        ])
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for out in [&a, &b] {
        let o = run(out.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let name = "probe_binding_site_embedding.json";
    let bytes = fs::read(a.path().join(name)).unwrap();
    assert_eq!(bytes, fs::read(b.path().join(name)).unwrap());
    let results: Vec<serde_json::Value> = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(results.len(), 3);
    let best = results.iter().max_by(|x, y| x["metric"].as_f64().partial_cmp(&y["metric"].as_f64()).unwrap()).unwrap();
    assert_eq!(best["layer"], 2);
}

#[test]
fn bad_probe_task_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let corpus = golden_dir().join("corpus.jsonl");
    let o = protattn(&[
        "probe",
        "--corpus",
        corpus.to_str().unwrap(),
        "--task",
        "folding",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
