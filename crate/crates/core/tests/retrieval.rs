mod common;

use std::fs;

use mendloop::domain::ErrorLabel;
use mendloop::retrieval::{Embedder, EmbeddingVector, HashedEmbedder, RepairRecord, RetrievalError, VectorStore};

/// Brute-force reference for the hashed embedder, written from the format
/// description rather than the library code.
fn oracle_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut counts = vec![0.0f64; dim];
    let lowered = text.to_lowercase();
    for token in lowered.split(|c: char| !c.is_ascii_alphanumeric()).filter(|t| !t.is_empty()) {
        let mut h: u64 = 14695981039346656037;
        for byte in token.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(1099511628211);
        }
        counts[(h % dim as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    counts.iter().map(|c| c / norm).collect()
}

#[test]
fn hashed_embedding_matches_frozen_buckets() {
    // FNV-1a 64 mod 384: read -> 133, buffer -> 187, size -> 316.
    let v = HashedEmbedder::<f64>::default().embed("read buffer size").unwrap();
    let third = 1.0 / 3.0f64.sqrt();
    for (i, x) in v.values().iter().enumerate() {
        let want = if [133, 187, 316].contains(&i) { third } else { 0.0 };
        assert!((x - want).abs() < 1e-12, "bucket {i}: {x}");
    }
}

#[test]
fn hashed_embedding_matches_oracle() {
    let embedder = HashedEmbedder::<f64>::default();
    for text in [
        "read buffer size",
        "Read the BUFFER; then size it!",
        "write a function that copies at most n bytes into dst and NUL-terminates",
        "int main int main int",
        "x",
    ] {
        let got = embedder.embed(text).unwrap();
        let want = oracle_embedding(text, 384);
        for (a, b) in got.values().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{text}");
        }
    }
}

#[test]
fn f32_embeddings_agree_with_f64() {
    let a = HashedEmbedder::<f32>::new(64).embed("sum an array of integers").unwrap();
    let b = HashedEmbedder::<f64>::new(64).embed("sum an array of integers").unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((*x as f64 - y).abs() < 1e-6);
    }
}

#[test]
fn store_rejects_mismatched_dimensions() {
    let mut store = VectorStore::<f64>::in_memory(Some(4));
    let v = EmbeddingVector::normalize(vec![1.0, 0.0, 0.0]).unwrap();
    let record = RepairRecord::new("t", "c", v.clone(), ErrorLabel::ALL_CLEAN, "m");
    assert!(matches!(store.store_repair(record), Err(RetrievalError::DimensionMismatch { .. })));
    assert!(matches!(store.top_k(&v, 3), Err(RetrievalError::DimensionMismatch { .. })));
}

#[test]
fn three_record_fixture_lists_in_insertion_order() {
    let loaded = VectorStore::<f64>::load(common::fixture("store/three_records.jsonl")).unwrap();
    assert!(loaded.warnings.is_empty());
    let ids: Vec<&str> = loaded.store.records().iter().map(|r| r.record_id.as_str()).collect();
    assert_eq!(ids, ["rr-ded746aa7b93e99f", "rr-17eaaf9fbbd18a6b", "rr-e0c250663f7ffbe7"]);
    assert_eq!(loaded.store.dimension(), Some(4));
}

#[test]
fn corruption_before_the_last_line_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("memory.jsonl");
    let text = fs::read_to_string(common::fixture("store/three_records.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(1, "{not json");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let Err(err) = VectorStore::<f64>::load(&path) else {
        panic!("corrupt store must not load");
    };
    assert!(matches!(err, RetrievalError::CorruptStore { line: 2, .. }), "{err:?}");
}

#[test]
fn append_after_torn_tail_leaves_a_clean_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("memory.jsonl");
    fs::copy(common::fixture("store/torn_tail.jsonl"), &path).unwrap();
    let mut store = VectorStore::<f64>::load(&path).unwrap().store;
    let v = EmbeddingVector::normalize(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
    store
        .store_repair(RepairRecord::new("copy a file", "int main(void){return 0;}\n", v, ErrorLabel::ALL_CLEAN, "m"))
        .unwrap();
    let reloaded = VectorStore::<f64>::load(&path).unwrap();
    assert!(reloaded.warnings.is_empty());
    assert_eq!(reloaded.store.len(), 4);
    assert_eq!(reloaded.store.records(), store.records());
}
