use std::path::Path;

use iotbridge_core::knowledge::{chunk_text, ChunkingConfig};
use iotbridge_core::llm::count_tokens;

fn manual() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/docs/dyson_manual.txt")).unwrap()
}

#[test]
fn manual_token_count_matches_reference() {
    // reference: len(s.split()) + s.count("\n") in Python
    assert_eq!(count_tokens(&manual()), 306);
}

#[test]
fn manual_chunks_respect_budget_and_cover_every_line() {
    let text = manual();
    let config = ChunkingConfig { budget: 64, overlap: 8 };
    let chunks = chunk_text(&text, config);
    assert!(chunks.len() > 1);
    assert!(chunks.iter().all(|c| count_tokens(c) <= 64));
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        assert!(chunks.iter().any(|c| c.contains(line.trim())), "{line:?} lost");
    }
}
