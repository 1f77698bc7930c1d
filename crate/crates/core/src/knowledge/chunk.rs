use serde::{Deserialize, Serialize};

use crate::llm::count_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub budget: u64,
    pub overlap: u64,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self { budget: 512, overlap: 64 }
    }
}

/// Splits a line longer than the budget at word boundaries.
fn split_long_line(line: &str, budget: u64) -> Vec<String> {
    let newline = line.ends_with('\n');
    let words: Vec<&str> = line.split_whitespace().collect();
    // the trailing newline counts as a token, reserve room for it
    let per_piece = if newline { budget.saturating_sub(1).max(1) } else { budget } as usize;
    let mut pieces: Vec<String> = words.chunks(per_piece).map(|w| w.join(" ")).collect();
    let n = pieces.len();
    for (i, p) in pieces.iter_mut().enumerate() {
        if i + 1 < n {
            p.push(' ');
        } else if newline {
            p.push('\n');
        }
    }
    pieces
}

/// Splits `text` into windows of at most `budget` tokens cut at line
/// boundaries, with consecutive windows sharing up to `overlap` tokens of
/// whole lines. Deterministic; windows with zero tokens are dropped.
pub fn chunk_text(text: &str, config: ChunkingConfig) -> Vec<String> {
    let budget = config.budget.max(1);
    let overlap = config.overlap.min(budget.saturating_sub(1));
    let mut segments: Vec<(String, u64)> = Vec::new();
    for line in text.split_inclusive('\n') {
        let n = count_tokens(line);
        if n > budget {
            segments.extend(split_long_line(line, budget).into_iter().map(|p| {
                let c = count_tokens(&p);
                (p, c)
            }));
        } else {
            segments.push((line.to_string(), n));
        }
    }
    if segments.is_empty() {
        return Vec::new();
    }
    if segments.iter().map(|s| s.1).sum::<u64>() <= budget {
        return if count_tokens(text) > 0 { vec![text.to_string()] } else { Vec::new() };
    }

    let mut out = Vec::new();
    let mut start = 0usize;
    loop {
        let mut end = start;
        let mut used = 0u64;
        while end < segments.len() && used + segments[end].1 <= budget {
            used += segments[end].1;
            end += 1;
        }
        if end == start {
            end = start + 1;
        }
        let window: String = segments[start..end].iter().map(|s| s.0.as_str()).collect();
        if count_tokens(&window) > 0 {
            out.push(window);
        }
        if end >= segments.len() {
            break;
        }
        let mut next = end;
        let mut shared = 0u64;
        while next - 1 > start && shared + segments[next - 1].1 <= overlap {
            shared += segments[next - 1].1;
            next -= 1;
        }
        start = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent chunk-count formula for uniform lines of `line_tokens`
    /// tokens where budget and overlap are multiples of the line size.
    fn expected_windows(total: u64, budget: u64, overlap: u64) -> u64 {
        if total <= budget {
            1
        } else {
            1 + (total - budget).div_ceil(budget - overlap)
        }
    }

    #[test]
    fn ten_thousand_token_leaf() {
        // 5000 lines of "word\n" = 2 tokens each = 10,000 tokens
        let text: String = (0..5000).map(|i| format!("w{i}\n")).collect();
        assert_eq!(count_tokens(&text), 10_000);
        let chunks = chunk_text(&text, ChunkingConfig::default());
        assert_eq!(chunks.len() as u64, expected_windows(10_000, 512, 64));
        assert_eq!(chunks.len(), 23);
        assert!(chunks.iter().all(|c| count_tokens(c) <= 512));
        // consecutive windows share exactly 64 tokens (32 lines)
        let first: Vec<&str> = chunks[0].lines().collect();
        let second: Vec<&str> = chunks[1].lines().collect();
        assert_eq!(&first[first.len() - 32..], &second[..32]);
        // every line is covered
        assert!(chunks.last().unwrap().ends_with("w4999\n"));
    }

    #[test]
    fn short_text_is_one_chunk() {
        assert_eq!(chunk_text("a b c\n", ChunkingConfig::default()), vec!["a b c\n".to_string()]);
        assert!(chunk_text("", ChunkingConfig::default()).is_empty());
        assert!(chunk_text("  \n", ChunkingConfig { budget: 1, overlap: 0 }).len() <= 1);
    }

    #[test]
    fn long_single_line_is_split_on_words() {
        let text = (0..50).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let chunks = chunk_text(&text, ChunkingConfig { budget: 8, overlap: 2 });
        assert!(chunks.iter().all(|c| count_tokens(c) <= 8));
        let words: Vec<String> = chunks.iter().flat_map(|c| c.split_whitespace().map(String::from)).collect();
        assert!(words.contains(&"t49".to_string()));
        assert!(words.contains(&"t0".to_string()));
    }

    proptest::proptest! {
        #[test]
        fn chunking_is_deterministic_and_bounded(lines in proptest::collection::vec("[a-z ]{0,30}", 0..80), budget in 4u64..40, overlap in 0u64..8) {
            let text = lines.join("\n");
            let cfg = ChunkingConfig { budget, overlap };
            let a = chunk_text(&text, cfg);
            let b = chunk_text(&text, cfg);
            proptest::prop_assert_eq!(&a, &b);
            for c in &a {
                proptest::prop_assert!(count_tokens(c) <= budget);
                proptest::prop_assert!(count_tokens(c) > 0);
            }
        }
    }
}
