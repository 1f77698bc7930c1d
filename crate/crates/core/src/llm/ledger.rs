use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Surrogate tokenizer: maximal runs of non-whitespace plus line breaks.
pub fn count_tokens(text: &str) -> u64 {
    (text.split_whitespace().count() + text.matches('\n').count()) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerPhase {
    DeviceControlCodegen,
    IntegrationCodegen,
    TestGen,
    AutoDebug,
    HilDebug,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    RetrievedKnowledge,
    Prompt,
    Completion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub phase: LedgerPhase,
    pub kind: TokenKind,
    pub token_count: u64,
}

/// Append-only token accounting for one pipeline session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindTotals {
    pub retrieved_knowledge: u64,
    pub prompt: u64,
    pub completion: u64,
}

impl KindTotals {
    fn add(&mut self, kind: TokenKind, n: u64) {
        match kind {
            TokenKind::RetrievedKnowledge => self.retrieved_knowledge += n,
            TokenKind::Prompt => self.prompt += n,
            TokenKind::Completion => self.completion += n,
        }
    }

    pub fn total(&self) -> u64 {
        self.retrieved_knowledge + self.prompt + self.completion
    }
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, phase: LedgerPhase, kind: TokenKind, token_count: u64) {
        self.entries.push(LedgerEntry { phase, kind, token_count });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.token_count).sum()
    }

    pub fn total_of(&self, kind: TokenKind) -> u64 {
        self.entries.iter().filter(|e| e.kind == kind).map(|e| e.token_count).sum()
    }

    pub fn total_for(&self, phase: LedgerPhase, kind: TokenKind) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.phase == phase && e.kind == kind)
            .map(|e| e.token_count)
            .sum()
    }

    pub fn totals_by_phase(&self) -> BTreeMap<LedgerPhase, KindTotals> {
        let mut out: BTreeMap<LedgerPhase, KindTotals> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.phase).or_default().add(e.kind, e.token_count);
        }
        out
    }
}
