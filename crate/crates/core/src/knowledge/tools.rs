use std::fmt::Write as _;

use super::source::{ContentKind, LeakageDenylist, SourceFetcher, WebResult};
use super::store::{KnowledgeStore, SearchHit};
use super::KnowledgeError;
use crate::llm::{count_tokens, Gateway};

/// Default number of chunks returned by a search tool call.
pub const DEFAULT_K: usize = 5;

/// The retrieval tools exposed to agents. Every successful call appends one
/// `retrieved_knowledge` entry to the gateway's ledger equal to the token
/// count of what was returned.
#[derive(Clone, Copy)]
pub struct KnowledgeTools<'a> {
    pub device: Option<&'a KnowledgeStore>,
    pub platform: Option<&'a KnowledgeStore>,
    pub web: Option<&'a dyn SourceFetcher>,
    pub denylist: &'a LeakageDenylist,
}

impl<'a> KnowledgeTools<'a> {
    pub fn search_device_db(&self, gw: &mut Gateway, query: &str, k: usize, kind: ContentKind) -> Result<Vec<SearchHit>, KnowledgeError> {
        let store = self.device.ok_or(KnowledgeError::StoreNotBuilt("device"))?;
        search(store, gw, query, k, kind)
    }

    pub fn search_platform_db(&self, gw: &mut Gateway, query: &str, k: usize, kind: ContentKind) -> Result<Vec<SearchHit>, KnowledgeError> {
        let store = self.platform.ok_or(KnowledgeError::StoreNotBuilt("platform"))?;
        search(store, gw, query, k, kind)
    }

    pub fn web_search(&self, gw: &mut Gateway, query: &str) -> Result<Vec<WebResult>, KnowledgeError> {
        let fetcher = self.web.ok_or(KnowledgeError::StoreNotBuilt("web"))?;
        let results: Vec<WebResult> = fetcher
            .web_search(query)?
            .into_iter()
            .filter(|r| self.denylist.screen(&[&r.locator, &r.snippet]).is_none())
            .collect();
        gw.record_retrieved(results.iter().map(|r| count_tokens(&r.snippet)).sum());
        Ok(results)
    }
}

fn search(store: &KnowledgeStore, gw: &mut Gateway, query: &str, k: usize, kind: ContentKind) -> Result<Vec<SearchHit>, KnowledgeError> {
    let hits = store.search(query, k, kind)?;
    gw.record_retrieved(hits.iter().map(|h| h.token_count).sum());
    Ok(hits)
}

/// Renders search hits as a tool observation.
pub fn render_hits(hits: &[SearchHit]) -> String {
    if hits.is_empty() {
        return "no matching knowledge".into();
    }
    let mut out = String::new();
    for (i, h) in hits.iter().enumerate() {
        let _ = writeln!(out, "[{}] {} ({} tokens)", i + 1, h.locator, h.token_count);
        out.push_str(h.text.trim_end());
        out.push_str("\n\n");
    }
    out.truncate(out.trim_end().len());
    out
}

pub fn render_web(results: &[WebResult]) -> String {
    if results.is_empty() {
        return "no web results".into();
    }
    results
        .iter()
        .enumerate()
        .map(|(i, r)| format!("[{}] {} <{}>\n{}", i + 1, r.title, r.locator, r.snippet))
        .collect::<Vec<_>>()
        .join("\n\n")
}
