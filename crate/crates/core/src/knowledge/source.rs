use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::KnowledgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    UserManual,
    ApiSdkDoc,
    OfficialRepo,
    PlatformDoc,
    WebResult,
}

impl SourceKind {
    pub const DEVICE: [SourceKind; 3] = [SourceKind::UserManual, SourceKind::ApiSdkDoc, SourceKind::OfficialRepo];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::UserManual => "user_manual",
            SourceKind::ApiSdkDoc => "api_sdk_doc",
            SourceKind::OfficialRepo => "official_repo",
            SourceKind::PlatformDoc => "platform_doc",
            SourceKind::WebResult => "web_result",
        }
    }

    fn query_suffix(self) -> &'static str {
        match self {
            SourceKind::UserManual => "user manual",
            SourceKind::ApiSdkDoc => "API SDK documentation",
            SourceKind::OfficialRepo => "official GitHub repository",
            SourceKind::PlatformDoc => "platform documentation",
            SourceKind::WebResult => "",
        }
    }

    pub fn query_for(self, brand: &str, model: &str) -> String {
        format!("{brand} {model} {}", self.query_suffix()).trim().to_string()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    #[default]
    Prose,
    Code,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub source_kind: SourceKind,
    pub locator: String,
    pub title: String,
    pub content: String,
    pub content_kind: ContentKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebResult {
    pub title: String,
    pub locator: String,
    pub snippet: String,
}

/// Ranked document retrieval for device knowledge and web search.
pub trait SourceFetcher: Send + Sync {
    /// Ranked documents for one device source kind (best first).
    fn fetch(&self, kind: SourceKind, query: &str) -> Result<Vec<SourceDocument>, KnowledgeError>;

    fn web_search(&self, query: &str) -> Result<Vec<WebResult>, KnowledgeError> {
        let _ = query;
        Err(KnowledgeError::Fetch("web search is not available offline".into()))
    }
}

#[derive(Debug, Deserialize)]
struct FixtureEntry {
    title: String,
    locator: String,
    #[serde(default)]
    file: Option<PathBuf>,
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    content_kind: ContentKind,
}

#[derive(Debug, Deserialize)]
struct WebEntry {
    title: String,
    locator: String,
    snippet: String,
    /// Pattern the query must match for this result to be returned.
    #[serde(default, rename = "match")]
    pattern: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct FixtureIndex {
    #[serde(default)]
    user_manual: Vec<FixtureEntry>,
    #[serde(default)]
    api_sdk_doc: Vec<FixtureEntry>,
    #[serde(default)]
    official_repo: Vec<FixtureEntry>,
    #[serde(default)]
    web_result: Vec<WebEntry>,
    #[serde(default)]
    unreachable: Vec<SourceKind>,
}

/// Reads ranked results from a local directory: `sources.toml` lists
/// entries per source kind in rank order, pointing at files beside it.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    root: PathBuf,
    documents: Vec<SourceDocument>,
    web: Vec<(Option<Regex>, WebResult)>,
    unreachable: Vec<SourceKind>,
}

impl FixtureFetcher {
    pub const INDEX_FILE: &'static str = "sources.toml";

    pub fn load(root: &Path) -> Result<Self, KnowledgeError> {
        let index_path = root.join(Self::INDEX_FILE);
        let text = fs::read_to_string(&index_path)
            .map_err(|e| KnowledgeError::Fetch(format!("{}: {e}", index_path.display())))?;
        let index: FixtureIndex = toml::from_str(&text).map_err(|e| KnowledgeError::Fetch(e.to_string()))?;
        let mut documents = Vec::new();
        for (kind, entries) in [
            (SourceKind::UserManual, index.user_manual),
            (SourceKind::ApiSdkDoc, index.api_sdk_doc),
            (SourceKind::OfficialRepo, index.official_repo),
        ] {
            for e in entries {
                let content = match (e.content, e.file) {
                    (Some(c), _) => c,
                    (None, Some(f)) => fs::read_to_string(root.join(&f))
                        .map_err(|err| KnowledgeError::Fetch(format!("{}: {err}", f.display())))?,
                    (None, None) => {
                        return Err(KnowledgeError::Fetch(format!("entry {} has neither file nor content", e.locator)))
                    }
                };
                documents.push(SourceDocument {
                    source_kind: kind,
                    locator: e.locator,
                    title: e.title,
                    content,
                    content_kind: e.content_kind,
                });
            }
        }
        let web = index
            .web_result
            .into_iter()
            .map(|w| {
                let re = w
                    .pattern
                    .as_deref()
                    .map(|p| Regex::new(&format!("(?i){p}")))
                    .transpose()
                    .map_err(|e| KnowledgeError::Fetch(e.to_string()))?;
                Ok((re, WebResult { title: w.title, locator: w.locator, snippet: w.snippet }))
            })
            .collect::<Result<_, KnowledgeError>>()?;
        Ok(Self { root: root.to_path_buf(), documents, web, unreachable: index.unreachable })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl SourceFetcher for FixtureFetcher {
    fn fetch(&self, kind: SourceKind, _query: &str) -> Result<Vec<SourceDocument>, KnowledgeError> {
        if self.unreachable.contains(&kind) {
            return Err(KnowledgeError::Fetch(format!("{} source unreachable", kind.as_str())));
        }
        Ok(self.documents.iter().filter(|d| d.source_kind == kind).cloned().collect())
    }

    fn web_search(&self, query: &str) -> Result<Vec<WebResult>, KnowledgeError> {
        Ok(self
            .web
            .iter()
            .filter(|(re, _)| re.as_ref().is_none_or(|r| r.is_match(query)))
            .map(|(_, w)| w.clone())
            .take(5)
            .collect())
    }
}

/// Case-insensitive substring patterns screened against locators and
/// content before anything is indexed or returned.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageDenylist {
    pub patterns: Vec<String>,
}

impl LeakageDenylist {
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { patterns: patterns.into_iter().map(Into::into).filter(|p: &String| !p.trim().is_empty()).collect() }
    }

    /// One pattern per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let text = fs::read_to_string(path).map_err(|e| KnowledgeError::Fetch(format!("{}: {e}", path.display())))?;
        Ok(Self::parse(&text))
    }

    /// The first pattern hit by any of `fields`, if any.
    pub fn screen(&self, fields: &[&str]) -> Option<&str> {
        let lowered: Vec<String> = fields.iter().map(|f| f.to_lowercase()).collect();
        self.patterns
            .iter()
            .find(|p| {
                let p = p.to_lowercase();
                lowered.iter().any(|f| f.contains(&p))
            })
            .map(String::as_str)
    }
}
