use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::chunk::{chunk_text, ChunkingConfig};
use super::embed::{Embedder, HashingEmbedder};
use super::index::{ChunkId, VectorIndex};
use super::source::{ContentKind, LeakageDenylist, SourceFetcher, SourceKind};
use super::KnowledgeError;
use crate::llm::count_tokens;
use crate::model::{IntegrationTask, PlatformProfile};

/// Device sources retained per source kind.
pub const TOP_SOURCES_PER_KIND: usize = 5;

/// The prose and code embedders a store is built with.
#[derive(Clone)]
pub struct Embedders {
    pub prose: Arc<dyn Embedder>,
    pub code: Arc<dyn Embedder>,
}

impl Embedders {
    pub fn offline() -> Self {
        Self { prose: Arc::new(HashingEmbedder::prose()), code: Arc::new(HashingEmbedder::code()) }
    }

    pub fn for_kind(&self, kind: ContentKind) -> &Arc<dyn Embedder> {
        match kind {
            ContentKind::Prose => &self.prose,
            ContentKind::Code => &self.code,
        }
    }
}

impl std::fmt::Debug for Embedders {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedders")
            .field("prose", &self.prose.id())
            .field("code", &self.code.id())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: ChunkId,
    pub content_kind: ContentKind,
    pub text: String,
    pub locator: String,
    pub token_count: u64,
    pub distance: f32,
}

/// One knowledge store: a prose sub-index and a code sub-index, each with
/// its own embedding space.
#[derive(Debug, Clone)]
pub struct KnowledgeStore {
    name: String,
    prose: VectorIndex,
    code: VectorIndex,
    embedders: Embedders,
}

impl KnowledgeStore {
    pub fn empty(name: impl Into<String>, embedders: Embedders) -> Result<Self, KnowledgeError> {
        Ok(Self {
            name: name.into(),
            prose: VectorIndex::new(embedders.prose.dimension())?,
            code: VectorIndex::new(embedders.code.dimension())?,
            embedders,
        })
    }

    pub(crate) fn from_parts(name: String, prose: VectorIndex, code: VectorIndex, embedders: Embedders) -> Self {
        Self { name, prose, code, embedders }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn index(&self, kind: ContentKind) -> &VectorIndex {
        match kind {
            ContentKind::Prose => &self.prose,
            ContentKind::Code => &self.code,
        }
    }

    pub fn embedders(&self) -> &Embedders {
        &self.embedders
    }

    pub fn len(&self) -> usize {
        self.prose.len() + self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Chunks `text` and adds each piece to the sub-index for `kind`.
    pub fn add_text(&mut self, locator: &str, text: &str, kind: ContentKind, chunking: ChunkingConfig) -> Result<usize, KnowledgeError> {
        let embedder = self.embedders.for_kind(kind).clone();
        let index = match kind {
            ContentKind::Prose => &mut self.prose,
            ContentKind::Code => &mut self.code,
        };
        let mut added = 0;
        for piece in chunk_text(text, chunking) {
            let tokens = count_tokens(&piece);
            let embedding = embedder.embed(&piece)?;
            index.push(locator.to_string(), piece, embedding, tokens)?;
            added += 1;
        }
        Ok(added)
    }

    pub fn search(&self, query: &str, k: usize, kind: ContentKind) -> Result<Vec<SearchHit>, KnowledgeError> {
        let index = self.index(kind);
        let q = self.embedders.for_kind(kind).embed(query)?;
        let hits = index.knn(&q, k)?;
        Ok(hits
            .into_iter()
            .filter_map(|(id, distance)| {
                index.get(id).map(|c| SearchHit {
                    chunk_id: id,
                    content_kind: kind,
                    text: c.text.clone(),
                    locator: c.parent_locator.clone(),
                    token_count: c.token_count,
                    distance,
                })
            })
            .collect())
    }

    /// Every chunk text in both sub-indexes.
    pub fn all_text(&self) -> impl Iterator<Item = (&str, &str)> {
        self.prose
            .chunks()
            .iter()
            .chain(self.code.chunks())
            .map(|c| (c.parent_locator.as_str(), c.text.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub locator: String,
    pub pattern: String,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub store: KnowledgeStore,
    pub ingested: Vec<String>,
    pub exclusions: Vec<Exclusion>,
    pub warnings: Vec<String>,
}

/// Builds the device store from user manuals, API/SDK docs, and official
/// repositories: the top five results per kind are kept, then screened
/// against the denylist.
pub fn ingest_device_sources(
    task: &IntegrationTask,
    fetcher: &dyn SourceFetcher,
    denylist: &LeakageDenylist,
    embedders: &Embedders,
    chunking: ChunkingConfig,
) -> Result<IngestReport, KnowledgeError> {
    let mut store = KnowledgeStore::empty("device", embedders.clone())?;
    let mut ingested = Vec::new();
    let mut exclusions = Vec::new();
    let mut warnings = Vec::new();
    let mut failed = Vec::new();
    let mut seen = BTreeSet::new();

    for kind in SourceKind::DEVICE {
        let query = kind.query_for(&task.device_brand, &task.device_model);
        let docs = match fetcher.fetch(kind, &query) {
            Ok(d) => d,
            Err(e) => {
                failed.push(format!("{} ({e})", kind.as_str()));
                continue;
            }
        };
        for doc in docs.into_iter().take(TOP_SOURCES_PER_KIND) {
            if let Some(p) = denylist.screen(&[&doc.locator, &doc.content]) {
                tracing::info!(locator = %doc.locator, pattern = p, "excluded by leakage screen");
                exclusions.push(Exclusion { locator: doc.locator, pattern: p.to_string() });
                continue;
            }
            if doc.content.trim().is_empty() {
                warnings.push(format!("{} has no content", doc.locator));
                continue;
            }
            if !seen.insert(doc.locator.clone()) {
                continue;
            }
            store.add_text(&doc.locator, &doc.content, doc.content_kind, chunking)?;
            ingested.push(doc.locator);
        }
    }
    if !failed.is_empty() {
        return Err(KnowledgeError::Ingestion(failed.join(", ")));
    }
    if store.is_empty() {
        tracing::warn!("device knowledge is empty");
        warnings.push("no device documents survived ingestion; device knowledge is empty".into());
    }
    Ok(IngestReport { store, ingested, exclusions, warnings })
}

/// A table-of-contents node. Leaves carry content, sections carry children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TocNode {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default)]
    pub content_kind: ContentKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TocNode>,
}

impl TocNode {
    pub fn leaf(title: impl Into<String>, content: impl Into<String>) -> Self {
        Self { title: title.into(), content: Some(content.into()), content_kind: ContentKind::Prose, children: Vec::new() }
    }

    pub fn section(title: impl Into<String>, children: Vec<TocNode>) -> Self {
        Self { title: title.into(), content: None, content_kind: ContentKind::Prose, children }
    }

    fn walk<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a TocNode)>) {
        let path = if prefix.is_empty() { self.title.clone() } else { format!("{prefix} / {}", self.title) };
        if self.children.is_empty() {
            out.push((path, self));
        } else {
            for c in &self.children {
                c.walk(&path, out);
            }
        }
    }
}

/// Flattens a ToC forest into (path, leaf) pairs in document order.
pub fn toc_leaves(toc: &[TocNode]) -> Vec<(String, &TocNode)> {
    let mut out = Vec::new();
    for n in toc {
        n.walk("", &mut out);
    }
    out
}

const CODE_EXTENSIONS: &[&str] = &["py", "rs", "js", "ts", "java", "c", "cpp", "go", "yaml"];

fn display_title(name: &str) -> String {
    let stem = name.rsplit_once('.').map(|(s, _)| s).unwrap_or(name);
    let trimmed = stem.trim_start_matches(|c: char| c.is_ascii_digit());
    let trimmed = trimmed.strip_prefix(['-', '_']).unwrap_or(trimmed);
    let base = if trimmed.is_empty() { stem } else { trimmed };
    base.replace(['_', '-'], " ")
}

/// Reads a ToC from a directory tree: directories are sections, files are
/// leaves, ordered by file name (numeric prefixes like `01-` set order and
/// are dropped from titles).
pub fn load_toc_dir(dir: &Path) -> Result<Vec<TocNode>, KnowledgeError> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| KnowledgeError::InvalidInput(format!("{}: {e}", dir.display())))?
        .collect::<Result<_, _>>()
        .map_err(|e| KnowledgeError::InvalidInput(e.to_string()))?;
    entries.sort_by_key(|e| e.file_name());
    let mut nodes = Vec::new();
    for entry in entries {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        let path = entry.path();
        if path.is_dir() {
            nodes.push(TocNode::section(display_title(&name), load_toc_dir(&path)?));
        } else {
            let content = fs::read_to_string(&path).map_err(|e| KnowledgeError::InvalidInput(e.to_string()))?;
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            let kind = if CODE_EXTENSIONS.contains(&ext) { ContentKind::Code } else { ContentKind::Prose };
            nodes.push(TocNode { title: display_title(&name), content: Some(content), content_kind: kind, children: Vec::new() });
        }
    }
    Ok(nodes)
}

/// Builds the platform store with one chunk per ToC leaf (long leaves are
/// split, all pieces sharing the leaf's ToC path as parent locator).
pub fn ingest_platform_docs(
    profile: &PlatformProfile,
    toc: &[TocNode],
    denylist: &LeakageDenylist,
    embedders: &Embedders,
    chunking: ChunkingConfig,
) -> Result<IngestReport, KnowledgeError> {
    let leaves = toc_leaves(toc);
    if leaves.is_empty() {
        return Err(KnowledgeError::EmptyPlatformKnowledge(profile.platform_id.clone()));
    }
    let mut store = KnowledgeStore::empty("platform", embedders.clone())?;
    let mut ingested = Vec::new();
    let mut exclusions = Vec::new();
    for (path, leaf) in leaves {
        let content = leaf.content.as_deref().unwrap_or("");
        if content.trim().is_empty() {
            return Err(KnowledgeError::InvalidInput(format!("ToC leaf {path:?} has no content")));
        }
        if let Some(p) = denylist.screen(&[&path, content]) {
            exclusions.push(Exclusion { locator: path, pattern: p.to_string() });
            continue;
        }
        store.add_text(&path, content, leaf.content_kind, chunking)?;
        ingested.push(path);
    }
    if store.is_empty() {
        return Err(KnowledgeError::EmptyPlatformKnowledge(profile.platform_id.clone()));
    }
    Ok(IngestReport { store, ingested, exclusions, warnings: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::source::SourceDocument;

    struct CountingFetcher {
        manuals: usize,
        denied_locator: Option<String>,
        fail: Option<SourceKind>,
    }

    impl SourceFetcher for CountingFetcher {
        fn fetch(&self, kind: SourceKind, _q: &str) -> Result<Vec<SourceDocument>, KnowledgeError> {
            if self.fail == Some(kind) {
                return Err(KnowledgeError::Fetch("down".into()));
            }
            let n = if kind == SourceKind::UserManual { self.manuals } else { 0 };
            Ok((0..n)
                .map(|i| {
                    let locator = match (&self.denied_locator, i) {
                        (Some(l), 0) => l.clone(),
                        _ => format!("https://example.com/manual/{i}"),
                    };
                    SourceDocument {
                        source_kind: kind,
                        locator,
                        title: format!("manual {i}"),
                        content: format!("manual number {i} describes the fan\n"),
                        content_kind: ContentKind::Prose,
                    }
                })
                .collect())
        }
    }

    fn task() -> IntegrationTask {
        IntegrationTask::new("Dyson", "TP07", "toyhome").unwrap()
    }

    #[test]
    fn keeps_top_five_per_kind() {
        let f = CountingFetcher { manuals: 8, denied_locator: None, fail: None };
        let r = ingest_device_sources(&task(), &f, &LeakageDenylist::default(), &Embedders::offline(), ChunkingConfig::default()).unwrap();
        assert_eq!(r.ingested.len(), 5);
        assert_eq!(r.ingested[4], "https://example.com/manual/4");
        assert_eq!(r.store.len(), 5);
    }

    #[test]
    fn empty_sources_warn() {
        let f = CountingFetcher { manuals: 0, denied_locator: None, fail: None };
        let r = ingest_device_sources(&task(), &f, &LeakageDenylist::default(), &Embedders::offline(), ChunkingConfig::default()).unwrap();
        assert!(r.store.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn denylisted_document_excluded() {
        let f = CountingFetcher {
            manuals: 3,
            denied_locator: Some("https://github.com/home/core/official_integration/dyson/fan.py".into()),
            fail: None,
        };
        let deny = LeakageDenylist::new(["official_integration/dyson"]);
        let r = ingest_device_sources(&task(), &f, &deny, &Embedders::offline(), ChunkingConfig::default()).unwrap();
        assert_eq!(r.exclusions.len(), 1);
        assert_eq!(r.ingested.len(), 2);
        assert!(r.store.all_text().all(|(loc, _)| !loc.contains("official_integration")));
    }

    #[test]
    fn unreachable_fetcher_names_kind() {
        let f = CountingFetcher { manuals: 1, denied_locator: None, fail: Some(SourceKind::ApiSdkDoc) };
        let err = ingest_device_sources(&task(), &f, &LeakageDenylist::default(), &Embedders::offline(), ChunkingConfig::default())
            .unwrap_err();
        assert!(matches!(&err, KnowledgeError::Ingestion(m) if m.contains("api_sdk_doc")), "{err}");
    }

    fn profile() -> PlatformProfile {
        toml::from_str(
            r#"
platform_id = "toyhome"
doc_root = "docs"
entity_kinds = ["sensor"]
[layout]
manifest_path = "manifest.json"
[sandbox]
command = ["true"]
[tests]
registration = "r"
service_invocation = "s"
config_entry = "c"
functionality = "f"
actuation = "a"
"#,
        )
        .unwrap()
    }

    #[test]
    fn one_chunk_per_leaf_with_toc_paths() {
        let toc = vec![
            TocNode::section(
                "Entities",
                vec![TocNode::leaf("Sensor", "SensorEntity exposes native_value"), TocNode::leaf("Switch", "SwitchEntity has turn_on")],
            ),
            TocNode::leaf("Manifest", "manifest.json must declare domain"),
        ];
        let r = ingest_platform_docs(&profile(), &toc, &LeakageDenylist::default(), &Embedders::offline(), ChunkingConfig::default()).unwrap();
        assert_eq!(r.store.len(), 3);
        let locs: BTreeSet<&str> = r.store.all_text().map(|(l, _)| l).collect();
        assert_eq!(locs, BTreeSet::from(["Entities / Sensor", "Entities / Switch", "Manifest"]));
    }

    #[test]
    fn empty_toc_is_an_error() {
        let err = ingest_platform_docs(&profile(), &[], &LeakageDenylist::default(), &Embedders::offline(), ChunkingConfig::default());
        assert!(matches!(err, Err(KnowledgeError::EmptyPlatformKnowledge(_))));
    }

    #[test]
    fn long_leaf_splits_under_one_locator() {
        let text: String = (0..5000).map(|i| format!("w{i}\n")).collect();
        let toc = vec![TocNode::leaf("Big", text)];
        let r = ingest_platform_docs(&profile(), &toc, &LeakageDenylist::default(), &Embedders::offline(), ChunkingConfig::default()).unwrap();
        assert_eq!(r.store.len(), 23);
        assert!(r.store.all_text().all(|(l, _)| l == "Big"));
    }

    #[test]
    fn exact_text_query_ranks_first() {
        let mut store = KnowledgeStore::empty("t", Embedders::offline()).unwrap();
        for (i, t) in ["fan speed levels one to ten", "night mode dims the display", "filter life in hours"].iter().enumerate() {
            store.add_text(&format!("doc{i}"), t, ContentKind::Prose, ChunkingConfig::default()).unwrap();
        }
        let hits = store.search("night mode dims the display", 2, ContentKind::Prose).unwrap();
        assert_eq!(hits[0].text, "night mode dims the display");
        assert_eq!(hits[0].distance, 0.0);
        let all = store.search("anything", 10, ContentKind::Prose).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn toc_dir_titles_and_kinds() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("02-entities")).unwrap();
        fs::write(dir.path().join("01-overview.md"), "overview").unwrap();
        fs::write(dir.path().join("02-entities/01-sensor_entity.md"), "sensor").unwrap();
        fs::write(dir.path().join("02-entities/02-example.py"), "class X: pass").unwrap();
        let toc = load_toc_dir(dir.path()).unwrap();
        let leaves = toc_leaves(&toc);
        let paths: Vec<&str> = leaves.iter().map(|(p, _)| p.as_str()).collect();
        assert_eq!(paths, vec!["overview", "entities / sensor entity", "entities / example"]);
        assert_eq!(leaves[2].1.content_kind, ContentKind::Code);
    }
}
