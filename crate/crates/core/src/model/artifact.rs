use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use super::profile::PlatformProfile;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionCause {
    Generated,
    AutoDebugFix,
    HilFix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionRecord {
    pub revision: u64,
    pub cause: RevisionCause,
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<String>,
}

/// Versioned file tree produced by generation and rewritten by the debuggers.
///
/// Files are whole-content entries keyed by a relative path. Every accepted
/// rewrite bumps `revision` by one and appends a provenance record, so the
/// history always holds `revision + 1` records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationArtifact {
    pub artifact_id: String,
    pub revision: u64,
    pub files: BTreeMap<String, String>,
    pub manifest_path: String,
    pub provenance: Vec<RevisionRecord>,
}

impl IntegrationArtifact {
    pub fn new(
        artifact_id: impl Into<String>,
        manifest_path: impl Into<String>,
        files: BTreeMap<String, String>,
        timestamp_ms: u64,
    ) -> Self {
        let paths = files.keys().cloned().collect();
        Self {
            artifact_id: artifact_id.into(),
            revision: 0,
            files,
            manifest_path: manifest_path.into(),
            provenance: vec![RevisionRecord {
                revision: 0,
                cause: RevisionCause::Generated,
                timestamp_ms,
                paths,
            }],
        }
    }

    pub fn manifest(&self) -> Option<&str> {
        self.files.get(&self.manifest_path).map(String::as_str)
    }

    /// Applies whole-file rewrites, returning the next revision.
    ///
    /// The rewrite is rejected (and `self` left untouched) when any path is
    /// malformed or the resulting tree violates the profile's layout rules.
    pub fn apply_rewrite(
        &self,
        rewrites: &BTreeMap<String, String>,
        cause: RevisionCause,
        timestamp_ms: u64,
        profile: &PlatformProfile,
    ) -> Result<IntegrationArtifact, LayoutReport> {
        if rewrites.is_empty() {
            return Err(LayoutReport {
                violations: vec![Violation::EmptyRewrite],
            });
        }
        let escapes: Vec<Violation> = rewrites
            .keys()
            .filter(|p| !is_safe_relative_path(p))
            .map(|p| Violation::PathEscape(p.clone()))
            .collect();
        if !escapes.is_empty() {
            return Err(LayoutReport { violations: escapes });
        }
        let mut next = self.clone();
        for (path, content) in rewrites {
            next.files.insert(path.clone(), content.clone());
        }
        let report = validate_artifact_layout(&next, profile);
        if !report.is_valid() {
            return Err(report);
        }
        next.revision += 1;
        next.provenance.push(RevisionRecord {
            revision: next.revision,
            cause,
            timestamp_ms,
            paths: rewrites.keys().cloned().collect(),
        });
        Ok(next)
    }

    /// Writes every file under `dir`, byte for byte.
    pub fn export(&self, dir: &Path) -> Result<(), ModelError> {
        for (rel, content) in &self.files {
            if !is_safe_relative_path(rel) {
                return Err(ModelError::InvalidInput(format!("refusing to export unsafe path {rel}")));
            }
            let target = dir.join(rel);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&target, content.as_bytes())?;
        }
        Ok(())
    }

    /// Reads a directory tree back into an artifact at revision 0.
    pub fn import(
        artifact_id: impl Into<String>,
        dir: &Path,
        manifest_path: &str,
        timestamp_ms: u64,
    ) -> Result<Self, ModelError> {
        let mut files = BTreeMap::new();
        collect_files(dir, dir, &mut files)?;
        Ok(Self::new(artifact_id, manifest_path, files, timestamp_ms))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), ModelError> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            if entry.file_name() == "__pycache__" {
                continue;
            }
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .map_err(|e| ModelError::InvalidInput(e.to_string()))?;
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            out.insert(rel, fs::read_to_string(&path)?);
        }
    }
    Ok(())
}

/// True for non-empty relative paths without `..`, root, or prefix components.
pub fn is_safe_relative_path(path: &str) -> bool {
    if path.is_empty() || path.starts_with('/') || path.starts_with('\\') || path.contains('\\') {
        return false;
    }
    if path.split('/').any(|seg| seg.is_empty()) {
        return false;
    }
    Path::new(path)
        .components()
        .all(|c| matches!(c, Component::Normal(_)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", content = "detail", rename_all = "snake_case")]
pub enum Violation {
    EmptyArtifact,
    EmptyRewrite,
    ManifestMissing,
    ManifestUnparseable(String),
    MissingManifestKey(String),
    PathEscape(String),
    UnmatchedFile(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyArtifact => f.write_str("artifact has no files"),
            Violation::EmptyRewrite => f.write_str("rewrite contains no files"),
            Violation::ManifestMissing => f.write_str("manifest missing"),
            Violation::ManifestUnparseable(e) => write!(f, "manifest unparseable: {e}"),
            Violation::MissingManifestKey(k) => write!(f, "manifest key missing: {k}"),
            Violation::PathEscape(p) => write!(f, "path escape: {p}"),
            Violation::UnmatchedFile(p) => write!(f, "file matches no layout rule: {p}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutReport {
    pub violations: Vec<Violation>,
}

impl LayoutReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for LayoutReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("layout valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks an artifact against a platform's declarative layout rules.
///
/// Violations are returned as data. Order is deterministic: path problems
/// first (in path order), then manifest problems, then unmatched files.
pub fn validate_artifact_layout(artifact: &IntegrationArtifact, profile: &PlatformProfile) -> LayoutReport {
    let mut violations = Vec::new();
    if artifact.files.is_empty() {
        violations.push(Violation::EmptyArtifact);
        return LayoutReport { violations };
    }
    for path in artifact.files.keys() {
        if !is_safe_relative_path(path) {
            violations.push(Violation::PathEscape(path.clone()));
        }
    }
    match artifact.manifest() {
        None => violations.push(Violation::ManifestMissing),
        Some(text) => match serde_json::from_str::<serde_json::Value>(text) {
            Ok(serde_json::Value::Object(map)) => {
                for key in &profile.layout.required_manifest_keys {
                    if !map.contains_key(key) {
                        violations.push(Violation::MissingManifestKey(key.clone()));
                    }
                }
            }
            Ok(_) => violations.push(Violation::ManifestUnparseable("manifest is not an object".into())),
            Err(e) => violations.push(Violation::ManifestUnparseable(e.to_string())),
        },
    }
    let rules = profile.layout.compiled_rules();
    for path in artifact.files.keys() {
        if path == &artifact.manifest_path || !is_safe_relative_path(path) {
            continue;
        }
        if !rules.iter().any(|r| r.is_match(path)) {
            violations.push(Violation::UnmatchedFile(path.clone()));
        }
    }
    LayoutReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::profile::tests::sample_profile;

    fn artifact(files: &[(&str, &str)]) -> IntegrationArtifact {
        IntegrationArtifact::new(
            "a1",
            "manifest.json",
            files.iter().map(|(p, c)| (p.to_string(), c.to_string())).collect(),
            0,
        )
    }

    const MANIFEST: &str = r#"{"domain": "thermo", "name": "Thermo", "version": "0.1.0", "platforms": ["sensor"]}"#;

    #[test]
    fn well_formed_artifact_is_valid() {
        let a = artifact(&[("manifest.json", MANIFEST), ("sensor.py", "class S: pass\n")]);
        let report = validate_artifact_layout(&a, &sample_profile());
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn missing_manifest_is_one_violation() {
        let a = artifact(&[("sensor.py", "x = 1\n")]);
        let report = validate_artifact_layout(&a, &sample_profile());
        assert_eq!(report.violations, vec![Violation::ManifestMissing]);
        assert_eq!(report.violations[0].to_string(), "manifest missing");
    }

    #[test]
    fn parent_escape_is_flagged() {
        let a = artifact(&[("manifest.json", MANIFEST), ("../escape", "boom")]);
        let report = validate_artifact_layout(&a, &sample_profile());
        assert_eq!(report.violations, vec![Violation::PathEscape("../escape".into())]);
        assert!(report.violations[0].to_string().starts_with("path escape"));
    }

    #[test]
    fn manifest_keys_and_unmatched_files() {
        let a = artifact(&[("manifest.json", r#"{"domain": "thermo"}"#), ("notes.txt", "hi")]);
        let report = validate_artifact_layout(&a, &sample_profile());
        assert!(report.violations.contains(&Violation::MissingManifestKey("name".into())));
        assert!(report.violations.contains(&Violation::UnmatchedFile("notes.txt".into())));
        let bad = artifact(&[("manifest.json", "{not json")]);
        assert!(matches!(
            validate_artifact_layout(&bad, &sample_profile()).violations[0],
            Violation::ManifestUnparseable(_)
        ));
    }

    #[test]
    fn safe_path_rules() {
        for ok in ["a.py", "sub/b.py", "translations/en.json"] {
            assert!(is_safe_relative_path(ok), "{ok}");
        }
        for bad in ["", "/etc/passwd", "../x", "a/../../x", "a//b", "./a", "a\\b"] {
            assert!(!is_safe_relative_path(bad), "{bad}");
        }
    }

    #[test]
    fn rewrite_bumps_revision_and_history() {
        let profile = sample_profile();
        let a = artifact(&[("manifest.json", MANIFEST), ("sensor.py", "v1\n")]);
        let mut rw = BTreeMap::new();
        rw.insert("sensor.py".to_string(), "v2\n".to_string());
        let b = a.apply_rewrite(&rw, RevisionCause::AutoDebugFix, 5, &profile).unwrap();
        assert_eq!(b.revision, 1);
        assert_eq!(b.files["sensor.py"], "v2\n");
        assert_eq!(b.provenance.len() as u64, b.revision + 1);
        assert_eq!(b.provenance[1].cause, RevisionCause::AutoDebugFix);

        let mut escape = BTreeMap::new();
        escape.insert("../evil.py".to_string(), "x".to_string());
        let err = b.apply_rewrite(&escape, RevisionCause::AutoDebugFix, 6, &profile).unwrap_err();
        assert_eq!(err.violations, vec![Violation::PathEscape("../evil.py".into())]);

        let mut added = BTreeMap::new();
        added.insert("switch.py".to_string(), "class Sw: pass\n".to_string());
        let c = b.apply_rewrite(&added, RevisionCause::HilFix, 7, &profile).unwrap();
        assert_eq!(c.revision, 2);
        assert_eq!(c.files.len(), 3);
    }

    #[test]
    fn export_import_is_byte_exact() {
        let a = artifact(&[("manifest.json", MANIFEST), ("sub/x.py", "é\r\nline\n")]);
        let dir = tempfile::tempdir().unwrap();
        a.export(dir.path()).unwrap();
        let b = IntegrationArtifact::import("a1", dir.path(), "manifest.json", 0).unwrap();
        assert_eq!(a.files, b.files);
    }

    proptest::proptest! {
        #[test]
        fn validation_is_deterministic(names in proptest::collection::vec("[a-z./]{1,12}", 0..6)) {
            let profile = sample_profile();
            let mut files: BTreeMap<String, String> = names.into_iter().map(|n| (n, String::new())).collect();
            files.insert("manifest.json".into(), MANIFEST.into());
            let a = IntegrationArtifact::new("p", "manifest.json", files, 0);
            let r1 = validate_artifact_layout(&a, &profile);
            let r2 = validate_artifact_layout(&a, &profile);
            proptest::prop_assert_eq!(r1, r2);
        }
    }
}
