use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ModelBundle, PipelineError, SCHEMA_VERSION};
use crate::corpus::Backlog;

/// Project store on disk: `<root>/projects/<id>/bundle-v<N>.json`, plus the
/// normalized backlog at `<root>/projects/<id>/backlog.json`.
#[derive(Debug, Clone)]
pub struct BundleStore {
    root: PathBuf,
}

pub fn validate_project_id(id: &str) -> Result<(), PipelineError> {
    let valid = !id.is_empty()
        && id.len() <= 128
        && id.chars().next().is_some_and(|c| c.is_ascii_alphanumeric())
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.contains("..");
    if valid {
        Ok(())
    } else {
        Err(PipelineError::InvalidProjectId(id.to_owned()))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::StoreIo { path: path.to_owned(), source }
}

impl BundleStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_dir(&self, project_id: &str) -> Result<PathBuf, PipelineError> {
        validate_project_id(project_id)?;
        Ok(self.root.join("projects").join(project_id))
    }

    fn bundle_path(&self, project_id: &str, version: u64) -> Result<PathBuf, PipelineError> {
        Ok(self.project_dir(project_id)?.join(format!("bundle-v{version}.json")))
    }

    /// Stored bundle versions of a project, ascending.
    pub fn versions(&self, project_id: &str) -> Result<Vec<u64>, PipelineError> {
        let dir = self.project_dir(project_id)?;
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut versions: Vec<u64> = entries
            .filter_map(Result::ok)
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_prefix("bundle-v")?.strip_suffix(".json")?.parse().ok()
            })
            .collect();
        versions.sort_unstable();
        Ok(versions)
    }

    pub fn latest_version(&self, project_id: &str) -> Result<Option<u64>, PipelineError> {
        Ok(self.versions(project_id)?.last().copied())
    }

    pub fn next_version(&self, project_id: &str) -> Result<u64, PipelineError> {
        Ok(self.latest_version(project_id)?.map_or(1, |v| v + 1))
    }

    /// Projects that have at least one stored bundle.
    pub fn projects(&self) -> Result<Vec<String>, PipelineError> {
        let dir = self.root.join("projects");
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut out = Vec::new();
        for entry in entries.filter_map(Result::ok) {
            if let Ok(name) = entry.file_name().into_string() {
                if validate_project_id(&name).is_ok() && !self.versions(&name)?.is_empty() {
                    out.push(name);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    fn write_atomic(&self, dir: &Path, path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(bytes).map_err(io_err(path))?;
        tmp.as_file().sync_all().map_err(io_err(path))?;
        tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
        Ok(())
    }

    /// Writes `bundle` under its own version.
    pub fn save(&self, bundle: &ModelBundle) -> Result<PathBuf, PipelineError> {
        let dir = self.project_dir(&bundle.project_id)?;
        let path = self.bundle_path(&bundle.project_id, bundle.bundle_version)?;
        let bytes = serde_json::to_vec(bundle).map_err(|e| PipelineError::CorruptBundle {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        self.write_atomic(&dir, &path, &bytes)?;
        Ok(path)
    }

    /// Assigns the next free version to `bundle`, then saves it.
    pub fn save_next(&self, bundle: &mut ModelBundle) -> Result<u64, PipelineError> {
        bundle.bundle_version = self.next_version(&bundle.project_id)?;
        self.save(bundle)?;
        Ok(bundle.bundle_version)
    }

    /// Loads the highest stored version.
    pub fn load(&self, project_id: &str) -> Result<ModelBundle, PipelineError> {
        let version = self
            .latest_version(project_id)?
            .ok_or_else(|| PipelineError::BundleMissing(project_id.to_owned()))?;
        self.load_version(project_id, version)
    }

    pub fn load_version(&self, project_id: &str, version: u64) -> Result<ModelBundle, PipelineError> {
        let path = self.bundle_path(project_id, version)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(PipelineError::BundleMissing(project_id.to_owned()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let corrupt = |reason: String| PipelineError::CorruptBundle { path: path.clone(), reason };
        let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(corrupt(format!("unsupported schema_version {v}"))),
            None => return Err(corrupt("missing schema_version".into())),
        }
        let bundle: ModelBundle = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        if bundle.project_id != project_id || bundle.bundle_version != version {
            return Err(corrupt(format!(
                "file holds project `{}` v{}",
                bundle.project_id, bundle.bundle_version
            )));
        }
        Ok(bundle)
    }

    pub fn save_backlog(&self, backlog: &Backlog) -> Result<PathBuf, PipelineError> {
        let dir = self.project_dir(&backlog.project_id)?;
        let path = dir.join("backlog.json");
        let bytes = serde_json::to_vec_pretty(backlog).expect("backlog serializes");
        self.write_atomic(&dir, &path, &bytes)?;
        Ok(path)
    }

    pub fn load_backlog(&self, project_id: &str) -> Result<Option<Backlog>, PipelineError> {
        let path = self.project_dir(project_id)?.join("backlog.json");
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| PipelineError::CorruptBundle { path, reason: e.to_string() }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}
