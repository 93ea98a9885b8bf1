use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, RunConfig, TOOL_VERSION};
use crate::seed::sha256_hex;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(PipelineError::io(path, e));
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Config snapshot, artifact checksums and stage timings of the runs in one
/// output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub artifacts: BTreeMap<String, ArtifactEntry>,
    pub stages: Vec<StageTiming>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::BadArtifact { path: path.to_path_buf(), reason: e.to_string() })
    }

    /// Checks every recorded checksum against the file on disk.
    pub fn verify(&self) -> Result<(), PipelineError> {
        for (name, entry) in &self.artifacts {
            let actual = sha256_file(&entry.path)?;
            if actual != entry.sha256 {
                return Err(PipelineError::Assertion(format!(
                    "artifact `{name}` ({}) has checksum {actual}, manifest says {}",
                    entry.path.display(),
                    entry.sha256
                )));
            }
        }
        Ok(())
    }
}

/// Writes artifacts and keeps the manifest in step with them.
pub(crate) struct Recorder<'a> {
    config: &'a RunConfig,
    manifest: Manifest,
}

impl<'a> Recorder<'a> {
    /// Starts from the existing manifest in `out_dir`, if readable.
    pub fn open(config: &'a RunConfig) -> Self {
        let path = config.resolve(&config.paths.manifest);
        let mut manifest = Manifest::load(&path).unwrap_or_else(|_| Manifest {
            tool_version: TOOL_VERSION.to_string(),
            config: config.clone(),
            artifacts: BTreeMap::new(),
            stages: Vec::new(),
        });
        manifest.tool_version = TOOL_VERSION.to_string();
        manifest.config = config.clone();
        Recorder { config, manifest }
    }

    pub fn write(&mut self, name: &str, path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
        atomic_write(path, bytes)?;
        self.manifest.artifacts.insert(
            name.to_string(),
            ArtifactEntry { path: path.to_path_buf(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 },
        );
        Ok(())
    }

    pub fn stage(&mut self, stage: &str, seconds: f64) {
        self.manifest.stages.push(StageTiming { stage: stage.to_string(), seconds });
    }

    pub fn finish(self) -> Result<Manifest, PipelineError> {
        let path = self.config.resolve(&self.config.paths.manifest);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        atomic_write(&path, text.as_bytes())?;
        Ok(self.manifest)
    }
}
