//! The whole project, persisted as one `project.json`.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{ViolationNode, ViolationReport};
use crate::pipeline::PipelineRun;
use crate::registry::ContractRecord;
use crate::testgen::{TestCase, TestPlan};
use crate::trace::{CodeUnit, Intent, Task, TraceLink};

pub const SCHEMA_VERSION: u32 = 1;
pub const PROJECT_FILE: &str = "project.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub schema_version: u32,
    #[serde(default)]
    pub intents: Vec<Intent>,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub contracts: Vec<ContractRecord>,
    #[serde(default)]
    pub code_units: Vec<CodeUnit>,
    #[serde(default)]
    pub test_cases: Vec<TestCase>,
    #[serde(default)]
    pub test_plans: Vec<TestPlan>,
    /// One node per failing (clause, case) pair.
    #[serde(default)]
    pub violations: Vec<ViolationNode>,
    #[serde(default)]
    pub reports: Vec<ViolationReport>,
    #[serde(default)]
    pub links: Vec<TraceLink>,
    #[serde(default)]
    pub runs: Vec<PipelineRun>,
    /// Keys written by other tools; kept as-is on rewrite.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Default for Project {
    fn default() -> Self {
        Project {
            schema_version: SCHEMA_VERSION,
            intents: Vec::new(),
            tasks: Vec::new(),
            contracts: Vec::new(),
            code_units: Vec::new(),
            test_cases: Vec::new(),
            test_plans: Vec::new(),
            violations: Vec::new(),
            reports: Vec::new(),
            links: Vec::new(),
            runs: Vec::new(),
            extra: serde_json::Map::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("no project at {0} (run `contractflow init`)")]
    Missing(PathBuf),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a valid project file: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} has schema version {found}, this build reads {SCHEMA_VERSION}")]
    SchemaVersion { path: PathBuf, found: u32 },
    #[error("project already exists at {0}")]
    Exists(PathBuf),
}

impl Project {
    pub fn file_path(dir: &Path) -> PathBuf {
        dir.join(PROJECT_FILE)
    }

    pub fn load(dir: &Path) -> Result<Project, ProjectError> {
        let path = Self::file_path(dir);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ProjectError::Missing(path)),
            Err(source) => return Err(ProjectError::Read { path, source }),
        };
        let project: Project =
            serde_json::from_str(&text).map_err(|source| ProjectError::Corrupt { path: path.clone(), source })?;
        if project.schema_version != SCHEMA_VERSION {
            return Err(ProjectError::SchemaVersion { path, found: project.schema_version });
        }
        Ok(project)
    }

    /// Writes to a temp file in the same directory, syncs, then renames over
    /// the old file, so readers see either the old or the new project.
    pub fn save(&self, dir: &Path) -> Result<(), ProjectError> {
        let path = Self::file_path(dir);
        let tmp = dir.join(format!(".{PROJECT_FILE}.{}.tmp", std::process::id()));
        let wrap = |source| ProjectError::Write { path: path.clone(), source };
        let mut json = serde_json::to_vec_pretty(self).expect("project serializes");
        json.push(b'\n');
        let mut file = File::create(&tmp).map_err(wrap)?;
        file.write_all(&json).map_err(wrap)?;
        file.sync_all().map_err(wrap)?;
        drop(file);
        fs::rename(&tmp, &path).map_err(wrap)?;
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    /// Creates `dir` with an empty project. Fails if one is already there.
    pub fn init(dir: &Path) -> Result<Project, ProjectError> {
        let path = Self::file_path(dir);
        if path.exists() {
            return Err(ProjectError::Exists(path));
        }
        fs::create_dir_all(dir).map_err(|source| ProjectError::Write { path: dir.to_path_buf(), source })?;
        let project = Project::default();
        project.save(dir)?;
        Ok(project)
    }
}
