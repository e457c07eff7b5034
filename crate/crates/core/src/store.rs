//! Single-writer access to a project directory.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use thiserror::Error;

use crate::project::{Project, ProjectError};

pub const LOCK_FILE: &str = ".contractflow.lock";

/// Mutations are applied to a copy, persisted atomically, then published.
/// A failed mutation or failed save leaves both disk and memory untouched.
pub struct Store {
    dir: PathBuf,
    state: RwLock<Project>,
    writer: Mutex<()>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Store, ProjectError> {
        let dir = dir.into();
        let project = Project::load(&dir)?;
        Ok(Store { dir, state: RwLock::new(project), writer: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn read<T>(&self, f: impl FnOnce(&Project) -> T) -> T {
        f(&self.state.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn snapshot(&self) -> Project {
        self.read(Project::clone)
    }

    pub fn write<T, E>(&self, f: impl FnOnce(&mut Project) -> Result<T, E>) -> Result<T, E>
    where
        E: From<ProjectError>,
    {
        let _writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut draft = self.snapshot();
        let out = f(&mut draft)?;
        draft.save(&self.dir)?;
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = draft;
        Ok(out)
    }

    /// Picks up changes another process made to the file.
    pub fn reload(&self) -> Result<(), ProjectError> {
        let _writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let project = Project::load(&self.dir)?;
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = project;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LockError {
    #[error("project is locked by running process {pid} ({path})")]
    Held { pid: u32, path: PathBuf },
    #[error("cannot create lock file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Held for the duration of a pipeline run. Removed on drop.
#[derive(Debug)]
pub struct ProjectLock {
    path: PathBuf,
}

impl ProjectLock {
    pub fn acquire(dir: &Path) -> Result<ProjectLock, LockError> {
        let path = dir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut file) => {
                    let _ = writeln!(file, "{}", std::process::id());
                    return Ok(ProjectLock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let pid = fs::read_to_string(&path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    match pid {
                        Some(pid) if process_alive(pid) => return Err(LockError::Held { pid, path }),
                        _ => {
                            // Left behind by a process that no longer exists.
                            let _ = fs::remove_file(&path);
                        }
                    }
                }
                Err(source) => return Err(LockError::Io { path, source }),
            }
        }
        Err(LockError::Io { path, source: std::io::Error::other("lock file keeps reappearing") })
    }
}

impl Drop for ProjectLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn process_alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new("/proc").join(pid.to_string()).exists()
    } else {
        true
    }
}
