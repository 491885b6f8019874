//! Exclusive claim on a work directory, released on drop.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

pub const LOCK_FILE: &str = ".lock";

#[derive(Debug)]
pub struct WorkLock {
    path: PathBuf,
}

fn alive(pid: i32) -> bool {
    // SAFETY: signal 0 only probes for existence.
    pid > 0 && unsafe { libc::kill(pid, 0) } == 0
}

impl WorkLock {
    /// Takes the lock, replacing one left by a process that no longer exists.
    pub fn acquire(dir: &Path) -> CliResult<WorkLock> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id())?;
                    return Ok(WorkLock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = std::fs::read_to_string(&path).unwrap_or_default();
                    match holder.trim().parse::<i32>() {
                        Ok(pid) if alive(pid) => {
                            return Err(CliError::validation(format!(
                                "{} is locked by running process {pid}",
                                dir.display()
                            )))
                        }
                        _ => {
                            tracing::warn!(lock = %path.display(), holder = %holder.trim(), "removing stale lock");
                            std::fs::remove_file(&path)?;
                        }
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(CliError::runtime(format!("cannot take {}", path.display())))
    }
}

impl Drop for WorkLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
