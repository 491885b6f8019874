//! One OS process per snippet: process group, rlimits, no network.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::PathBuf;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

pub const SANDBOX_ROOT_ENV: &str = "LCOT_SANDBOX_ROOT";
pub const DEFAULT_MEMORY_MB: u64 = 512;
pub const DEFAULT_MAX_OUTPUT_BYTES: usize = 64 * 1024;
const TRUNCATION_NOTE: &str = "\n[output truncated]";
const READER_DRAIN: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSpec {
    /// Source file written into the scratch directory.
    pub file_name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compile: Vec<String>,
    pub run: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Parent of the per-run scratch directories; falls back to
    /// `LCOT_SANDBOX_ROOT`, then the system temp dir.
    pub root: Option<PathBuf>,
    pub memory_mb: u64,
    pub max_output_bytes: usize,
    pub isolate_network: bool,
    pub languages: BTreeMap<String, LanguageSpec>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        let mut languages = BTreeMap::new();
        languages.insert(
            "python".to_string(),
            LanguageSpec {
                file_name: "main.py".into(),
                compile: vec![],
                run: vec!["python3".into(), "-I".into(), "-u".into(), "main.py".into()],
            },
        );
        languages.insert(
            "c".to_string(),
            LanguageSpec {
                file_name: "main.c".into(),
                compile: ["cc", "-O1", "-o", "main", "main.c", "-lm"].map(String::from).to_vec(),
                run: vec!["./main".into()],
            },
        );
        Self {
            root: None,
            memory_mb: DEFAULT_MEMORY_MB,
            max_output_bytes: DEFAULT_MAX_OUTPUT_BYTES,
            isolate_network: true,
            languages,
        }
    }
}

impl SandboxConfig {
    pub fn empty() -> Self {
        Self {
            languages: BTreeMap::new(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResult {
    pub language: String,
    pub exit_status: i32,
    pub stdout: String,
    pub stderr: String,
    pub elapsed_s: f64,
    pub timed_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExecResult {
    pub fn failed(language: &str, error: String) -> Self {
        Self {
            language: language.to_string(),
            exit_status: -1,
            stdout: String::new(),
            stderr: String::new(),
            elapsed_s: 0.0,
            timed_out: false,
            error: Some(error),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("unsupported language `{0}`")]
    Unsupported(String),
    #[error("timeout must be a nonnegative finite number, got {0}")]
    BadTimeout(f64),
    #[error("cannot start `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("sandbox io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct Sandbox {
    config: SandboxConfig,
}

struct Captured {
    status: Option<ExitStatus>,
    stdout: String,
    stderr: String,
    timed_out: bool,
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Sorted, duplicate-free configured language names.
    pub fn languages(&self) -> Vec<String> {
        self.config.languages.keys().cloned().collect()
    }

    /// Runs `code` with a wall-clock budget of `timeout_s` covering compile and run.
    pub fn execute(&self, language: &str, code: &str, timeout_s: f64) -> Result<ExecResult, SandboxError> {
        if !timeout_s.is_finite() || timeout_s < 0.0 {
            return Err(SandboxError::BadTimeout(timeout_s));
        }
        let spec = self
            .config
            .languages
            .get(language)
            .ok_or_else(|| SandboxError::Unsupported(language.to_string()))?;
        let scratch = self.scratch_dir()?;
        std::fs::write(scratch.path().join(&spec.file_name), code)?;

        let started = Instant::now();
        let budget = Duration::from_secs_f64(timeout_s);
        let mut stages = vec![];
        if !spec.compile.is_empty() {
            stages.push(&spec.compile);
        }
        stages.push(&spec.run);
        let mut last = None;
        for argv in stages {
            let remaining = budget.saturating_sub(started.elapsed());
            let captured = self.run_stage(argv, scratch.path(), remaining, timeout_s)?;
            let ok = captured.status.is_some_and(|s| s.success());
            let stop = captured.timed_out || !ok;
            last = Some(captured);
            if stop {
                break;
            }
        }
        let captured = last.expect("at least the run stage");
        let exit_status = match (captured.timed_out, captured.status) {
            (true, _) | (false, None) => -libc::SIGKILL,
            (false, Some(s)) => s.code().unwrap_or_else(|| -s.signal().unwrap_or(libc::SIGKILL)),
        };
        Ok(ExecResult {
            language: language.to_string(),
            exit_status,
            stdout: captured.stdout,
            stderr: captured.stderr,
            elapsed_s: started.elapsed().as_secs_f64(),
            timed_out: captured.timed_out,
            error: None,
        })
    }

    fn scratch_dir(&self) -> io::Result<tempfile::TempDir> {
        let root = self
            .config
            .root
            .clone()
            .or_else(|| std::env::var_os(SANDBOX_ROOT_ENV).map(PathBuf::from));
        match root {
            Some(r) => {
                std::fs::create_dir_all(&r)?;
                tempfile::Builder::new().prefix("run-").tempdir_in(r)
            }
            None => tempfile::Builder::new().prefix("lcot-sandbox-").tempdir(),
        }
    }

    fn run_stage(
        &self,
        argv: &[String],
        dir: &std::path::Path,
        budget: Duration,
        timeout_s: f64,
    ) -> Result<Captured, SandboxError> {
        let limits = Limits {
            address_space: self.config.memory_mb.saturating_mul(1024 * 1024),
            cpu_seconds: (timeout_s.ceil() as u64).saturating_add(1).min(1 << 20),
            isolate_network: self.config.isolate_network,
            filter: NetworkFilter::new(),
        };
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .current_dir(dir)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/bin:/bin".into()))
            .env("HOME", dir)
            .env("LANG", "C.UTF-8")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: the closure only issues raw syscalls on data prepared before fork.
        unsafe {
            cmd.pre_exec(move || limits.apply());
        }
        let mut child = cmd.spawn().map_err(|source| SandboxError::Spawn {
            program: argv[0].clone(),
            source,
        })?;
        let pgid = child.id() as libc::pid_t;
        let cap = self.config.max_output_bytes;
        let out_rx = spawn_reader(child.stdout.take(), cap);
        let err_rx = spawn_reader(child.stderr.take(), cap);

        let status = wait_with_budget(&mut child, budget)?;
        let timed_out = status.is_none();
        // SAFETY: signals our own process group; stragglers die with the snippet.
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
        let status = match status {
            Some(s) => Some(s),
            None => Some(child.wait()?),
        };
        let stdout = out_rx.recv_timeout(READER_DRAIN).unwrap_or_default();
        let stderr = err_rx.recv_timeout(READER_DRAIN).unwrap_or_default();
        Ok(Captured {
            status: if timed_out { None } else { status },
            stdout,
            stderr,
            timed_out,
        })
    }
}

fn wait_with_budget(child: &mut Child, budget: Duration) -> io::Result<Option<ExitStatus>> {
    if budget.is_zero() {
        return child.try_wait();
    }
    child.wait_timeout(budget)
}

fn spawn_reader<R: Read + Send + 'static>(pipe: Option<R>, cap: usize) -> mpsc::Receiver<String> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut dropped = 0usize;
        if let Some(mut pipe) = pipe {
            let mut buf = [0u8; 8192];
            loop {
                match pipe.read(&mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        let room = cap.saturating_sub(kept.len());
                        kept.extend_from_slice(&buf[..n.min(room)]);
                        dropped += n.saturating_sub(room);
                    }
                }
            }
        }
        let mut text = String::from_utf8_lossy(&kept).into_owned();
        if dropped > 0 {
            text.push_str(TRUNCATION_NOTE);
        }
        let _ = tx.send(text);
    });
    rx
}

#[derive(Clone, Copy)]
struct Limits {
    address_space: u64,
    cpu_seconds: u64,
    isolate_network: bool,
    filter: NetworkFilter,
}

impl Limits {
    fn apply(&self) -> io::Result<()> {
        // SAFETY: plain syscalls in the forked child.
        unsafe {
            if libc::setpgid(0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            set_limit(libc::RLIMIT_AS, self.address_space)?;
            set_limit(libc::RLIMIT_CPU, self.cpu_seconds)?;
            set_limit(libc::RLIMIT_CORE, 0)?;
            if self.isolate_network {
                if libc::unshare(libc::CLONE_NEWNET) != 0 {
                    let _ = libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET);
                }
                self.filter.install();
            }
        }
        Ok(())
    }
}

unsafe fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    if libc::setrlimit(resource, &lim) != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

#[cfg(target_arch = "x86_64")]
const AUDIT_ARCH: u32 = 0xC000_003E;
#[cfg(target_arch = "aarch64")]
const AUDIT_ARCH: u32 = 0xC000_00B7;

/// Seccomp program refusing IPv4/IPv6 sockets with EACCES.
#[derive(Clone, Copy)]
struct NetworkFilter {
    #[cfg(any(target_arch = "x86_64", target_arch = "aarch64"))]
    program: [libc::sock_filter; 10],
}

impl NetworkFilter {
    #[cfg(any(target_arch = "x86_64", target_arch = "aarch64"))]
    fn new() -> Self {
        const LD: u16 = (libc::BPF_LD | libc::BPF_W | libc::BPF_ABS) as u16;
        const JEQ: u16 = (libc::BPF_JMP | libc::BPF_JEQ | libc::BPF_K) as u16;
        const JSET: u16 = (libc::BPF_JMP | libc::BPF_JSET | libc::BPF_K) as u16;
        const RET: u16 = (libc::BPF_RET | libc::BPF_K) as u16;
        let op = |code: u16, jt: u8, jf: u8, k: u32| libc::sock_filter { code, jt, jf, k };
        let deny = libc::SECCOMP_RET_ERRNO | (libc::EACCES as u32 & libc::SECCOMP_RET_DATA);
        Self {
            program: [
                op(LD, 0, 0, 4),
                op(JEQ, 0, 6, AUDIT_ARCH),
                op(LD, 0, 0, 0),
                op(JSET, 5, 0, 0x4000_0000),
                op(JEQ, 0, 3, libc::SYS_socket as u32),
                op(LD, 0, 0, 16),
                op(JEQ, 2, 0, libc::AF_INET as u32),
                op(JEQ, 1, 0, libc::AF_INET6 as u32),
                op(RET, 0, 0, libc::SECCOMP_RET_ALLOW),
                op(RET, 0, 0, deny),
            ],
        }
    }

    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    fn new() -> Self {
        Self {}
    }

    #[cfg(any(target_arch = "x86_64", target_arch = "aarch64"))]
    unsafe fn install(&self) {
        let prog = libc::sock_fprog {
            len: self.program.len() as u16,
            filter: self.program.as_ptr() as *mut libc::sock_filter,
        };
        if libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) == 0 {
            libc::prctl(
                libc::PR_SET_SECCOMP,
                libc::SECCOMP_MODE_FILTER as libc::c_ulong,
                &prog as *const libc::sock_fprog as libc::c_ulong,
            );
        }
    }

    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    unsafe fn install(&self) {}
}
