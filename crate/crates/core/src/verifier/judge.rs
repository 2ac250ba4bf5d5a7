//! Stdin/stdout judge: runs a candidate program against a test suite, one
//! fresh child process per case.
//!
//! Each child runs in its own process group with `RLIMIT_AS`, `RLIMIT_CPU`,
//! `RLIMIT_FSIZE = 0` and a scrubbed environment inside a read-only scratch
//! directory. When unprivileged user namespaces are available the child is
//! also moved into an empty network namespace.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::os::unix::fs::PermissionsExt;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::TestCase;
use crate::gateway::InFlightLimit;

/// Process-wide cap on concurrently running children. Oversubscribing the
/// CPUs would turn wall-clock limits into a measure of contention.
static RUN_SLOTS: LazyLock<InFlightLimit> =
    LazyLock::new(|| InFlightLimit::new(thread::available_parallelism().map_or(1, |n| n.get())));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLimits {
    pub wall_time: Duration,
    pub memory_bytes: u64,
    pub output_bytes: u64,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            wall_time: Duration::from_secs(2),
            memory_bytes: 256 << 20,
            output_bytes: 1 << 20,
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.wall_time.is_zero() || self.memory_bytes == 0 || self.output_bytes == 0 {
            return Err(JudgeError::InvalidLimits);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOutcome {
    Pass,
    WrongOutput,
    RuntimeError,
    Timeout,
    ResourceLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CaseStats {
    pub elapsed: Duration,
    pub peak_rss_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub total: usize,
    pub passed: usize,
    pub outcomes: Vec<CaseOutcome>,
    #[serde(skip)]
    pub stats: Vec<CaseStats>,
}

impl TestReport {
    pub fn from_outcomes(outcomes: Vec<CaseOutcome>, stats: Vec<CaseStats>) -> Self {
        let passed = outcomes.iter().filter(|o| **o == CaseOutcome::Pass).count();
        Self {
            total: outcomes.len(),
            passed,
            outcomes,
            stats,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }

    pub fn pass_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.passed as f64 / self.total as f64
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("toolchain unavailable: {0}")]
    Environment(String),
    #[error("no language configured for tag '{0}'")]
    UnknownLanguage(String),
    #[error("test suite is empty")]
    EmptySuite,
    #[error("execution limits must be strictly positive")]
    InvalidLimits,
    #[error("sandbox i/o: {0}")]
    Io(#[from] io::Error),
}

/// How to build and run one language. `{src}` and `{exe}` are substituted
/// with paths inside the scratch directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    #[serde(default)]
    pub aliases: Vec<String>,
    pub source_file: String,
    #[serde(default)]
    pub compile: Option<Vec<String>>,
    pub run: Vec<String>,
}

pub fn default_languages() -> BTreeMap<String, LanguageSpec> {
    let mut m = BTreeMap::new();
    m.insert(
        "python".to_string(),
        LanguageSpec {
            aliases: vec!["py".into(), "python3".into()],
            source_file: "main.py".into(),
            compile: None,
            run: vec!["python3".into(), "{src}".into()],
        },
    );
    m.insert(
        "cpp".to_string(),
        LanguageSpec {
            aliases: vec!["c++".into(), "cc".into(), "cxx".into()],
            source_file: "main.cpp".into(),
            compile: Some(vec![
                "g++".into(),
                "-O2".into(),
                "-std=c++17".into(),
                "-o".into(),
                "{exe}".into(),
                "{src}".into(),
            ]),
            run: vec!["{exe}".into()],
        },
    );
    m.insert(
        "bash".to_string(),
        LanguageSpec {
            aliases: vec!["sh".into(), "shell".into()],
            source_file: "main.sh".into(),
            compile: None,
            run: vec!["bash".into(), "{src}".into()],
        },
    );
    m
}

#[derive(Debug, Clone)]
pub struct Judge {
    pub languages: BTreeMap<String, LanguageSpec>,
    pub default_language: String,
    /// Maximum test cases executed concurrently.
    pub workers: usize,
    /// Compare stdout byte-for-byte instead of trimming trailing whitespace.
    pub exact_output: bool,
    pub compile_timeout: Duration,
}

impl Default for Judge {
    fn default() -> Self {
        Self {
            languages: default_languages(),
            default_language: "python".into(),
            workers: 4,
            exact_output: false,
            compile_timeout: Duration::from_secs(30),
        }
    }
}

const SANDBOX_PATH: &str = "/usr/local/bin:/usr/bin:/bin";
const STDERR_CAP: usize = 64 * 1024;

impl Judge {
    pub fn resolve_language(&self, tag: Option<&str>) -> Result<(&str, &LanguageSpec), JudgeError> {
        let tag = tag.unwrap_or(&self.default_language);
        let tag_lc = tag.to_ascii_lowercase();
        self.languages
            .iter()
            .find(|(name, spec)| **name == tag_lc || spec.aliases.iter().any(|a| *a == tag_lc))
            .map(|(n, s)| (n.as_str(), s))
            .ok_or_else(|| JudgeError::UnknownLanguage(tag.to_string()))
    }

    /// Run `program` in the default language.
    pub fn run_code_tests(
        &self,
        program: &str,
        suite: &[TestCase],
        limits: &ExecutionLimits,
    ) -> Result<TestReport, JudgeError> {
        self.run_code_tests_in(None, program, suite, limits)
    }

    pub fn run_code_tests_in(
        &self,
        lang: Option<&str>,
        program: &str,
        suite: &[TestCase],
        limits: &ExecutionLimits,
    ) -> Result<TestReport, JudgeError> {
        if suite.is_empty() {
            return Err(JudgeError::EmptySuite);
        }
        limits.validate()?;
        let (_, spec) = self.resolve_language(lang)?;

        let scratch = tempfile::Builder::new().prefix("adacot-judge-").tempdir()?;
        let src = scratch.path().join(&spec.source_file);
        let exe = scratch.path().join("main.bin");
        std::fs::write(&src, program)?;
        let subst = |arg: &String| {
            arg.replace("{src}", &src.to_string_lossy())
                .replace("{exe}", &exe.to_string_lossy())
        };

        if let Some(compile) = &spec.compile {
            let argv: Vec<String> = compile.iter().map(subst).collect();
            let compile_limits = ExecutionLimits {
                wall_time: self.compile_timeout,
                memory_bytes: 4 << 30,
                output_bytes: 1 << 20,
            };
            let run = run_sandboxed(&argv, scratch.path(), b"", &compile_limits, false)?;
            if run.timed_out || !run.success() {
                log::debug!(
                    "compile failed: {}",
                    String::from_utf8_lossy(&run.stderr)
                        .lines()
                        .next()
                        .unwrap_or("")
                );
                let outcomes = vec![CaseOutcome::RuntimeError; suite.len()];
                let stats = vec![CaseStats::default(); suite.len()];
                return Ok(TestReport::from_outcomes(outcomes, stats));
            }
        }

        let argv: Vec<String> = spec.run.iter().map(subst).collect();
        std::fs::set_permissions(scratch.path(), std::fs::Permissions::from_mode(0o555))?;
        let result = self.run_cases(&argv, scratch.path(), suite, limits);
        std::fs::set_permissions(scratch.path(), std::fs::Permissions::from_mode(0o755))?;
        result
    }

    fn run_cases(
        &self,
        argv: &[String],
        cwd: &Path,
        suite: &[TestCase],
        limits: &ExecutionLimits,
    ) -> Result<TestReport, JudgeError> {
        let next = AtomicUsize::new(0);
        let results: Vec<std::sync::Mutex<Option<Result<(CaseOutcome, CaseStats), JudgeError>>>> =
            suite.iter().map(|_| std::sync::Mutex::new(None)).collect();
        let workers = self.workers.clamp(1, suite.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= suite.len() {
                        break;
                    }
                    let r = self.run_case(argv, cwd, &suite[i], limits);
                    *results[i].lock().unwrap() = Some(r);
                });
            }
        });
        let mut outcomes = Vec::with_capacity(suite.len());
        let mut stats = Vec::with_capacity(suite.len());
        for slot in results {
            let (o, s) = slot.into_inner().unwrap().expect("every case executed")?;
            outcomes.push(o);
            stats.push(s);
        }
        Ok(TestReport::from_outcomes(outcomes, stats))
    }

    fn run_case(
        &self,
        argv: &[String],
        cwd: &Path,
        case: &TestCase,
        limits: &ExecutionLimits,
    ) -> Result<(CaseOutcome, CaseStats), JudgeError> {
        let run = run_sandboxed(argv, cwd, case.input.as_bytes(), limits, true)?;
        let stats = CaseStats {
            elapsed: run.elapsed,
            peak_rss_bytes: run.peak_rss_bytes,
        };
        let outcome = if run.timed_out {
            CaseOutcome::Timeout
        } else if run.output_exceeded || run.memory_exhausted(limits) {
            CaseOutcome::ResourceLimit
        } else if !run.success() {
            CaseOutcome::RuntimeError
        } else if outputs_match(&run.stdout, &case.expected_output, self.exact_output) {
            CaseOutcome::Pass
        } else {
            CaseOutcome::WrongOutput
        };
        Ok((outcome, stats))
    }
}

/// Trim trailing whitespace on every line and trailing newlines overall.
pub fn normalize_output(s: &str) -> String {
    let joined: Vec<&str> = s.lines().map(str::trim_end).collect();
    joined.join("\n").trim_end_matches('\n').to_string()
}

pub fn outputs_match(actual: &[u8], expected: &str, exact: bool) -> bool {
    if exact {
        actual == expected.as_bytes()
    } else {
        normalize_output(&String::from_utf8_lossy(actual)) == normalize_output(expected)
    }
}

#[derive(Debug)]
struct SandboxRun {
    exit_code: Option<i32>,
    stdout: Vec<u8>,
    stderr: Vec<u8>,
    timed_out: bool,
    output_exceeded: bool,
    elapsed: Duration,
    peak_rss_bytes: u64,
}

impl SandboxRun {
    fn success(&self) -> bool {
        self.exit_code == Some(0)
    }

    fn memory_exhausted(&self, limits: &ExecutionLimits) -> bool {
        if self.success() {
            return false;
        }
        if self.peak_rss_bytes >= limits.memory_bytes {
            return true;
        }
        let err = String::from_utf8_lossy(&self.stderr);
        [
            "MemoryError",
            "std::bad_alloc",
            "out of memory",
            "Cannot allocate memory",
        ]
        .iter()
        .any(|needle| err.contains(needle))
    }
}

fn read_capped(mut pipe: impl Read, cap: usize, exceeded: Option<&AtomicBool>) -> Vec<u8> {
    let mut out = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match pipe.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(out.len());
                out.extend_from_slice(&buf[..n.min(room)]);
                if n > room {
                    if let Some(flag) = exceeded {
                        flag.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            }
        }
    }
    out
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: value,
        rlim_max: value,
    };
    // SAFETY: setrlimit only reads the struct we pass.
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}

fn run_sandboxed(
    argv: &[String],
    cwd: &Path,
    stdin: &[u8],
    limits: &ExecutionLimits,
    isolate: bool,
) -> Result<SandboxRun, JudgeError> {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(cwd)
        .env_clear()
        .env("PATH", SANDBOX_PATH)
        .env("HOME", cwd)
        .env("LANG", "C.UTF-8")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let memory = limits.memory_bytes;
    let cpu_secs = limits.wall_time.as_secs() + 2;
    // SAFETY: only async-signal-safe libc calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            set_limit(libc::RLIMIT_AS, memory)?;
            set_limit(libc::RLIMIT_CPU, cpu_secs)?;
            set_limit(libc::RLIMIT_CORE, 0)?;
            if isolate {
                set_limit(libc::RLIMIT_FSIZE, 0)?;
                libc::signal(libc::SIGXFSZ, libc::SIG_IGN);
                // best effort: an empty network namespace
                libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET);
            }
            Ok(())
        });
    }

    let _slot = RUN_SLOTS.acquire();
    let start = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(JudgeError::Environment(format!("{}: {e}", argv[0])))
        }
        Err(e) => return Err(e.into()),
    };
    let pid = child.id() as libc::pid_t;

    let exceeded = Arc::new(AtomicBool::new(false));
    let out_cap = usize::try_from(limits.output_bytes).unwrap_or(usize::MAX);
    let mut stdin_pipe = child.stdin.take().expect("piped stdin");
    let stdout_pipe = child.stdout.take().expect("piped stdout");
    let stderr_pipe = child.stderr.take().expect("piped stderr");
    let input = stdin.to_vec();
    let writer = thread::spawn(move || {
        let _ = stdin_pipe.write_all(&input);
    });
    let flag = Arc::clone(&exceeded);
    let out_reader = thread::spawn(move || read_capped(stdout_pipe, out_cap, Some(&flag)));
    let err_reader = thread::spawn(move || read_capped(stderr_pipe, STDERR_CAP, None));

    let mut status: libc::c_int = 0;
    // SAFETY: zeroed rusage is a valid out-parameter.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let mut timed_out = false;
    loop {
        // SAFETY: pid is our direct child; status/usage are valid pointers.
        let r = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut usage) };
        if r == pid {
            break;
        }
        if r < 0 {
            return Err(io::Error::last_os_error().into());
        }
        let over_time = start.elapsed() >= limits.wall_time;
        if over_time || exceeded.load(Ordering::SeqCst) {
            timed_out = over_time && !exceeded.load(Ordering::SeqCst);
            // SAFETY: signalling the child's own process group.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
                libc::kill(pid, libc::SIGKILL);
                libc::wait4(pid, &mut status, 0, &mut usage);
            }
            break;
        }
        thread::sleep(Duration::from_millis(2));
    }
    let elapsed = start.elapsed();
    // Reap stragglers left in the group so the pipes close.
    // SAFETY: signalling a process group we created.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    drop(child);
    let _ = writer.join();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();

    let exit_code = libc::WIFEXITED(status).then(|| libc::WEXITSTATUS(status));
    Ok(SandboxRun {
        exit_code,
        stdout,
        stderr,
        timed_out,
        output_exceeded: exceeded.load(Ordering::SeqCst),
        elapsed,
        peak_rss_bytes: (usage.ru_maxrss.max(0) as u64) * 1024,
    })
}
