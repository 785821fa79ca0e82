//! External SMT solver process management.
//!
//! One [`SmtSession`] owns a solver subprocess speaking SMT-LIB 2 text over
//! stdin/stdout (`z3 -in` style). Every query runs inside a push/pop scope
//! with an echo marker for framing, so any conforming solver works. The
//! session restarts the process after a crash or timeout.

use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::time::{Duration, Instant};

/// How to launch a solver.
#[derive(Clone, Debug)]
pub struct SolverCmd {
    pub path: PathBuf,
    /// Extra arguments; `-in` is appended for interactive sessions.
    pub args: Vec<String>,
}

impl SolverCmd {
    pub fn new(path: impl Into<PathBuf>) -> SolverCmd {
        SolverCmd {
            path: path.into(),
            args: Vec::new(),
        }
    }

    /// A human-readable identification string for verdict reports.
    pub fn describe(&self) -> String {
        self.path.display().to_string()
    }
}

/// Locate a usable solver: explicit path, then `CATA_SOLVER`, then `z3` on
/// PATH, then the bundled `tools/z3js` shim (installing its npm dependency on
/// first use).
pub fn discover_solver(explicit: Option<&Path>) -> Result<SolverCmd> {
    if let Some(p) = explicit {
        return Ok(SolverCmd::new(p));
    }
    if let Ok(p) = std::env::var("CATA_SOLVER") {
        if !p.is_empty() {
            return Ok(SolverCmd::new(p));
        }
    }
    if let Some(p) = find_in_path("z3") {
        return Ok(SolverCmd::new(p));
    }
    if let Some(p) = find_shim() {
        ensure_shim_ready(&p)?;
        return Ok(SolverCmd::new(p));
    }
    Err(Error::SolverUnavailable(
        "no SMT solver found: set CATA_SOLVER, put z3 on PATH, or keep tools/z3js available"
            .into(),
    ))
}

fn find_in_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    for dir in std::env::split_paths(&path) {
        let cand = dir.join(name);
        if cand.is_file() {
            return Some(cand);
        }
    }
    None
}

fn find_shim() -> Option<PathBuf> {
    let mut roots: Vec<PathBuf> = Vec::new();
    if let Ok(d) = std::env::current_dir() {
        roots.push(d);
    }
    if let Ok(exe) = std::env::current_exe() {
        if let Some(d) = exe.parent() {
            roots.push(d.to_path_buf());
        }
    }
    roots.push(PathBuf::from(env!("CARGO_MANIFEST_DIR")));
    for root in roots {
        let mut dir = Some(root.as_path());
        while let Some(d) = dir {
            let cand = d.join("tools/z3js/z3js");
            if cand.is_file() {
                return Some(cand);
            }
            dir = d.parent();
        }
    }
    None
}

fn ensure_shim_ready(shim: &Path) -> Result<()> {
    let dir = shim.parent().unwrap_or_else(|| Path::new("."));
    if dir.join("node_modules/z3-solver").is_dir() {
        return Ok(());
    }
    eprintln!(
        "note: installing the bundled solver's npm dependency in {} (first use only)",
        dir.display()
    );
    let status = Command::new("npm")
        .arg("install")
        .current_dir(dir)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map_err(|e| Error::SolverUnavailable(format!("npm not available: {e}")))?;
    if !status.success() {
        return Err(Error::SolverUnavailable(
            "npm install for the bundled solver failed".into(),
        ));
    }
    Ok(())
}

/// Query counters and cumulative solver time.
#[derive(Clone, Debug, Default)]
pub struct SessionStats {
    pub queries: u64,
    pub restarts: u64,
    pub total_time: Duration,
}

/// Outcome of a `(check-sat)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown,
}

pub struct SmtSession {
    cmd: SolverCmd,
    timeout: Duration,
    child: Option<Running>,
    marker: u64,
    pub stats: SessionStats,
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl SmtSession {
    pub fn new(cmd: SolverCmd, timeout: Duration) -> SmtSession {
        SmtSession {
            cmd,
            timeout,
            child: None,
            marker: 0,
            stats: SessionStats::default(),
        }
    }

    /// Convenience constructor using solver discovery and a 5s query timeout.
    pub fn default_session() -> Result<SmtSession> {
        Ok(SmtSession::new(
            discover_solver(None)?,
            Duration::from_secs(5),
        ))
    }

    fn start(&mut self) -> Result<&mut Running> {
        if self.child.is_none() {
            let mut command = Command::new(&self.cmd.path);
            command
                .args(&self.cmd.args)
                .arg("-in")
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::null());
            let mut child = command.spawn().map_err(|e| {
                Error::SolverUnavailable(format!(
                    "cannot start {}: {e}",
                    self.cmd.path.display()
                ))
            })?;
            let stdout = child.stdout.take().expect("piped stdout");
            let stdin = child.stdin.take().expect("piped stdin");
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                let reader = BufReader::new(stdout);
                for line in reader.lines() {
                    match line {
                        Ok(l) => {
                            if tx.send(l).is_err() {
                                break;
                            }
                        }
                        Err(_) => break,
                    }
                }
            });
            self.child = Some(Running {
                child,
                stdin,
                lines: rx,
            });
        }
        Ok(self.child.as_mut().unwrap())
    }

    fn kill(&mut self) {
        if let Some(mut r) = self.child.take() {
            let _ = r.child.kill();
            let _ = r.child.wait();
            self.stats.restarts += 1;
        }
    }

    /// Send a batch of commands and collect output lines until the echo
    /// marker appears. `None` on timeout (the process is restarted lazily).
    pub fn raw_query(&mut self, commands: &str) -> Result<Option<Vec<String>>> {
        self.marker += 1;
        let marker = format!("@m{}@", self.marker);
        let start = Instant::now();
        let timeout = self.timeout;
        let payload = format!("{}\n(echo \"{}\")\n", commands, marker);
        {
            let running = self.start()?;
            if running.stdin.write_all(payload.as_bytes()).is_err()
                || running.stdin.flush().is_err()
            {
                // Process died; restart once and retry.
                self.kill();
                let running = self.start()?;
                running
                    .stdin
                    .write_all(payload.as_bytes())
                    .and_then(|_| running.stdin.flush())
                    .map_err(|e| {
                        Error::SolverProtocol(format!("cannot write to solver: {e}"))
                    })?;
            }
        }
        let running = self.child.as_mut().unwrap();
        let mut lines = Vec::new();
        let outcome = loop {
            let remaining = timeout
                .checked_sub(start.elapsed())
                .unwrap_or(Duration::ZERO);
            if remaining.is_zero() {
                break None;
            }
            match running.lines.recv_timeout(remaining) {
                Ok(l) => {
                    if l.trim() == marker {
                        break Some(());
                    }
                    lines.push(l);
                }
                Err(mpsc::RecvTimeoutError::Timeout) => break None,
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    self.kill();
                    return Err(Error::SolverProtocol(
                        "solver exited before answering".into(),
                    ));
                }
            }
        };
        self.stats.queries += 1;
        self.stats.total_time += start.elapsed();
        match outcome {
            Some(()) => Ok(Some(lines)),
            None => {
                self.kill();
                Ok(None)
            }
        }
    }

    /// Run declarations and assertions in a fresh push/pop scope and return
    /// the check-sat verdict. Timeouts surface as `Unknown`.
    pub fn check_sat_scoped(&mut self, script: &str) -> Result<SatResult> {
        let batch = format!("(push 1)\n{}\n(check-sat)\n(pop 1)", script);
        let Some(lines) = self.raw_query(&batch)? else {
            return Ok(SatResult::Unknown);
        };
        for l in &lines {
            match l.trim() {
                "sat" => return Ok(SatResult::Sat),
                "unsat" => return Ok(SatResult::Unsat),
                "unknown" => return Ok(SatResult::Unknown),
                _ => {}
            }
        }
        Err(Error::SolverProtocol(format!(
            "no sat/unsat/unknown in solver reply: {:?}",
            lines
        )))
    }
}

impl Drop for SmtSession {
    fn drop(&mut self) {
        if let Some(mut r) = self.child.take() {
            let _ = r.child.kill();
            let _ = r.child.wait();
        }
    }
}

/// Run a solver on a script file with a wall-clock timeout; used for the
/// final CHC satisfiability check. The first non-comment token of the output
/// must be sat/unsat/unknown; a timeout reports `Unknown`.
pub fn run_solver_on_file(cmd: &SolverCmd, file: &Path, timeout: Duration) -> Result<SatResult> {
    let mut child = Command::new(&cmd.path)
        .args(&cmd.args)
        .arg(file)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| {
            Error::SolverUnavailable(format!("cannot start {}: {e}", cmd.path.display()))
        })?;
    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let reader = BufReader::new(stdout);
        let mut out = Vec::new();
        for line in reader.lines().map_while(|l| l.ok()) {
            out.push(line);
        }
        let _ = tx.send(out);
    });
    let start = Instant::now();
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) => {
                if start.elapsed() >= timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Ok(SatResult::Unknown);
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(Error::Io(e)),
        }
    }
    let lines = rx
        .recv_timeout(Duration::from_secs(5))
        .map_err(|_| Error::SolverProtocol("solver produced no output".into()))?;
    for l in &lines {
        let t = l.trim();
        if t.is_empty() || t.starts_with(';') {
            continue;
        }
        return match t {
            "sat" => Ok(SatResult::Sat),
            "unsat" => Ok(SatResult::Unsat),
            "unknown" => Ok(SatResult::Unknown),
            other => Err(Error::SolverProtocol(format!(
                "unexpected solver output `{}`",
                other
            ))),
        };
    }
    Err(Error::SolverProtocol("empty solver output".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_answers_and_scopes_queries() {
        let mut s = SmtSession::default_session().expect("solver");
        let r = s
            .check_sat_scoped("(declare-const x Int)\n(assert (> x 0))\n(assert (< x 0))")
            .expect("query");
        assert_eq!(r, SatResult::Unsat);
        // The x declaration was popped; a fresh scope can redeclare it.
        let r = s
            .check_sat_scoped("(declare-const x Bool)\n(assert x)")
            .expect("query");
        assert_eq!(r, SatResult::Sat);
        assert_eq!(s.stats.queries, 2);
    }

    #[test]
    fn batch_run_parses_status_token() {
        let cmd = discover_solver(None).expect("solver");
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("q.smt2");
        std::fs::write(&file, "(set-logic HORN)\n(check-sat)\n").unwrap();
        let r = run_solver_on_file(&cmd, &file, Duration::from_secs(60)).expect("run");
        assert_eq!(r, SatResult::Sat);
    }
}
