//! Launching one guest process under OS limits.

use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

pub(crate) struct Launch<'a> {
    pub argv: &'a [String],
    pub cwd: &'a Path,
    pub stdin: Option<&'a [u8]>,
    pub timeout: Duration,
    pub memory_bytes: Option<u64>,
    /// CPU-time ceiling in seconds (RLIMIT_CPU).
    pub cpu_seconds: Option<u64>,
    pub affinity: Option<Vec<usize>>,
    pub env: &'a [(String, String)],
    pub output_cap: usize,
    pub deny_network: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Termination {
    Exited(i32),
    Signaled(i32),
    TimedOut,
}

#[derive(Debug)]
pub(crate) struct Finished {
    pub termination: Termination,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub truncated: bool,
    pub wall: Duration,
}

const READER_GRACE: Duration = Duration::from_millis(200);

fn spawn_reader<R: Read + Send + 'static>(mut source: R, cap: usize) -> mpsc::Receiver<(Vec<u8>, bool)> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut out = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match source.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(out.len());
                    if n > room {
                        truncated = true;
                    }
                    out.extend_from_slice(&buf[..n.min(room)]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        let _ = tx.send((out, truncated));
    });
    rx
}

fn kill_group(pgid: u32) {
    // SAFETY: plain syscall; ESRCH when the group is already gone.
    unsafe {
        libc::killpg(pgid as libc::pid_t, libc::SIGKILL);
    }
}

fn cpu_set(cpus: &[usize]) -> libc::cpu_set_t {
    // SAFETY: cpu_set_t is plain data; CPU_ZERO/CPU_SET only touch the bitmask.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_ZERO(&mut set);
        for &c in cpus {
            libc::CPU_SET(c, &mut set);
        }
        set
    }
}

/// `wait_timeout` can wake up slightly early; keep waiting until the deadline.
fn wait_until(child: &mut std::process::Child, deadline: Instant) -> io::Result<Option<std::process::ExitStatus>> {
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        match child.wait_timeout(left)? {
            Some(status) => return Ok(Some(status)),
            None if Instant::now() >= deadline => return Ok(None),
            None => continue,
        }
    }
}

pub(crate) fn run(launch: Launch<'_>) -> io::Result<Finished> {
    let (program, args) = launch
        .argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty argv"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(launch.cwd)
        .env_clear()
        .envs(launch.env.iter().map(|(k, v)| (k, v)))
        .stdin(if launch.stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let memory = launch.memory_bytes;
    let cpu_seconds = launch.cpu_seconds;
    let affinity = launch.affinity.as_deref().map(cpu_set);
    let deny_network = launch.deny_network;
    // SAFETY: the closure runs between fork and exec and only issues
    // async-signal-safe syscalls on data prepared before the fork.
    unsafe {
        cmd.pre_exec(move || {
            let zero = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
            libc::setrlimit(libc::RLIMIT_CORE, &zero);
            if let Some(bytes) = memory {
                let lim = libc::rlimit { rlim_cur: bytes as libc::rlim_t, rlim_max: bytes as libc::rlim_t };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
            }
            if let Some(secs) = cpu_seconds {
                let lim = libc::rlimit { rlim_cur: secs as libc::rlim_t, rlim_max: (secs + 1) as libc::rlim_t };
                libc::setrlimit(libc::RLIMIT_CPU, &lim);
            }
            if let Some(set) = &affinity {
                libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), set);
            }
            if deny_network {
                // best effort: needs CAP_SYS_ADMIN or user namespaces
                libc::unshare(libc::CLONE_NEWNET);
            }
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id();

    let stdout_rx = spawn_reader(child.stdout.take().expect("piped"), launch.output_cap);
    let stderr_rx = spawn_reader(child.stderr.take().expect("piped"), launch.output_cap);
    if let (Some(mut pipe), Some(payload)) = (child.stdin.take(), launch.stdin) {
        let payload = payload.to_vec();
        thread::spawn(move || {
            // the guest may exit without reading; EPIPE is expected then
            let _ = pipe.write_all(&payload);
        });
    }

    let termination = match wait_until(&mut child, started + launch.timeout) {
        Ok(Some(status)) => match (status.code(), status.signal()) {
            (Some(code), _) => Termination::Exited(code),
            (None, Some(sig)) => Termination::Signaled(sig),
            (None, None) => Termination::Exited(-1),
        },
        Ok(None) => {
            kill_group(pgid);
            let _ = child.wait();
            Termination::TimedOut
        }
        Err(e) => {
            kill_group(pgid);
            let _ = child.wait();
            return Err(e);
        }
    };
    let wall = started.elapsed();
    // reap anything the guest left behind in its group
    kill_group(pgid);

    let (stdout, t_out) = stdout_rx.recv_timeout(READER_GRACE).unwrap_or((Vec::new(), true));
    let (stderr, t_err) = stderr_rx.recv_timeout(READER_GRACE).unwrap_or((Vec::new(), true));
    Ok(Finished { termination, stdout, stderr, truncated: t_out || t_err, wall })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str, timeout_ms: u64, cap: usize) -> Finished {
        let argv = vec!["sh".to_string(), "-c".to_string(), script.to_string()];
        let env = vec![("PATH".to_string(), std::env::var("PATH").unwrap_or_default())];
        let dir = tempfile::tempdir().unwrap();
        run(Launch {
            argv: &argv,
            cwd: dir.path(),
            stdin: Some(b"abc"),
            timeout: Duration::from_millis(timeout_ms),
            memory_bytes: None,
            cpu_seconds: None,
            affinity: None,
            env: &env,
            output_cap: cap,
            deny_network: false,
        })
        .unwrap()
    }

    #[test]
    fn captures_output_and_exit_code() {
        let f = sh("cat; echo err >&2; exit 3", 5_000, 1024);
        assert_eq!(f.termination, Termination::Exited(3));
        assert_eq!(f.stdout, b"abc");
        assert_eq!(f.stderr, b"err\n");
        assert!(!f.truncated);
    }

    #[test]
    fn output_cap_truncates() {
        let f = sh("head -c 10000 /dev/zero", 5_000, 100);
        assert_eq!(f.stdout.len(), 100);
        assert!(f.truncated);
    }

    #[test]
    fn timeout_kills() {
        let f = sh("sleep 5", 100, 1024);
        assert_eq!(f.termination, Termination::TimedOut);
        assert!(f.wall >= Duration::from_millis(100));
        assert!(f.wall < Duration::from_secs(2));
    }

    #[test]
    fn env_is_scrubbed() {
        std::env::set_var("JUDGEBOX_SECRET_FOR_TEST", "leak");
        let f = sh("echo ${JUDGEBOX_SECRET_FOR_TEST:-clean}", 5_000, 1024);
        assert_eq!(f.stdout, b"clean\n");
    }
}
