//! Process resource figures read from /proc.

use std::sync::Mutex;
use std::time::Instant;

fn clock_ticks() -> f64 {
    // SAFETY: sysconf has no preconditions.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 {
        t as f64
    } else {
        100.0
    }
}

/// CPU seconds used by this process and its reaped children.
fn cpu_seconds() -> Option<f64> {
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    // fields after the parenthesised command name; utime is field 14
    let rest = &stat[stat.rfind(')')? + 2..];
    let f: Vec<&str> = rest.split_whitespace().collect();
    let ticks: f64 = [11, 12, 13, 14].iter().map(|&i| f.get(i).and_then(|v| v.parse::<f64>().ok()).unwrap_or(0.0)).sum();
    Some(ticks / clock_ticks())
}

pub fn memory_used_bytes() -> u64 {
    let Ok(status) = std::fs::read_to_string("/proc/self/status") else { return 0 };
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))
        .and_then(|v| v.split_whitespace().next()?.parse::<u64>().ok())
        .map_or(0, |kib| kib * 1024)
}

/// CPU utilization between successive samples, as a fraction of the cores
/// available to the process.
pub struct CpuSampler {
    last: Mutex<(Instant, f64)>,
    cores: f64,
}

impl Default for CpuSampler {
    fn default() -> Self {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
        Self { last: Mutex::new((Instant::now(), cpu_seconds().unwrap_or(0.0))), cores }
    }
}

impl CpuSampler {
    pub fn sample(&self) -> f64 {
        let now = Instant::now();
        let cpu = cpu_seconds().unwrap_or(0.0);
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        let wall = now.duration_since(last.0).as_secs_f64();
        let used = cpu - last.1;
        *last = (now, cpu);
        if wall <= 0.0 {
            return 0.0;
        }
        (used / wall / self.cores).clamp(0.0, 1.0)
    }
}
