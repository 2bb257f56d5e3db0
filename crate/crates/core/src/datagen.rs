//! Trace production: a seeded synthetic generator reproducing the volatility
//! structure of real tactic traces (tight body, rare large latency spikes,
//! cost regime shifts), and a live probe client that times an HTTP download
//! as the tactic operation and a lightweight GET as the uncertainty-reduction
//! ping.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{TacticRecord, TraceDataset, CH_COST, CH_LATENCY, CH_URT_PING};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("probe error: {0}")]
    Probe(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the URT ping channel carries in synthetic traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UrtMode {
    /// No URT channel.
    #[default]
    None,
    /// Genuinely predictive side channel: ping tracks the next latency.
    Informative,
    /// Uncorrelated noise, for falsifying the URT benefit.
    PureNoise,
}

/// Synthetic trace shape: latency is a base plus an AR(1) process with rare
/// multiplicative spikes; cost follows piecewise regime levels with Gaussian
/// jitter clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub length: usize,
    pub latency_base: f64,
    /// AR(1) coefficient, |value| < 1.
    pub latency_ar: f64,
    pub latency_noise_sd: f64,
    /// Per-step spike probability in [0, 1).
    pub spike_prob: f64,
    /// Multiplier applied to spiked latencies; > 1.
    pub spike_scale: f64,
    pub cost_base: f64,
    pub cost_noise_sd: f64,
    /// Regime shifts as (start_index, level), applied in order.
    pub cost_regimes: Vec<(usize, f64)>,
    pub urt_mode: UrtMode,
    pub urt_noise_sd: f64,
    pub seed: u64,
    pub tactic_source: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            length: 1000,
            latency_base: 0.1,
            latency_ar: 0.45,
            latency_noise_sd: 0.01,
            spike_prob: 0.02,
            spike_scale: 6.0,
            cost_base: 0.1,
            cost_noise_sd: 0.01,
            cost_regimes: vec![],
            urt_mode: UrtMode::None,
            urt_noise_sd: 0.005,
            seed: 42,
            tactic_source: "synthetic".into(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), DatagenError> {
        let fail = |msg: String| Err(DatagenError::InvalidConfig(msg));
        if self.length == 0 {
            return fail("length must be >= 1".into());
        }
        if self.latency_ar.is_nan() || self.latency_ar.abs() >= 1.0 {
            return fail(format!(
                "latency_ar must satisfy |ar| < 1, got {}",
                self.latency_ar
            ));
        }
        if !(0.0..1.0).contains(&self.spike_prob) {
            return fail(format!(
                "spike_prob must be in [0, 1), got {}",
                self.spike_prob
            ));
        }
        if self.spike_prob > 0.0 && (self.spike_scale.is_nan() || self.spike_scale <= 1.0) {
            return fail(format!("spike_scale must be > 1, got {}", self.spike_scale));
        }
        if !(self.latency_noise_sd >= 0.0 && self.cost_noise_sd >= 0.0 && self.urt_noise_sd >= 0.0)
        {
            return fail("noise standard deviations must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.cost_base) {
            return fail(format!(
                "cost_base must be in [0, 1], got {}",
                self.cost_base
            ));
        }
        Ok(())
    }
}

/// Coupling between the informative URT ping and the next-step latency.
const URT_LEAD_GAIN: f64 = 0.8;

/// Generate a synthetic trace; a pure function of the config (and its seed).
pub fn synth_trace(cfg: &SynthConfig) -> Result<TraceDataset, DatagenError> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();

    // Latencies get one extra latent step so the informative URT channel can
    // lead by one at the final record.
    let mut latencies = Vec::with_capacity(cfg.length + 1);
    let mut ar = 0.0;
    for _ in 0..=cfg.length {
        ar = cfg.latency_ar * ar + cfg.latency_noise_sd * gauss.sample(&mut rng);
        let spiked = rng.random_range(0.0..1.0) < cfg.spike_prob;
        let mut latency = cfg.latency_base + ar;
        if spiked {
            latency *= cfg.spike_scale;
        }
        latencies.push(latency.max(1e-6));
    }

    let mut regimes = cfg.cost_regimes.clone();
    regimes.sort_by_key(|r| r.0);
    let mut costs = Vec::with_capacity(cfg.length);
    for t in 0..cfg.length {
        let level = regimes
            .iter()
            .take_while(|(start, _)| *start <= t)
            .last()
            .map(|(_, level)| *level)
            .unwrap_or(cfg.cost_base);
        let cost = level + cfg.cost_noise_sd * gauss.sample(&mut rng);
        costs.push(cost.clamp(0.0, 1.0));
    }

    let pings: Option<Vec<f64>> = match cfg.urt_mode {
        UrtMode::None => None,
        UrtMode::Informative => Some(
            (0..cfg.length)
                .map(|t| {
                    (URT_LEAD_GAIN * latencies[t + 1] + cfg.urt_noise_sd * gauss.sample(&mut rng))
                        .max(0.0)
                })
                .collect(),
        ),
        UrtMode::PureNoise => Some(
            (0..cfg.length)
                .map(|_| (cfg.urt_noise_sd * gauss.sample(&mut rng)).abs())
                .collect(),
        ),
    };

    let records = (0..cfg.length)
        .map(|t| TacticRecord {
            seq_index: t,
            tactic_source: cfg.tactic_source.clone(),
            latency: latencies[t],
            cost: costs[t],
            urt_ping: pings.as_ref().map(|p| p[t]),
            urt_available: None,
        })
        .collect();

    let mut channels = vec![CH_LATENCY.to_string(), CH_COST.to_string()];
    if pings.is_some() {
        channels.push(CH_URT_PING.to_string());
    }
    Ok(TraceDataset {
        records,
        channels,
        split: None,
        norm: None,
    })
}

/// Live probe configuration: download `target_url` as the tactic operation,
/// ping `ping_target` as the uncertainty-reduction tactic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub target_url: String,
    pub ping_target: String,
    /// Seconds between consecutive probes.
    pub interval_secs: f64,
    pub count: usize,
    /// Per-request timeout; failed probes record this as their latency.
    pub timeout_secs: f64,
    pub tactic_source: String,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            target_url: "http://127.0.0.1:8080/payload".into(),
            ping_target: "http://127.0.0.1:8080/".into(),
            interval_secs: 1.0,
            count: 10,
            timeout_secs: 10.0,
            tactic_source: "probe".into(),
        }
    }
}

impl ProbeConfig {
    fn validate(&self) -> Result<(), DatagenError> {
        if self.count == 0 {
            return Err(DatagenError::InvalidConfig("count must be >= 1".into()));
        }
        if self.interval_secs.is_nan() || self.interval_secs <= 0.0 {
            return Err(DatagenError::InvalidConfig("interval must be > 0".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(DatagenError::InvalidConfig("timeout must be > 0".into()));
        }
        Ok(())
    }
}

/// Executes probes one at a time, assigning consecutive sequence indices.
pub struct ProbeSession {
    cfg: ProbeConfig,
    next_seq: usize,
}

impl ProbeSession {
    pub fn new(cfg: ProbeConfig) -> Result<ProbeSession, DatagenError> {
        cfg.validate()?;
        Ok(ProbeSession { cfg, next_seq: 0 })
    }

    pub fn with_start_index(
        cfg: ProbeConfig,
        next_seq: usize,
    ) -> Result<ProbeSession, DatagenError> {
        cfg.validate()?;
        Ok(ProbeSession { cfg, next_seq })
    }

    /// Run one tactic execution: download the target (latency = wall time of
    /// the download plus a checksum pass standing in for the file-processing
    /// steps; cost = mean process CPU fraction over the operation), then ping.
    /// A failed download records the timeout bound as latency and flags the
    /// record with `urt_available = 0`.
    pub fn probe_once(&mut self) -> TacticRecord {
        let timeout = Duration::from_secs_f64(self.cfg.timeout_secs);
        let cpu_before = process_cpu_time();
        let started = Instant::now();
        let download = http_get(&self.cfg.target_url, timeout);
        let ok = match &download {
            Ok(body) => {
                // Stand-in for extract/grep/compress: one full pass over the bytes.
                let mut checksum = 0u64;
                for &b in body {
                    checksum = checksum.wrapping_mul(31).wrapping_add(b as u64);
                }
                std::hint::black_box(checksum);
                true
            }
            Err(_) => false,
        };
        let wall = started.elapsed();
        let cpu_after = process_cpu_time();
        let latency = if ok {
            wall.as_secs_f64().max(1e-9)
        } else {
            self.cfg.timeout_secs
        };
        let cost = match (cpu_before, cpu_after) {
            (Some(a), Some(b)) if wall.as_secs_f64() > 0.0 => {
                ((b - a) / wall.as_secs_f64()).clamp(0.0, 1.0)
            }
            _ => 0.0,
        };

        let ping_started = Instant::now();
        let ping = http_get(&self.cfg.ping_target, timeout);
        let (urt_ping, ping_ok) = match ping {
            Ok(_) => (ping_started.elapsed().as_secs_f64(), true),
            Err(_) => (self.cfg.timeout_secs, false),
        };

        let record = TacticRecord {
            seq_index: self.next_seq,
            tactic_source: self.cfg.tactic_source.clone(),
            latency,
            cost,
            urt_ping: Some(urt_ping),
            urt_available: Some(ok && ping_ok),
        };
        self.next_seq += 1;
        record
    }
}

/// Run `count` probes at `interval` spacing, appending CSV rows to `sink` and
/// flushing after every record so an interrupted run leaves complete rows.
pub fn run_collection(cfg: &ProbeConfig, sink: &Path) -> Result<usize, DatagenError> {
    cfg.validate()?;
    let existing_rows = match std::fs::read_to_string(sink) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .count()
            .saturating_sub(1),
        Err(_) => 0,
    };
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(sink)?;
    if existing_rows == 0 && file.metadata()?.len() == 0 {
        file.write_all(b"seq_index,tactic_source,latency,cost,urt_ping,urt_available\n")?;
        file.flush()?;
    }
    let mut session = ProbeSession::with_start_index(cfg.clone(), existing_rows)?;
    for i in 0..cfg.count {
        let r = session.probe_once();
        let line = format!(
            "{},{},{},{},{},{}\n",
            r.seq_index,
            r.tactic_source,
            r.latency,
            r.cost,
            r.urt_ping.unwrap_or(0.0),
            u8::from(r.urt_available.unwrap_or(false))
        );
        file.write_all(line.as_bytes())?;
        file.flush()?;
        if i + 1 < cfg.count {
            std::thread::sleep(Duration::from_secs_f64(cfg.interval_secs));
        }
    }
    Ok(cfg.count)
}

/// Cumulative user + system CPU seconds of this process.
#[cfg(unix)]
fn process_cpu_time() -> Option<f64> {
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) };
    if rc != 0 {
        return None;
    }
    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
    Some(tv(usage.ru_utime) + tv(usage.ru_stime))
}

#[cfg(not(unix))]
fn process_cpu_time() -> Option<f64> {
    None
}

/// Minimal plain-HTTP GET: one request, `Connection: close`, returns the
/// response body of a 2xx status. No TLS, no redirects.
pub fn http_get(url: &str, timeout: Duration) -> Result<Vec<u8>, DatagenError> {
    let parsed =
        url::Url::parse(url).map_err(|e| DatagenError::Probe(format!("bad url {url:?}: {e}")))?;
    if parsed.scheme() != "http" {
        return Err(DatagenError::Probe(format!(
            "only http urls are supported, got {url:?}"
        )));
    }
    let host = parsed
        .host_str()
        .ok_or_else(|| DatagenError::Probe(format!("url {url:?} has no host")))?;
    let port = parsed.port().unwrap_or(80);
    let addr = (host, port);
    let mut addrs = std::net::ToSocketAddrs::to_socket_addrs(&addr)
        .map_err(|e| DatagenError::Probe(format!("resolve {host}:{port}: {e}")))?;
    let sock = addrs
        .next()
        .ok_or_else(|| DatagenError::Probe(format!("no address for {host}:{port}")))?;
    let mut stream = TcpStream::connect_timeout(&sock, timeout)
        .map_err(|e| DatagenError::Probe(format!("connect {host}:{port}: {e}")))?;
    stream.set_read_timeout(Some(timeout)).ok();
    stream.set_write_timeout(Some(timeout)).ok();

    let path = match parsed.query() {
        Some(q) => format!("{}?{}", parsed.path(), q),
        None => parsed.path().to_string(),
    };
    let request = format!("GET {path} HTTP/1.0\r\nHost: {host}\r\nConnection: close\r\n\r\n");
    stream
        .write_all(request.as_bytes())
        .map_err(|e| DatagenError::Probe(format!("send request: {e}")))?;

    let deadline = Instant::now() + timeout;
    let mut response = Vec::new();
    let mut buf = [0u8; 16 * 1024];
    loop {
        if Instant::now() > deadline {
            return Err(DatagenError::Probe("response timed out".into()));
        }
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => response.extend_from_slice(&buf[..n]),
            Err(e) => return Err(DatagenError::Probe(format!("read response: {e}"))),
        }
    }

    let header_end = response
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or_else(|| DatagenError::Probe("malformed response: no header terminator".into()))?;
    let head = String::from_utf8_lossy(&response[..header_end]);
    let status_line = head.lines().next().unwrap_or("");
    let status: u16 = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| DatagenError::Probe(format!("malformed status line {status_line:?}")))?;
    if !(200..300).contains(&status) {
        return Err(DatagenError::Probe(format!("http status {status}")));
    }
    Ok(response[header_end + 4..].to_vec())
}
