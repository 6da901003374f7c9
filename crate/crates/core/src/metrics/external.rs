//! Out-of-process metric adapters.
//!
//! Protocol: the adapter reads one JSON request per line on stdin,
//! `{"id": "...", "path": "..."}`, where `path` names a mono WAV file, and
//! answers with exactly one line `{"id": "...", "score": <number>}` on stdout.
//! Any other stdout output is a protocol error. The adapter process is kept
//! alive between requests and restarted after a failure. When the target is
//! an HTTP endpoint, the same request record is POSTed as the body and the
//! response body must be the same response record.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{MetricError, MetricKind, QualityMetric};
use crate::dsp::wav::{write_wav, WavFormat};
use crate::dsp::Waveform;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalTarget {
    /// Shell command line, run through `sh -c`.
    Command(String),
    /// HTTP URL accepting POSTed request records.
    Endpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetricConfig {
    pub target: ExternalTarget,
    pub timeout: Duration,
    /// Raw scores are mapped linearly from this range onto `[0, 1]`.
    pub raw_range: (f64, f64),
    /// Number of adapter processes used by batch scoring.
    pub workers: usize,
}

impl ExternalMetricConfig {
    pub fn command(cmd: impl Into<String>) -> Self {
        Self {
            target: ExternalTarget::Command(cmd.into()),
            timeout: Duration::from_secs(30),
            raw_range: (1.0, 5.0),
            workers: 1,
        }
    }

    pub fn endpoint(url: impl Into<String>) -> Self {
        Self {
            target: ExternalTarget::Endpoint(url.into()),
            ..Self::command("")
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let (lo, hi) = self.raw_range;
        if !(lo < hi) {
            return Err(MetricError::InvalidConfig(format!(
                "raw_range min {lo} must be below max {hi}"
            )));
        }
        if self.workers == 0 {
            return Err(MetricError::InvalidConfig("workers must be >= 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(MetricError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub id: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreResponse {
    pub id: String,
    pub score: f64,
}

/// Parses one adapter output line and checks it answers `expected_id`.
pub fn parse_response(line: &str, expected_id: &str) -> Result<f64, MetricError> {
    let resp: ScoreResponse = serde_json::from_str(line.trim_end_matches(['\r', '\n']))
        .map_err(|e| MetricError::Protocol(format!("{e}: {line:?}")))?;
    if resp.id != expected_id {
        return Err(MetricError::Protocol(format!(
            "response id {:?} does not match request id {expected_id:?}",
            resp.id
        )));
    }
    if !resp.score.is_finite() {
        return Err(MetricError::Protocol(format!("non-finite score {}", resp.score)));
    }
    Ok(resp.score)
}

struct AdapterProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
    stderr_thread: Option<JoinHandle<()>>,
}

impl AdapterProcess {
    fn spawn(command: &str) -> Result<Self, MetricError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr_pipe = child.stderr.take().expect("piped stderr");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let stderr_thread = std::thread::spawn(move || {
            let mut reader = BufReader::new(stderr_pipe);
            let mut line = String::new();
            while let Ok(n) = reader.read_line(&mut line) {
                if n == 0 {
                    break;
                }
                sink.lock().unwrap().push_str(&line);
                line.clear();
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            stderr,
            stderr_thread: Some(stderr_thread),
        })
    }

    fn exit_error(&mut self) -> MetricError {
        let status = match self.child.wait() {
            Ok(s) => s.to_string(),
            Err(e) => format!("unknown status ({e})"),
        };
        if let Some(h) = self.stderr_thread.take() {
            let _ = h.join();
        }
        MetricError::AdapterExit {
            status,
            stderr: self.stderr.lock().unwrap().trim().to_string(),
        }
    }

    fn exchange(&mut self, req: &ScoreRequest, timeout: Duration) -> Result<f64, MetricError> {
        let mut msg = serde_json::to_string(req).expect("request serializes");
        msg.push('\n');
        if self
            .stdin
            .write_all(msg.as_bytes())
            .and_then(|_| self.stdin.flush())
            .is_err()
        {
            return Err(self.exit_error());
        }
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => parse_response(&line, &req.id),
            Ok(Err(e)) => Err(MetricError::Io(e)),
            Err(RecvTimeoutError::Timeout) => Err(MetricError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(self.exit_error()),
        }
    }

    fn terminate(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Black-box metric served by an external process or HTTP endpoint.
pub struct ExternalMetric {
    config: ExternalMetricConfig,
    slots: Vec<Mutex<Option<AdapterProcess>>>,
    agent: ureq::Agent,
    scratch: tempfile::TempDir,
    counter: AtomicU64,
}

impl std::fmt::Debug for ExternalMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalMetric")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl ExternalMetric {
    pub fn new(config: ExternalMetricConfig) -> Result<Self, MetricError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(Self {
            slots: (0..config.workers).map(|_| Mutex::new(None)).collect(),
            agent,
            scratch: tempfile::tempdir()?,
            counter: AtomicU64::new(0),
            config,
        })
    }

    pub fn config(&self) -> &ExternalMetricConfig {
        &self.config
    }

    /// Scores an audio file already on disk.
    pub fn score_path(&self, path: &Path, slot: usize) -> Result<f64, MetricError> {
        let id = format!("req-{}", self.counter.fetch_add(1, Ordering::Relaxed));
        let req = ScoreRequest {
            id,
            path: path.to_string_lossy().into_owned(),
        };
        match &self.config.target {
            ExternalTarget::Command(cmd) => self.score_via_process(cmd, slot, &req),
            ExternalTarget::Endpoint(url) => self.score_via_http(url, &req),
        }
    }

    fn score_via_process(
        &self,
        cmd: &str,
        slot: usize,
        req: &ScoreRequest,
    ) -> Result<f64, MetricError> {
        let mut guard = self.slots[slot % self.slots.len()].lock().unwrap();
        if guard.is_none() {
            *guard = Some(AdapterProcess::spawn(cmd)?);
        }
        let result = guard
            .as_mut()
            .expect("adapter spawned")
            .exchange(req, self.config.timeout);
        if result.is_err() {
            if let Some(p) = guard.take() {
                p.terminate();
            }
        }
        result
    }

    fn score_via_http(&self, url: &str, req: &ScoreRequest) -> Result<f64, MetricError> {
        let body = serde_json::to_string(req).expect("request serializes");
        let mut resp = self
            .agent
            .post(url)
            .header("content-type", "application/json")
            .send(body.as_str())
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => MetricError::Timeout(self.config.timeout),
                other => MetricError::Http(other.to_string()),
            })?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| MetricError::Http(e.to_string()))?;
        parse_response(text.trim(), &req.id)
    }

    fn score_in_slot(&self, wave: &Waveform, slot: usize) -> Result<f64, MetricError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let path = self.scratch.path().join(format!("utt-{n}.wav"));
        write_wav(&path, wave, WavFormat::Float32)?;
        let result = self.score_path(&path, slot);
        let _ = std::fs::remove_file(&path);
        result
    }
}

impl Drop for ExternalMetric {
    fn drop(&mut self) {
        for slot in &self.slots {
            if let Some(p) = slot.lock().unwrap().take() {
                p.terminate();
            }
        }
    }
}

impl QualityMetric for ExternalMetric {
    fn name(&self) -> &str {
        "external"
    }

    fn kind(&self) -> MetricKind {
        MetricKind::Range {
            min: self.config.raw_range.0,
            max: self.config.raw_range.1,
        }
    }

    fn score_raw(&self, wave: &Waveform) -> Result<f64, MetricError> {
        self.score_in_slot(wave, 0)
    }

    fn score_batch(&self, waves: &[&Waveform]) -> Vec<Result<f64, MetricError>> {
        let workers = self.slots.len().min(waves.len()).max(1);
        let mut results: Vec<Option<Result<f64, MetricError>>> = (0..waves.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || {
                        (w..waves.len())
                            .step_by(workers)
                            .map(|i| (i, self.score_in_slot(waves[i], w)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("scoring worker panicked") {
                    results[i] = Some(r);
                }
            }
        });
        results.into_iter().map(|r| r.expect("every index scored")).collect()
    }
}

/// Runs the adapter side of the line protocol until `input` closes.
///
/// A request that cannot be parsed or scored ends the loop with an error;
/// the caller is expected to report it on stderr and exit nonzero.
pub fn serve<R, W, F>(input: R, mut output: W, score: F) -> Result<(), MetricError>
where
    R: BufRead,
    W: Write,
    F: Fn(&Path) -> Result<f64, MetricError>,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: ScoreRequest = serde_json::from_str(&line)
            .map_err(|e| MetricError::Protocol(format!("bad request {line:?}: {e}")))?;
        let score = score(Path::new(&req.path))?;
        let resp = ScoreResponse { id: req.id, score };
        writeln!(output, "{}", serde_json::to_string(&resp).expect("response serializes"))?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone() -> Waveform {
        let s = (0..8000)
            .map(|i| 0.1 * (i as f64 * 0.3).sin() * (1.0 + (i as f64 / 800.0).sin()))
            .collect();
        Waveform::new(s, 16000).unwrap()
    }

    /// Adapter that echoes a constant score for every request id.
    const ECHO_ADAPTER: &str = r#"while IFS= read -r line; do id=$(printf '%s' "$line" | sed 's/.*"id":"\([^"]*\)".*/\1/'); printf '{"id":"%s","score":3.0}\n' "$id"; done"#;

    #[test]
    fn echo_adapter_returns_constant() {
        let m = ExternalMetric::new(ExternalMetricConfig::command(ECHO_ADAPTER)).unwrap();
        assert_eq!(m.score_raw(&tone()).unwrap(), 3.0);
        // process is reused for the next request
        assert_eq!(m.score_raw(&tone()).unwrap(), 3.0);
        let s = m.score(&tone()).unwrap();
        assert_eq!(s.normalized, 0.5);
    }

    #[test]
    fn batch_keeps_order_across_workers() {
        let mut cfg = ExternalMetricConfig::command(ECHO_ADAPTER);
        cfg.workers = 3;
        let m = ExternalMetric::new(cfg).unwrap();
        let w = tone();
        let waves: Vec<&Waveform> = (0..7).map(|_| &w).collect();
        let out = m.score_batch(&waves);
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|r| *r.as_ref().unwrap() == 3.0));
    }

    #[test]
    fn nonzero_exit_attaches_stderr() {
        let m = ExternalMetric::new(ExternalMetricConfig::command(
            "read line; echo 'model weights missing' >&2; exit 3",
        ))
        .unwrap();
        let err = m.score_raw(&tone()).unwrap_err();
        match &err {
            MetricError::AdapterExit { status, stderr } => {
                assert!(status.contains('3'), "{status}");
                assert!(stderr.contains("model weights missing"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn chatter_is_a_protocol_error() {
        let m = ExternalMetric::new(ExternalMetricConfig::command(
            "while read line; do echo loading model; done",
        ))
        .unwrap();
        assert!(matches!(m.score_raw(&tone()), Err(MetricError::Protocol(_))));
    }

    #[test]
    fn timeout_is_reported() {
        let mut cfg = ExternalMetricConfig::command("sleep 5");
        cfg.timeout = Duration::from_millis(200);
        let m = ExternalMetric::new(cfg).unwrap();
        assert!(matches!(m.score_raw(&tone()), Err(MetricError::Timeout(_))));
    }

    #[test]
    fn response_parsing() {
        assert_eq!(parse_response(r#"{"id":"a","score":2.5}"#, "a").unwrap(), 2.5);
        assert!(parse_response(r#"{"id":"b","score":2.5}"#, "a").is_err());
        assert!(parse_response(r#"{"id":"a","score":2.5,"x":1}"#, "a").is_err());
        assert!(parse_response("3.0", "a").is_err());
    }

    #[test]
    fn serve_answers_each_request() {
        let input = b"{\"id\":\"u1\",\"path\":\"/a.wav\"}\n{\"id\":\"u2\",\"path\":\"/b.wav\"}\n";
        let mut out = Vec::new();
        serve(&input[..], &mut out, |p| Ok(p.to_string_lossy().len() as f64)).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(parse_response(lines[0], "u1").unwrap(), 6.0);
        assert_eq!(parse_response(lines[1], "u2").unwrap(), 6.0);
    }

    #[test]
    fn http_endpoint_contract() {
        use std::io::Read;
        use std::net::TcpListener;
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 1024];
            let body = loop {
                let n = sock.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).to_string();
                if let Some(split) = text.find("\r\n\r\n") {
                    let len: usize = text
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse().unwrap())
                        })
                        .unwrap();
                    if text.len() >= split + 4 + len {
                        break text[split + 4..split + 4 + len].to_string();
                    }
                }
            };
            let req: ScoreRequest = serde_json::from_str(&body).unwrap();
            let resp = serde_json::to_string(&ScoreResponse {
                id: req.id,
                score: 4.2,
            })
            .unwrap();
            let msg = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{resp}",
                resp.len()
            );
            sock.write_all(msg.as_bytes()).unwrap();
        });
        let m = ExternalMetric::new(ExternalMetricConfig::endpoint(format!("http://{addr}/score"))).unwrap();
        assert_eq!(m.score_raw(&tone()).unwrap(), 4.2);
        server.join().unwrap();
    }
}
