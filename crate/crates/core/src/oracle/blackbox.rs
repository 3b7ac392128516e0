//! Delegates S-parameter evaluation to an external solver process.
//!
//! Wire protocol, one JSON object per line on the child's stdin/stdout:
//!
//! ```text
//! request:  {"id": <int>, "params": [<float>...], "freq_rad_s": [<float>...]}
//! response: {"id": <int>, "s_real": [<float>...], "s_imag": [<float>...]}
//! ```
//!
//! Every request is answered by exactly one response line carrying the same
//! id and one value per requested frequency, in request order. Anything else
//! on stdout is a protocol error. One call returns all frequencies.

use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CostUnit, FrequencyGrid, Oracle, OracleError, SParamSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackboxEndpoint {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub working_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Maximum number of solver processes kept alive; requests beyond this
    /// wait for a free process.
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    /// Expected parameter count, checked before sending.
    #[serde(default)]
    pub dimension: Option<usize>,
}

fn default_timeout_ms() -> u64 {
    600_000
}

fn default_pool_size() -> usize {
    1
}

impl BlackboxEndpoint {
    pub fn new(command: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            command: command.into(),
            args,
            working_dir: None,
            timeout_ms: default_timeout_ms(),
            pool_size: default_pool_size(),
            dimension: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub id: u64,
    pub params: Vec<f64>,
    pub freq_rad_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub id: u64,
    pub s_real: Vec<f64>,
    pub s_imag: Vec<f64>,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<io::Result<String>>,
}

impl Session {
    fn spawn(endpoint: &BlackboxEndpoint) -> Result<Self, OracleError> {
        let mut cmd = Command::new(&endpoint.command);
        cmd.args(&endpoint.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = &endpoint.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|source| OracleError::Spawn {
            command: endpoint.command.clone(),
            source,
        })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exit_description(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => format!("solver exited ({status})"),
            Ok(None) => "solver closed its output".to_string(),
            Err(e) => format!("solver state unknown: {e}"),
        }
    }

    fn roundtrip(&mut self, line: &str, timeout: Duration) -> Result<String, OracleError> {
        if let Err(e) = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush()) {
            thread::sleep(Duration::from_millis(10));
            return Err(OracleError::Process(format!(
                "write failed ({e}); {}",
                self.exit_description()
            )));
        }
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(l)) => Ok(l),
            Ok(Err(e)) => Err(OracleError::Process(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(OracleError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                // Give the child a moment to be reaped so the status is reported.
                let _ = self.child.wait();
                Err(OracleError::Process(self.exit_description()))
            }
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Parses one response line and checks it against the request.
pub fn decode_response(line: &str, id: u64, expected: usize) -> Result<SParamSample, OracleError> {
    let resp: Response = serde_json::from_str(line.trim_end()).map_err(|e| {
        OracleError::Protocol(format!("malformed response line ({e}): {line:.200}"))
    })?;
    if resp.id != id {
        return Err(OracleError::Protocol(format!(
            "response id {} does not match request id {id}",
            resp.id
        )));
    }
    if resp.s_real.len() != expected || resp.s_imag.len() != expected {
        return Err(OracleError::Protocol(format!(
            "expected {expected} values, got {} real and {} imaginary",
            resp.s_real.len(),
            resp.s_imag.len()
        )));
    }
    let mut out = Vec::with_capacity(expected);
    for (j, (re, im)) in resp.s_real.into_iter().zip(resp.s_imag).enumerate() {
        if !(re.is_finite() && im.is_finite()) {
            return Err(OracleError::NonFinite(j));
        }
        out.push(Complex64::new(re, im));
    }
    Ok(SParamSample(out))
}

struct Pool {
    idle: Vec<Session>,
    live: usize,
}

pub struct BlackboxOracle {
    endpoint: BlackboxEndpoint,
    grid: FrequencyGrid,
    pool: Mutex<Pool>,
    freed: Condvar,
    next_id: AtomicU64,
    calls: AtomicU64,
}

impl BlackboxOracle {
    pub fn new(endpoint: BlackboxEndpoint, grid: FrequencyGrid) -> Self {
        Self {
            endpoint,
            grid,
            pool: Mutex::new(Pool {
                idle: Vec::new(),
                live: 0,
            }),
            freed: Condvar::new(),
            next_id: AtomicU64::new(1),
            calls: AtomicU64::new(0),
        }
    }

    pub fn endpoint(&self) -> &BlackboxEndpoint {
        &self.endpoint
    }

    fn acquire(&self) -> Result<Session, OracleError> {
        let cap = self.endpoint.pool_size.max(1);
        let mut pool = self.pool.lock().expect("pool lock");
        loop {
            if let Some(s) = pool.idle.pop() {
                return Ok(s);
            }
            if pool.live < cap {
                pool.live += 1;
                drop(pool);
                return Session::spawn(&self.endpoint).inspect_err(|_| self.retire());
            }
            pool = self.freed.wait(pool).expect("pool lock");
        }
    }

    fn release(&self, session: Session) {
        self.pool.lock().expect("pool lock").idle.push(session);
        self.freed.notify_one();
    }

    fn retire(&self) {
        self.pool.lock().expect("pool lock").live -= 1;
        self.freed.notify_one();
    }

    /// Sends one request for every grid frequency.
    pub fn request(&self, p: &[f64]) -> Result<SParamSample, OracleError> {
        if let Some(d) = self.endpoint.dimension {
            if d != p.len() {
                return Err(OracleError::Dimension {
                    expected: d,
                    got: p.len(),
                });
            }
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let line = serde_json::to_string(&Request {
            id,
            params: p.to_vec(),
            freq_rad_s: self.grid.points().to_vec(),
        })
        .expect("request serializes");
        let mut session = self.acquire()?;
        let result = session
            .roundtrip(&line, Duration::from_millis(self.endpoint.timeout_ms))
            .and_then(|reply| decode_response(&reply, id, self.grid.len()));
        match result {
            Ok(s) => {
                self.release(session);
                self.calls.fetch_add(1, Ordering::Relaxed);
                Ok(s)
            }
            Err(e) => {
                drop(session);
                self.retire();
                Err(e)
            }
        }
    }
}

impl Oracle for BlackboxOracle {
    fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    fn cost_unit(&self) -> CostUnit {
        CostUnit::SolverCalls
    }

    fn dimension(&self) -> Option<usize> {
        self.endpoint.dimension
    }

    fn eval_at(&self, p: &[f64], index: usize) -> Result<Complex64, OracleError> {
        if index >= self.grid.len() {
            return Err(OracleError::FrequencyIndex {
                index,
                len: self.grid.len(),
            });
        }
        Ok(self.request(p)?.0[index])
    }

    fn eval_all(&self, p: &[f64]) -> Result<SParamSample, OracleError> {
        self.request(p)
    }

    fn invocations(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Server side of the protocol: answers each request line with `eval`.
/// Returns when the input closes; an evaluation error ends the loop with an
/// error so that the process exits nonzero.
pub fn serve<R, W, F>(input: R, mut output: W, mut eval: F) -> io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&[f64], &[f64]) -> Result<Vec<Complex64>, String>,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let values = eval(&req.params, &req.freq_rad_s).map_err(io::Error::other)?;
        let resp = Response {
            id: req.id,
            s_real: values.iter().map(|v| v.re).collect(),
            s_imag: values.iter().map(|v| v.im).collect(),
        };
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
