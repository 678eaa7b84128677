//! Client for models served by a child process speaking newline-delimited
//! JSON over its standard input and output.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{check_batch, BlackBoxModel};
use crate::rng::StreamRng;
use crate::samplers::{check_subset, ConditionalSampler};
use crate::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

struct Connection {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// A model (and optionally a conditional sampler) behind the wire protocol.
///
/// Frames are serialized per connection, so concurrent callers queue on an
/// internal lock.
pub struct ExternalModel {
    name: String,
    d: usize,
    timeout: Duration,
    conn: Mutex<Connection>,
    stderr: Arc<Mutex<String>>,
}

#[derive(Deserialize)]
struct Hello {
    name: String,
    d: usize,
}

impl ExternalModel {
    /// Launches `command` through the shell and performs the handshake.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut stderr_pipe = child.stderr.take().expect("stderr is piped");

        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                sink.lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .push_str(&String::from_utf8_lossy(&buf[..n]));
            }
        });

        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });

        let mut model = Self {
            name: String::new(),
            d: 0,
            timeout,
            conn: Mutex::new(Connection {
                child,
                stdin,
                lines: rx,
                next_id: 0,
            }),
            stderr,
        };
        let reply = model.request(json!({"op": "hello"}))?;
        let hello: Hello = serde_json::from_value(reply)
            .map_err(|e| Error::Protocol(format!("bad hello reply: {e}")))?;
        if hello.d == 0 {
            return Err(Error::Protocol("adapter declared dimension 0".into()));
        }
        model.name = hello.name;
        model.d = hello.d;
        Ok(model)
    }

    /// Everything the adapter has written to standard error so far.
    pub fn stderr_output(&self) -> String {
        self.stderr.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn request(&self, mut frame: Value) -> Result<Value> {
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let id = conn.next_id;
        conn.next_id += 1;
        frame["id"] = json!(id);

        let stdin = conn
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Protocol("connection closed".into()))?;
        let mut line = serde_json::to_string(&frame)?;
        line.push('\n');
        if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()) {
            return Err(Error::Protocol(format!("failed to write to adapter: {e}")));
        }

        let line = match conn.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(Error::Protocol(format!("failed to read from adapter: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(Error::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol("adapter closed its output stream".into()))
            }
        };
        let reply: Value = serde_json::from_str(&line)
            .map_err(|e| Error::Protocol(format!("malformed frame {line:?}: {e}")))?;
        if !reply.is_object() {
            return Err(Error::Protocol(format!("frame is not an object: {line:?}")));
        }
        if reply.get("id") != Some(&json!(id)) {
            return Err(Error::Protocol(format!(
                "expected reply id {id}, got {}",
                reply.get("id").unwrap_or(&Value::Null)
            )));
        }
        if let Some(err) = reply.get("error") {
            let message = err.as_str().map(str::to_owned).unwrap_or_else(|| err.to_string());
            return Err(Error::Model(message));
        }
        Ok(reply)
    }

    fn field<T: serde::de::DeserializeOwned>(reply: &Value, key: &str) -> Result<T> {
        let value = reply
            .get(key)
            .ok_or_else(|| Error::Protocol(format!("reply is missing {key:?}")))?;
        serde_json::from_value(value.clone())
            .map_err(|e| Error::Protocol(format!("bad {key:?} field: {e}")))
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|e| e.into_inner());
        conn.stdin.take();
        for _ in 0..50 {
            if let Ok(Some(_)) = conn.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = conn.child.kill();
        let _ = conn.child.wait();
    }
}

impl BlackBoxModel for ExternalModel {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let n = check_batch(self.d, rows)?;
        let batch: Vec<&[f64]> = rows.chunks_exact(self.d).collect();
        let reply = self.request(json!({"op": "predict", "x": batch}))?;
        let y: Vec<f64> = Self::field(&reply, "y")?;
        if y.len() != n {
            return Err(Error::Protocol(format!("sent {n} rows, got {} outputs", y.len())));
        }
        Ok(y)
    }
}

impl ConditionalSampler for ExternalModel {
    fn name(&self) -> String {
        format!("external:{}", self.name)
    }

    fn sample(
        &self,
        x: &[f64],
        subset: &[usize],
        n: usize,
        _rng: &mut StreamRng,
    ) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: x.len(),
            });
        }
        check_subset(self.d, subset)?;
        let reply = self.request(json!({
            "op": "sample_conditional",
            "x": x,
            "subset": subset,
            "n": n,
        }))?;
        let samples: Vec<Vec<f64>> = Self::field(&reply, "samples")?;
        if samples.len() != n || samples.iter().any(|s| s.len() != subset.len()) {
            return Err(Error::Protocol(format!(
                "expected {n} samples of length {}",
                subset.len()
            )));
        }
        Ok(samples)
    }
}
