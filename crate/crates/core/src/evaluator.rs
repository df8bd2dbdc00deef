//! Accuracy evaluators consulted by the pruning driver.
//!
//! An external evaluator is a child process speaking newline-delimited JSON
//! on stdin/stdout:
//!
//! ```text
//! → {"cmd":"init","model":"<path>"}                          ← {"baseline_accuracy":0.916}
//! → {"cmd":"evaluate","retained":{"13":[1,5,...]},"epochs":1} ← {"accuracy":0.9157}
//! → {"cmd":"close"}                                          (process exits 0)
//! ```
//!
//! Any non-JSON reply, missing field, out-of-range accuracy, early EOF or
//! nonzero exit is a protocol error.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::EvaluatorError;
use crate::model::ModelManifest;

/// Retained filters for every layer plus a retraining hint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub retained: BTreeMap<u32, Vec<u32>>,
    pub epochs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub accuracy: f64,
}

pub trait Evaluator {
    /// Handshake; returns the unpruned model's accuracy.
    fn init(&mut self) -> Result<f64, EvaluatorError>;

    fn evaluate(&mut self, request: &EvaluationRequest)
        -> Result<EvaluationResult, EvaluatorError>;

    fn close(&mut self) -> Result<(), EvaluatorError> {
        Ok(())
    }
}

#[derive(Serialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
enum WireRequest<'a> {
    Init {
        model: &'a str,
    },
    Evaluate {
        retained: &'a BTreeMap<u32, Vec<u32>>,
        epochs: u32,
    },
    Close,
}

/// Parses one reply line and extracts `field` as an accuracy in [0, 1].
pub fn parse_reply(line: &str, field: &str) -> Result<f64, EvaluatorError> {
    let malformed = |reason: &str| EvaluatorError::Malformed {
        line: line.to_string(),
        reason: reason.to_string(),
    };
    let value: serde_json::Value =
        serde_json::from_str(line.trim()).map_err(|e| malformed(&e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("not a JSON object"))?;
    if let Some(err) = obj.get("error") {
        let msg = err.as_str().map_or_else(|| err.to_string(), str::to_string);
        return Err(EvaluatorError::Remote(msg));
    }
    let acc = obj
        .get(field)
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| malformed(&format!("missing numeric `{field}`")))?;
    if !(0.0..=1.0).contains(&acc) {
        return Err(malformed(&format!("`{field}` {acc} outside [0, 1]")));
    }
    Ok(acc)
}

/// Evaluator running as a child process (`sh -c <command>`).
pub struct SubprocessEvaluator {
    command: String,
    model: PathBuf,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Option<Duration>,
}

impl SubprocessEvaluator {
    pub fn spawn(
        command: &str,
        model: impl AsRef<Path>,
        timeout: Option<Duration>,
    ) -> Result<Self, EvaluatorError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| EvaluatorError::Spawn {
                command: command.to_string(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(SubprocessEvaluator {
            command: command.to_string(),
            model: model.as_ref().to_path_buf(),
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn send(&mut self, request: &WireRequest<'_>) -> Result<(), EvaluatorError> {
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or(EvaluatorError::Closed { status: None })?;
        match stdin
            .write_all(line.as_bytes())
            .and_then(|()| stdin.flush())
        {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Err(self.closed()),
            Err(e) => Err(e.into()),
        }
    }

    fn closed(&mut self) -> EvaluatorError {
        // Give a dying child a moment so its status can be reported.
        let mut status = None;
        for _ in 0..50 {
            if let Ok(Some(s)) = self.child.try_wait() {
                status = Some(s.to_string());
                break;
            }
            thread::sleep(Duration::from_millis(10));
        }
        EvaluatorError::Closed { status }
    }

    fn read_line(&mut self) -> Result<String, EvaluatorError> {
        let next = match self.timeout {
            Some(t) => match self.lines.recv_timeout(t) {
                Ok(line) => Some(line),
                Err(RecvTimeoutError::Timeout) => return Err(EvaluatorError::Timeout(t)),
                Err(RecvTimeoutError::Disconnected) => None,
            },
            None => self.lines.recv().ok(),
        };
        match next {
            Some(Ok(line)) => Ok(line),
            Some(Err(e)) => Err(e.into()),
            None => Err(self.closed()),
        }
    }

    fn round_trip(
        &mut self,
        request: &WireRequest<'_>,
        field: &str,
    ) -> Result<f64, EvaluatorError> {
        self.send(request)?;
        let line = self.read_line()?;
        parse_reply(&line, field)
    }
}

impl Evaluator for SubprocessEvaluator {
    fn init(&mut self) -> Result<f64, EvaluatorError> {
        let model = self.model.to_string_lossy().into_owned();
        self.round_trip(&WireRequest::Init { model: &model }, "baseline_accuracy")
    }

    fn evaluate(
        &mut self,
        request: &EvaluationRequest,
    ) -> Result<EvaluationResult, EvaluatorError> {
        let accuracy = self.round_trip(
            &WireRequest::Evaluate {
                retained: &request.retained,
                epochs: request.epochs,
            },
            "accuracy",
        )?;
        Ok(EvaluationResult { accuracy })
    }

    fn close(&mut self) -> Result<(), EvaluatorError> {
        if self.stdin.is_some() {
            // A child that already exited is judged by its status below.
            let _ = self.send(&WireRequest::Close);
            self.stdin = None;
        }
        let status = self.child.wait()?;
        if status.success() {
            Ok(())
        } else {
            Err(EvaluatorError::Exit(status.to_string()))
        }
    }
}

impl Drop for SubprocessEvaluator {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

#[derive(Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
enum ServerRequest {
    Init {
        model: PathBuf,
    },
    Evaluate {
        // Internally tagged enums cannot read integer map keys directly.
        retained: BTreeMap<String, Vec<u32>>,
        #[serde(default = "one")]
        epochs: u32,
    },
    Close,
}

fn one() -> u32 {
    1
}

fn parse_layer_keys(
    line: &str,
    retained: BTreeMap<String, Vec<u32>>,
) -> Result<BTreeMap<u32, Vec<u32>>, EvaluatorError> {
    retained
        .into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|id| (id, v))
                .map_err(|_| EvaluatorError::Malformed {
                    line: line.to_string(),
                    reason: format!("layer id {k:?} is not an integer"),
                })
        })
        .collect()
}

/// Serves the wire protocol on `input`/`output` until `close` or EOF.
///
/// `open` builds the evaluator from the model path in the `init` message.
/// A bad request is answered with `{"error": ...}` and ends the session
/// with an error.
pub fn serve<R, W, F>(input: R, mut output: W, mut open: F) -> Result<(), EvaluatorError>
where
    R: BufRead,
    W: Write,
    F: FnMut(&Path) -> Result<Box<dyn Evaluator>, EvaluatorError>,
{
    let mut evaluator: Option<Box<dyn Evaluator>> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<ServerRequest>(&line) {
            Err(e) => Err(EvaluatorError::Malformed {
                line: line.clone(),
                reason: e.to_string(),
            }),
            Ok(ServerRequest::Close) => {
                if let Some(mut ev) = evaluator.take() {
                    ev.close()?;
                }
                return Ok(());
            }
            Ok(ServerRequest::Init { model }) => open(&model).and_then(|mut ev| {
                let baseline = ev.init()?;
                evaluator = Some(ev);
                Ok(serde_json::json!({ "baseline_accuracy": baseline }))
            }),
            Ok(ServerRequest::Evaluate { retained, epochs }) => parse_layer_keys(&line, retained)
                .and_then(|retained| match evaluator.as_mut() {
                    None => Err(EvaluatorError::Remote("evaluate before init".into())),
                    Some(ev) => ev
                        .evaluate(&EvaluationRequest { retained, epochs })
                        .map(|r| serde_json::json!({ "accuracy": r.accuracy })),
                }),
        };
        match reply {
            Ok(value) => writeln!(output, "{value}")?,
            Err(e) => {
                writeln!(output, "{}", serde_json::json!({ "error": e.to_string() }))?;
                output.flush()?;
                return Err(e);
            }
        }
        output.flush()?;
    }
    Ok(())
}

/// Penalty applied when a layer's retention drops below `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub weight: f64,
    pub threshold: f64,
}

/// Accuracy model `baseline − Σ_k weight_k·max(0, threshold_k − R_k)`,
/// clamped to [0, 1], where `R_k` is layer k's retained fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub baseline: f64,
    #[serde(default)]
    pub penalties: BTreeMap<u32, Penalty>,
}

impl SyntheticSpec {
    pub fn zero_penalty(baseline: f64) -> Self {
        SyntheticSpec {
            baseline,
            penalties: BTreeMap::new(),
        }
    }
}

/// In-process evaluator implementing [`SyntheticSpec`].
#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    spec: SyntheticSpec,
    widths: BTreeMap<u32, usize>,
    calls: usize,
}

impl SyntheticEvaluator {
    pub fn new(spec: SyntheticSpec, manifest: &ModelManifest) -> Self {
        SyntheticEvaluator {
            spec,
            widths: manifest
                .layers
                .iter()
                .map(|l| (l.id, l.num_filters))
                .collect(),
            calls: 0,
        }
    }

    /// Number of `evaluate` calls so far.
    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn accuracy(&self, retained: &BTreeMap<u32, Vec<u32>>) -> f64 {
        let loss: f64 = self
            .spec
            .penalties
            .iter()
            .map(|(id, p)| {
                let width = self.widths.get(id).copied().unwrap_or(0);
                let kept = retained.get(id).map_or(width, Vec::len);
                let r = if width == 0 {
                    1.0
                } else {
                    kept as f64 / width as f64
                };
                p.weight * (p.threshold - r).max(0.0)
            })
            .sum();
        (self.spec.baseline - loss).clamp(0.0, 1.0)
    }
}

impl Evaluator for SyntheticEvaluator {
    fn init(&mut self) -> Result<f64, EvaluatorError> {
        Ok(self.spec.baseline)
    }

    fn evaluate(
        &mut self,
        request: &EvaluationRequest,
    ) -> Result<EvaluationResult, EvaluatorError> {
        self.calls += 1;
        Ok(EvaluationResult {
            accuracy: self.accuracy(&request.retained),
        })
    }
}
