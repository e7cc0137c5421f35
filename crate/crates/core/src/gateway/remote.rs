//! Out-of-process models speaking line-delimited JSON over a pipe.
//!
//! Each request is one JSON object on one line with an `op` field
//! (`info`, `predict`, `embed`, `grad_start`, `start_probs`); each response
//! is one line holding either the result fields or `{"error": ...}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::unified::UnifiedRecord;
use crate::error::{Error, Result};
use crate::types::RCInstance;

use super::{ModelGateway, SpanScores};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Info,
    Predict {
        instance: UnifiedRecord,
    },
    Embed {
        instance: UnifiedRecord,
    },
    GradStart {
        instance: UnifiedRecord,
        embeddings: Vec<Vec<f64>>,
        target: usize,
    },
    StartProbs {
        instance: UnifiedRecord,
        embeddings: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Info {
    pub model_id: String,
    pub baseline_token: String,
    pub max_answer_len: usize,
    pub concurrent_safe: bool,
    pub gradients: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Response {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    info: Option<Info>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gradient: Option<Vec<Vec<f64>>>,
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> std::result::Result<Array2<f64>, String> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err("ragged matrix".into());
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| e.to_string())
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A model hosted by a child process. Calls are serialized.
pub struct RemoteGateway {
    info: Info,
    pipe: Mutex<Pipe>,
}

impl RemoteGateway {
    /// Start `program args...` and query its model description.
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidInput("empty remote model command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::InvalidInput(format!("cannot start remote model {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut gw = Self {
            info: Info::default(),
            pipe: Mutex::new(Pipe { child, stdin, stdout }),
        };
        let resp = gw.call(&Request::Info, "-")?;
        gw.info = resp
            .info
            .ok_or_else(|| Error::Internal("remote model sent no info".into()))?;
        Ok(gw)
    }

    fn call(&self, req: &Request, instance_id: &str) -> Result<Response> {
        let fail = |m: String| Error::Gateway {
            model_id: self.info.model_id.clone(),
            instance_id: instance_id.to_string(),
            message: m,
        };
        let mut pipe = self.pipe.lock().map_err(|_| fail("remote pipe poisoned".into()))?;
        let mut line = serde_json::to_string(req).map_err(|e| fail(e.to_string()))?;
        line.push('\n');
        pipe.stdin
            .write_all(line.as_bytes())
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| fail(format!("write failed: {e}")))?;
        let mut answer = String::new();
        let n = pipe.stdout.read_line(&mut answer).map_err(|e| fail(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(fail("remote model closed its output".into()));
        }
        let resp: Response = serde_json::from_str(&answer).map_err(|e| fail(format!("bad response: {e}")))?;
        match resp.error {
            Some(e) if e.starts_with("capability:") => Err(Error::Capability {
                model_id: self.info.model_id.clone(),
                capability: capability_name(e.trim_start_matches("capability:").trim()),
            }),
            Some(e) => Err(fail(e)),
            None => Ok(resp),
        }
    }

    pub fn info(&self) -> &Info {
        &self.info
    }
}

fn capability_name(s: &str) -> &'static str {
    match s {
        "embed" => "embed",
        "grad_start" => "grad_start",
        "start_probs_at" => "start_probs_at",
        _ => "remote capability",
    }
}

impl Drop for RemoteGateway {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}

impl ModelGateway for RemoteGateway {
    fn model_id(&self) -> &str {
        &self.info.model_id
    }

    fn concurrent_safe(&self) -> bool {
        false
    }

    fn baseline_token(&self) -> &str {
        &self.info.baseline_token
    }

    fn max_answer_len(&self) -> usize {
        self.info.max_answer_len
    }

    fn supports_gradients(&self) -> bool {
        self.info.gradients
    }

    fn scores(&self, instance: &RCInstance) -> Result<SpanScores> {
        let r = self.call(
            &Request::Predict {
                instance: UnifiedRecord::from_instance(instance),
            },
            &instance.id,
        )?;
        match (r.start_scores, r.end_scores) {
            (Some(start_scores), Some(end_scores)) => Ok(SpanScores { start_scores, end_scores }),
            _ => Err(self.protocol(instance, "predict response lacks scores")),
        }
    }

    fn embed(&self, instance: &RCInstance) -> Result<Array2<f64>> {
        let r = self.call(
            &Request::Embed {
                instance: UnifiedRecord::from_instance(instance),
            },
            &instance.id,
        )?;
        let rows = r.embeddings.ok_or_else(|| self.protocol(instance, "embed response lacks embeddings"))?;
        from_rows(rows).map_err(|m| self.protocol(instance, &m))
    }

    fn grad_start(&self, instance: &RCInstance, embeddings: &Array2<f64>, target: usize) -> Result<Array2<f64>> {
        let r = self.call(
            &Request::GradStart {
                instance: UnifiedRecord::from_instance(instance),
                embeddings: to_rows(embeddings),
                target,
            },
            &instance.id,
        )?;
        let rows = r.gradient.ok_or_else(|| self.protocol(instance, "grad_start response lacks gradient"))?;
        from_rows(rows).map_err(|m| self.protocol(instance, &m))
    }

    fn start_probs_at(&self, instance: &RCInstance, embeddings: &Array2<f64>) -> Result<Vec<f64>> {
        let r = self.call(
            &Request::StartProbs {
                instance: UnifiedRecord::from_instance(instance),
                embeddings: to_rows(embeddings),
            },
            &instance.id,
        )?;
        r.start_scores.ok_or_else(|| self.protocol(instance, "start_probs response lacks scores"))
    }
}

impl RemoteGateway {
    fn protocol(&self, instance: &RCInstance, m: &str) -> Error {
        Error::Gateway {
            model_id: self.info.model_id.clone(),
            instance_id: instance.id.clone(),
            message: m.to_string(),
        }
    }
}

fn handle(gateway: &dyn ModelGateway, req: Request) -> Response {
    let instance = |rec: &UnifiedRecord| {
        rec.to_instance_unchecked()
            .map_err(|p| format!("bad instance {}: {p:?}", rec.id))
    };
    let error = |e: Error| match e {
        Error::Capability { capability, .. } => format!("capability: {capability}"),
        other => other.to_string(),
    };
    let result: std::result::Result<Response, String> = (|| match req {
        Request::Info => Ok(Response {
            info: Some(Info {
                model_id: gateway.model_id().to_string(),
                baseline_token: gateway.baseline_token().to_string(),
                max_answer_len: gateway.max_answer_len(),
                concurrent_safe: gateway.concurrent_safe(),
                gradients: gateway.supports_gradients(),
            }),
            ..Default::default()
        }),
        Request::Predict { instance: rec } => {
            let s = gateway.scores(&instance(&rec)?).map_err(error)?;
            Ok(Response {
                start_scores: Some(s.start_scores),
                end_scores: Some(s.end_scores),
                ..Default::default()
            })
        }
        Request::Embed { instance: rec } => {
            let e = gateway.embed(&instance(&rec)?).map_err(error)?;
            Ok(Response {
                embeddings: Some(to_rows(&e)),
                ..Default::default()
            })
        }
        Request::GradStart {
            instance: rec,
            embeddings,
            target,
        } => {
            let e = from_rows(embeddings)?;
            let g = gateway.grad_start(&instance(&rec)?, &e, target).map_err(error)?;
            Ok(Response {
                gradient: Some(to_rows(&g)),
                ..Default::default()
            })
        }
        Request::StartProbs { instance: rec, embeddings } => {
            let e = from_rows(embeddings)?;
            let p = gateway.start_probs_at(&instance(&rec)?, &e).map_err(error)?;
            Ok(Response {
                start_scores: Some(p),
                ..Default::default()
            })
        }
    })();
    result.unwrap_or_else(|e| Response {
        error: Some(e),
        ..Default::default()
    })
}

/// Answer requests from `input` until it closes.
pub fn serve<R: BufRead, W: Write>(gateway: &dyn ModelGateway, input: R, mut output: W) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => handle(gateway, req),
            Err(e) => Response {
                error: Some(format!("bad request: {e}")),
                ..Default::default()
            },
        };
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
