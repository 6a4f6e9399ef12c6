//! Client for external model servers speaking newline-delimited JSON over stdio.
//!
//! ```text
//! → {"op":"hello","version":1}                      ← {"ok":true,"name":"<id>"}
//! → {"op":"fit","columns":[{"name":..,"categories":[..]}],
//!    "rows":[[..text..]],"target_classes":[..],"labels":[..]}  ← {"ok":true}
//! → {"op":"predict","rows":[[..numbers..]]}         ← {"ok":true,"probs":[[..]|null]}
//! → {"op":"shutdown"}                               ← {"ok":true}
//! ```
//!
//! Any `{"ok":false,"error":..}` reply fails the current call. A server holds
//! one fitted context at a time, so the client keeps a pool of server
//! processes and re-sends the fit message whenever a pooled process last saw
//! a different context. Floats are written in shortest round-trip form.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::data::Matrix;

use super::{ContextTable, FittedModel, ModelBackend, ModelError, ProbaRows};

pub mod protocol {
    use serde::{Deserialize, Serialize};

    use crate::data::FeatureDef;

    pub const VERSION: u32 = 1;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(tag = "op", rename_all = "lowercase")]
    pub enum Request {
        Hello {
            version: u32,
        },
        Fit {
            columns: Vec<FeatureDef>,
            rows: Vec<Vec<String>>,
            target_classes: Vec<String>,
            labels: Vec<String>,
        },
        Predict {
            rows: Vec<Vec<f64>>,
        },
        Shutdown,
    }

    #[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
    pub struct Response {
        pub ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub error: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub probs: Option<Vec<Option<Vec<f64>>>>,
    }

    impl Response {
        pub fn ok() -> Self {
            Response {
                ok: true,
                ..Default::default()
            }
        }

        pub fn hello(name: impl Into<String>) -> Self {
            Response {
                ok: true,
                name: Some(name.into()),
                ..Default::default()
            }
        }

        pub fn probs(probs: Vec<Option<Vec<f64>>>) -> Self {
            Response {
                ok: true,
                probs: Some(probs),
                ..Default::default()
            }
        }

        pub fn error(message: impl Into<String>) -> Self {
            Response {
                ok: false,
                error: Some(message.into()),
                ..Default::default()
            }
        }
    }
}

use protocol::{Request, Response};

struct Connection {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    fitted: Option<u64>,
}

impl Connection {
    fn spawn(command: &str) -> Result<Self, ModelError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::Transport(format!("cannot start {command:?}: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Connection {
            child,
            stdin,
            stdout,
            fitted: None,
        })
    }

    fn call_line(&mut self, line: &str) -> Result<Response, ModelError> {
        let io = |e: std::io::Error| ModelError::Transport(e.to_string());
        self.stdin.write_all(line.as_bytes()).map_err(io)?;
        self.stdin.write_all(b"\n").map_err(io)?;
        self.stdin.flush().map_err(io)?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply).map_err(io)? == 0 {
            return Err(ModelError::Transport("server closed the connection".into()));
        }
        let response: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| ModelError::Transport(format!("malformed response {reply:?}: {e}")))?;
        if !response.ok {
            return Err(ModelError::Remote(
                response.error.unwrap_or_else(|| "unspecified error".into()),
            ));
        }
        Ok(response)
    }

    fn call(&mut self, request: &Request) -> Result<Response, ModelError> {
        let line = serde_json::to_string(request).expect("requests serialize");
        self.call_line(&line)
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        let polite = self.call(&Request::Shutdown).is_ok();
        if !polite {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

struct Shared {
    command: String,
    name: String,
    pool: Mutex<Vec<Connection>>,
    next_fit_id: AtomicU64,
    fits_sent: AtomicU64,
}

impl Shared {
    fn checkout(&self) -> Result<Connection, ModelError> {
        if let Some(conn) = self.pool.lock().expect("pool lock").pop() {
            return Ok(conn);
        }
        let mut conn = Connection::spawn(&self.command)?;
        handshake(&mut conn)?;
        Ok(conn)
    }

    fn checkin(&self, conn: Connection) {
        self.pool.lock().expect("pool lock").push(conn);
    }

    fn ensure_fitted(&self, conn: &mut Connection, fit_id: u64, fit_line: &str) -> Result<(), ModelError> {
        if conn.fitted != Some(fit_id) {
            conn.fitted = None;
            conn.call_line(fit_line)?;
            conn.fitted = Some(fit_id);
            self.fits_sent.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }
}

fn handshake(conn: &mut Connection) -> Result<String, ModelError> {
    let reply = conn.call(&Request::Hello {
        version: protocol::VERSION,
    })?;
    Ok(reply.name.unwrap_or_else(|| "bridge".into()))
}

/// A [`ModelBackend`] backed by a spawned server process (run through `sh -c`).
pub struct BridgeBackend {
    shared: Arc<Shared>,
}

impl BridgeBackend {
    /// Starts one server and performs the handshake. More processes are
    /// started on demand when predictions run concurrently.
    pub fn connect(command: impl Into<String>) -> Result<Self, ModelError> {
        let command = command.into();
        let mut conn = Connection::spawn(&command)?;
        let name = handshake(&mut conn)?;
        Ok(BridgeBackend {
            shared: Arc::new(Shared {
                command,
                name,
                pool: Mutex::new(vec![conn]),
                next_fit_id: AtomicU64::new(0),
                fits_sent: AtomicU64::new(0),
            }),
        })
    }

    /// Name the server reported in its handshake.
    pub fn server_name(&self) -> &str {
        &self.shared.name
    }

    /// Fit messages actually sent, including re-fits of pooled processes.
    pub fn fits_sent(&self) -> u64 {
        self.shared.fits_sent.load(Ordering::Relaxed)
    }

    pub fn pool_size(&self) -> usize {
        self.shared.pool.lock().expect("pool lock").len()
    }
}

impl ModelBackend for BridgeBackend {
    fn id(&self) -> String {
        self.shared.name.clone()
    }

    fn fit_context(&self, context: &ContextTable) -> Result<Box<dyn FittedModel>, ModelError> {
        let target = context.target();
        let classes = context.seen_classes();
        let request = Request::Fit {
            columns: context.features().universe().features().to_vec(),
            rows: context.features().text_rows(),
            target_classes: classes.iter().map(|&c| target.categories[c as usize].clone()).collect(),
            labels: context
                .labels()
                .iter()
                .map(|&c| target.categories[c as usize].clone())
                .collect(),
        };
        let fit_line = Arc::new(serde_json::to_string(&request).expect("requests serialize"));
        let fit_id = self.shared.next_fit_id.fetch_add(1, Ordering::Relaxed);
        let mut conn = self.shared.checkout()?;
        self.shared.ensure_fitted(&mut conn, fit_id, &fit_line)?;
        self.shared.checkin(conn);
        Ok(Box::new(BridgeFitted {
            shared: Arc::clone(&self.shared),
            fit_line,
            fit_id,
            classes,
            width: context.features().universe().m(),
        }))
    }
}

struct BridgeFitted {
    shared: Arc<Shared>,
    fit_line: Arc<String>,
    fit_id: u64,
    classes: Vec<u32>,
    width: usize,
}

impl FittedModel for BridgeFitted {
    fn classes(&self) -> &[u32] {
        &self.classes
    }

    fn width(&self) -> usize {
        self.width
    }

    fn predict_proba(&self, probes: &Matrix) -> Result<ProbaRows, ModelError> {
        if probes.cols() != self.width {
            return Err(ModelError::WidthMismatch {
                expected: self.width,
                found: probes.cols(),
            });
        }
        // A failed connection is dropped rather than returned to the pool.
        let mut conn = self.shared.checkout()?;
        self.shared.ensure_fitted(&mut conn, self.fit_id, &self.fit_line)?;
        let reply = conn.call(&Request::Predict { rows: probes.to_rows() })?;
        self.shared.checkin(conn);
        let probs = reply
            .probs
            .ok_or_else(|| ModelError::Transport("predict response without probs".into()))?;
        if probs.len() != probes.rows() {
            return Err(ModelError::Transport(format!(
                "{} distributions for {} probes",
                probs.len(),
                probes.rows()
            )));
        }
        Ok(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::protocol::*;

    #[test]
    fn request_wire_format() {
        let hello = serde_json::to_string(&Request::Hello { version: 1 }).unwrap();
        assert_eq!(hello, r#"{"op":"hello","version":1}"#);
        assert_eq!(
            serde_json::to_string(&Request::Shutdown).unwrap(),
            r#"{"op":"shutdown"}"#
        );
        let p = serde_json::to_string(&Request::Predict {
            rows: vec![vec![1.0, 0.0, 0.5]],
        })
        .unwrap();
        assert_eq!(p, r#"{"op":"predict","rows":[[1.0,0.0,0.5]]}"#);
    }

    #[test]
    fn response_wire_format() {
        assert_eq!(serde_json::to_string(&Response::ok()).unwrap(), r#"{"ok":true}"#);
        assert_eq!(
            serde_json::to_string(&Response::error("not fitted")).unwrap(),
            r#"{"ok":false,"error":"not fitted"}"#
        );
        let r: Response = serde_json::from_str(r#"{"ok":true,"probs":[[0.25,0.75],null]}"#).unwrap();
        assert_eq!(r.probs, Some(vec![Some(vec![0.25, 0.75]), None]));
    }

    #[test]
    fn floats_round_trip_exactly() {
        let v = vec![1.0 / 3.0, 2.0 / 3.0, 0.1 + 0.2];
        let s = serde_json::to_string(&Request::Predict { rows: vec![v.clone()] }).unwrap();
        match serde_json::from_str::<Request>(&s).unwrap() {
            Request::Predict { rows } => assert_eq!(rows[0], v),
            _ => unreachable!(),
        }
    }
}
