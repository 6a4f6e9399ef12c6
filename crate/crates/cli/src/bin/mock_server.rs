//! Model server speaking the stdio bridge protocol, answering with the exact
//! empirical estimator. Used to exercise the bridge end to end.
//!
//! Flags: `--name <id>` (handshake name, default `empirical`), `--alpha <a>`,
//! `--fail-on <op>` (reply `{"ok":false}` to that op) and `--exit-on <op>`
//! (exit without replying to that op).

use std::io::{BufRead, Write};

use arl::data::{Dataset, FeatureDef, ItemUniverse, Matrix};
use arl::model::bridge::protocol::{Request, Response, VERSION};
use arl::model::{ContextTable, EmpiricalBackend, FittedModel, ModelBackend};
use clap::Parser;

#[derive(Parser, Debug)]
struct Opts {
    #[arg(long, default_value = "empirical")]
    name: String,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long)]
    fail_on: Option<String>,
    #[arg(long)]
    exit_on: Option<String>,
}

fn op_name(req: &Request) -> &'static str {
    match req {
        Request::Hello { .. } => "hello",
        Request::Fit { .. } => "fit",
        Request::Predict { .. } => "predict",
        Request::Shutdown => "shutdown",
    }
}

fn fit(backend: &EmpiricalBackend, req: Request) -> Result<Box<dyn FittedModel>, String> {
    let Request::Fit {
        columns,
        rows,
        target_classes,
        labels,
    } = req
    else {
        unreachable!("fit called with another op");
    };
    let universe = ItemUniverse::new(columns).map_err(|e| e.to_string())?;
    let features = Dataset::from_text_rows_in(universe, &rows).map_err(|e| e.to_string())?;
    let target = FeatureDef::new("target", target_classes).map_err(|e| e.to_string())?;
    let labels = labels
        .iter()
        .map(|l| {
            target
                .category_index(l)
                .map(|c| c as u32)
                .ok_or_else(|| format!("label {l:?} is not a target class"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ctx = ContextTable::new(features, target, labels).map_err(|e| e.to_string())?;
    backend.fit_context(&ctx).map_err(|e| e.to_string())
}

fn main() {
    let opts = Opts::parse();
    let backend = match EmpiricalBackend::new(opts.alpha) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    let mut fitted: Option<Box<dyn FittedModel>> = None;

    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => Response::error(format!("malformed request: {e}")),
            Ok(req) => {
                let op = op_name(&req);
                if opts.exit_on.as_deref() == Some(op) {
                    std::process::exit(0);
                }
                if opts.fail_on.as_deref() == Some(op) {
                    Response::error(format!("injected failure on {op}"))
                } else {
                    match req {
                        Request::Hello { version } if version != VERSION => {
                            Response::error(format!("unsupported protocol version {version}"))
                        }
                        Request::Hello { .. } => Response::hello(opts.name.clone()),
                        Request::Fit { .. } => match fit(&backend, req) {
                            Ok(m) => {
                                fitted = Some(m);
                                Response::ok()
                            }
                            Err(e) => {
                                fitted = None;
                                Response::error(e)
                            }
                        },
                        Request::Predict { rows } => match &fitted {
                            None => Response::error("not fitted"),
                            Some(m) => match Matrix::from_rows(&rows, m.width()) {
                                None => Response::error("ragged probe rows"),
                                Some(q) => match m.predict_proba(&q) {
                                    Ok(p) => Response::probs(p),
                                    Err(e) => Response::error(e.to_string()),
                                },
                            },
                        },
                        Request::Shutdown => {
                            let _ = writeln!(stdout, "{}", serde_json::to_string(&Response::ok()).unwrap());
                            let _ = stdout.flush();
                            return;
                        }
                    }
                }
            }
        };
        let text = serde_json::to_string(&response).expect("responses serialize");
        if writeln!(stdout, "{text}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
}
