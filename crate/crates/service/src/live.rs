//! Live render channel.
//!
//! Clients send `{"seq": n, "patches": {...}, "seed": s}` (optionally
//! `"format"`). The server answers with either
//! `{"seq": n, "format": "ppm", "image": "<base64>", "render_ms": t}` or
//! `{"seq": n, "error": <ValidationReport or body error>}`.
//!
//! Per session only the newest pending request is rendered; older pending
//! requests are dropped when a newer one arrives. Replies leave in
//! non-decreasing `seq` order: a reply older than one already sent is
//! discarded.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket};
use base64::Engine as _;
use futures_util::{Sink, SinkExt, Stream, StreamExt};
use netbend_core::RenderError;
use serde::Serialize;
use serde_json::Value;
use tokio::sync::{mpsc, Notify};

use crate::{parse_job, AppState, BodyError, RenderJob};

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Reply {
    Image {
        seq: u64,
        format: netbend_core::ImageFormat,
        image: String,
        render_ms: f64,
    },
    Error {
        seq: Option<u64>,
        error: Value,
    },
}

impl Reply {
    fn seq(&self) -> Option<u64> {
        match self {
            Reply::Image { seq, .. } => Some(*seq),
            Reply::Error { seq, .. } => *seq,
        }
    }
}

struct Pending {
    seq: u64,
    job: RenderJob,
}

enum Incoming {
    Render(Pending),
    Reject(Reply),
}

fn error_reply(seq: Option<u64>, error: impl Serialize) -> Reply {
    Reply::Error {
        seq,
        error: serde_json::to_value(error).expect("errors serialize"),
    }
}

fn parse_message(text: &str, state: &AppState) -> Incoming {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            return Incoming::Reject(error_reply(
                None,
                BodyError::new("parse_error", e.to_string()),
            ))
        }
    };
    let Some(obj) = value.as_object() else {
        return Incoming::Reject(error_reply(
            None,
            BodyError::new("bad_type", "message must be a JSON object"),
        ));
    };
    let Some(seq) = obj.get("seq").and_then(Value::as_u64) else {
        return Incoming::Reject(error_reply(
            None,
            BodyError::new("missing_key", "message needs an unsigned integer \"seq\""),
        ));
    };
    let job = match parse_job(obj) {
        Ok(job) => job,
        Err(e) => return Incoming::Reject(error_reply(Some(seq), e)),
    };
    let report = job.patches.validate(state.engine().graph());
    if !report.is_ok() {
        return Incoming::Reject(error_reply(Some(seq), report));
    }
    Incoming::Render(Pending { seq, job })
}

/// Runs one session over any text transport until `incoming` ends.
pub async fn run_channel<I, O>(mut incoming: I, outgoing: O, state: AppState)
where
    I: Stream<Item = String> + Unpin,
    O: Sink<String> + Unpin + Send + 'static,
{
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<Reply>();
    let slot: Arc<Mutex<Option<Pending>>> = Arc::default();
    let wake = Arc::new(Notify::new());

    let writer = tokio::spawn(async move {
        let mut outgoing = outgoing;
        let mut last_sent: Option<u64> = None;
        while let Some(reply) = reply_rx.recv().await {
            if let Some(seq) = reply.seq() {
                if last_sent.is_some_and(|last| seq < last) {
                    continue;
                }
                last_sent = Some(seq);
            }
            let text = serde_json::to_string(&reply).expect("replies serialize");
            if outgoing.send(text).await.is_err() {
                break;
            }
        }
    });

    let closed = Arc::new(AtomicBool::new(false));
    let worker = {
        let (slot, wake, closed) = (slot.clone(), wake.clone(), closed.clone());
        let (state, reply_tx) = (state.clone(), reply_tx.clone());
        tokio::spawn(async move {
            loop {
                let next = slot.lock().unwrap().take();
                let Some(Pending { seq, job }) = next else {
                    if closed.load(Ordering::Acquire) {
                        return;
                    }
                    wake.notified().await;
                    continue;
                };
                let reply = match state.render(job).await {
                    Ok(r) => Reply::Image {
                        seq,
                        format: r.format,
                        image: base64::engine::general_purpose::STANDARD.encode(&r.bytes),
                        render_ms: r.render_ms,
                    },
                    Err(RenderError::Validation(report)) => error_reply(Some(seq), report),
                    Err(e) => error_reply(Some(seq), BodyError::new("render_failed", e.to_string())),
                };
                if reply_tx.send(reply).is_err() {
                    return;
                }
            }
        })
    };

    while let Some(text) = incoming.next().await {
        match parse_message(&text, &state) {
            Incoming::Render(p) => {
                *slot.lock().unwrap() = Some(p);
                wake.notify_one();
            }
            Incoming::Reject(reply) => {
                if let Some(seq) = reply.seq() {
                    let mut pending = slot.lock().unwrap();
                    if pending.as_ref().is_some_and(|p| p.seq < seq) {
                        *pending = None;
                    }
                }
                let _ = reply_tx.send(reply);
            }
        }
    }

    // The last accepted request still gets rendered and delivered.
    closed.store(true, Ordering::Release);
    wake.notify_one();
    drop(reply_tx);
    let _ = worker.await;
    let _ = writer.await;
}

pub async fn run_session(socket: WebSocket, state: AppState) {
    let (sink, stream) = socket.split();
    let incoming = stream
        .take_while(|m| std::future::ready(matches!(m, Ok(m) if !matches!(m, Message::Close(_)))))
        .filter_map(|m| async move {
            match m {
                Ok(Message::Text(t)) => Some(t.to_string()),
                _ => None,
            }
        });
    let outgoing = sink.with(|text: String| async move {
        Ok::<_, axum::Error>(Message::Text(text.into()))
    });
    run_channel(Box::pin(incoming), Box::pin(outgoing), state).await;
}
