//! WebSocket gateway for the engine.
//!
//! Every connection feeds one bounded queue in front of a single engine
//! thread. The engine's output is fanned out to all clients through a
//! broadcast channel; a client that falls behind by more than its buffer is
//! disconnected. New clients first receive a snapshot taken on the engine
//! thread, so nothing is missed between the snapshot and the live stream.

use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::sync::{broadcast, mpsc as tmpsc, oneshot};

use ditto_core::proxemics::Millis;
use ditto_core::runtime::Engine;
use ditto_core::wire::{Inbound, Outbound};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Server wall clock; inbound timestamps are replaced on arrival.
    Live,
    /// Client timestamps drive the clock.
    Lockstep,
}

impl std::str::FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(ClockMode::Live),
            "lockstep" => Ok(ClockMode::Lockstep),
            other => Err(format!("unknown mode {other:?}; expected live or lockstep")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub mode: ClockMode,
    pub queue_capacity: usize,
    pub client_buffer: usize,
    pub heartbeat: Duration,
}

impl GatewayOptions {
    pub fn from_config(config: &ditto_core::config::DittoConfig, mode: ClockMode) -> Self {
        Self {
            mode,
            queue_capacity: config.gateway.queue_capacity,
            client_buffer: config.gateway.client_buffer,
            heartbeat: Duration::from_millis(config.gateway.heartbeat_ms),
        }
    }
}

type Frame = Arc<str>;

enum Command {
    Inbound {
        msg: Inbound,
        reply: tmpsc::UnboundedSender<Frame>,
    },
    Subscribe {
        reply: oneshot::Sender<(Frame, broadcast::Receiver<Frame>)>,
    },
    Heartbeat,
    Shutdown,
}

/// What the engine thread hands back when it stops.
pub struct Finished {
    pub engine: Engine,
    /// Every inbound message in processing order, with the timestamps the
    /// engine saw.
    pub inputs: Vec<Inbound>,
}

pub struct Gateway {
    queue: SyncSender<Command>,
    engine_thread: Option<JoinHandle<Finished>>,
    heartbeat_thread: Option<JoinHandle<()>>,
}

fn frame(msg: &Outbound) -> Frame {
    Arc::from(msg.to_json())
}

impl Gateway {
    pub fn start(engine: Engine, options: GatewayOptions) -> Self {
        let (queue, rx) = mpsc::sync_channel(options.queue_capacity);
        let mode = options.mode;
        let buffer = options.client_buffer;
        let engine_thread = std::thread::Builder::new()
            .name("ditto-engine".into())
            .spawn(move || engine_loop(engine, rx, mode, buffer))
            .expect("spawn engine thread");
        let heartbeat_thread = (mode == ClockMode::Live).then(|| {
            let q = queue.clone();
            let every = options.heartbeat;
            std::thread::Builder::new()
                .name("ditto-heartbeat".into())
                .spawn(move || loop {
                    std::thread::sleep(every);
                    match q.try_send(Command::Heartbeat) {
                        Ok(()) | Err(TrySendError::Full(_)) => {}
                        Err(TrySendError::Disconnected(_)) => break,
                    }
                })
                .expect("spawn heartbeat thread")
        });
        Self {
            queue,
            engine_thread: Some(engine_thread),
            heartbeat_thread,
        }
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/ws", get(upgrade))
            .route("/health", get(|| async { "ok" }))
            .with_state(self.queue.clone())
    }

    /// Serves the router on `listener` until `shutdown` resolves.
    pub async fn serve(
        &self,
        listener: tokio::net::TcpListener,
        shutdown: impl std::future::Future<Output = ()> + Send + 'static,
    ) -> std::io::Result<()> {
        axum::serve(listener, self.router()).with_graceful_shutdown(shutdown).await
    }

    /// Stops the engine thread and returns its final state.
    pub fn stop(mut self) -> Finished {
        let _ = self.queue.send(Command::Shutdown);
        let finished = self
            .engine_thread
            .take()
            .expect("engine thread present")
            .join()
            .expect("engine thread panicked");
        drop(self.queue);
        if let Some(h) = self.heartbeat_thread.take() {
            let _ = h.join();
        }
        finished
    }
}

fn engine_loop(mut engine: Engine, rx: Receiver<Command>, mode: ClockMode, buffer: usize) -> Finished {
    let (out, _) = broadcast::channel::<Frame>(buffer);
    let started = Instant::now();
    let base = engine.clock();
    let now = || base + started.elapsed().as_millis() as Millis;
    let mut inputs = Vec::new();
    let publish = |engine: &mut Engine| {
        for msg in engine.take_outbound() {
            let _ = out.send(frame(&msg));
        }
    };
    while let Ok(cmd) = rx.recv() {
        match cmd {
            Command::Inbound { msg, reply } => {
                let msg = match mode {
                    ClockMode::Live => msg.with_ts(now().max(engine.clock())),
                    ClockMode::Lockstep => msg,
                };
                inputs.push(msg.clone());
                if let Err(e) = engine.submit(msg) {
                    let _ = reply.send(frame(&Outbound::error(e.code(), e.to_string())));
                }
                publish(&mut engine);
            }
            Command::Subscribe { reply } => {
                publish(&mut engine);
                let _ = reply.send((frame(&engine.snapshot()), out.subscribe()));
            }
            Command::Heartbeat => {
                if let Err(e) = engine.advance_to(now()) {
                    tracing::warn!("heartbeat: {e}");
                }
                publish(&mut engine);
            }
            Command::Shutdown => break,
        }
    }
    Finished { engine, inputs }
}

async fn upgrade(ws: WebSocketUpgrade, State(queue): State<SyncSender<Command>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, queue))
}

async fn subscribe(queue: &SyncSender<Command>) -> Option<(Frame, broadcast::Receiver<Frame>)> {
    loop {
        let (tx, rx) = oneshot::channel();
        match queue.try_send(Command::Subscribe { reply: tx }) {
            Ok(()) => return rx.await.ok(),
            Err(TrySendError::Full(_)) => tokio::time::sleep(Duration::from_millis(5)).await,
            Err(TrySendError::Disconnected(_)) => return None,
        }
    }
}

async fn client(socket: WebSocket, queue: SyncSender<Command>) {
    let (mut sink, mut stream) = socket.split();
    let Some((snapshot, mut feed)) = subscribe(&queue).await else {
        return;
    };
    if sink.send(Message::Text(snapshot.as_ref().into())).await.is_err() {
        return;
    }
    let (direct_tx, mut direct) = tmpsc::unbounded_channel::<Frame>();
    loop {
        let text: Frame = tokio::select! {
            item = feed.recv() => match item {
                Ok(f) => f,
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::info!("dropping slow client ({n} messages behind)");
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(f) = direct.recv() => f,
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(t))) => match Inbound::parse(t.as_str()) {
                    Ok(msg) => match queue.try_send(Command::Inbound { msg, reply: direct_tx.clone() }) {
                        Ok(()) => continue,
                        Err(TrySendError::Full(_)) => frame(&Outbound::Error {
                            code: "queue_full".into(),
                            detail: "engine queue is full; resend later".into(),
                            retry: true,
                        }),
                        Err(TrySendError::Disconnected(_)) => break,
                    },
                    Err(e) => frame(&e.to_outbound()),
                },
                Some(Ok(Message::Binary(_))) => frame(&Outbound::error("malformed", "binary frames are not supported")),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => continue,
            },
        };
        if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
            break;
        }
    }
}
