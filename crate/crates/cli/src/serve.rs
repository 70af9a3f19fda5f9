//! Local calibration service: static UI assets over HTTP and one WebSocket
//! endpoint at `/ws` carrying one JSON message per text frame.
//!
//! A session worker thread owns the pipeline and the session state. Client
//! commands reach it over a channel; its messages fan out to clients through
//! a bounded broadcast in which a slow client loses its oldest messages
//! instead of stalling frame processing.

use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use clap::Args;
use futures_util::{SinkExt, StreamExt};
use ocugaze::config::Config;
use ocugaze::imgproc::GrayFrame;
use ocugaze::pipeline::{FrameSource, HandoffQueue, Pipeline, HANDOFF_CAPACITY};
use ocugaze::session::{FrameEvent, Inbound, Mode, Outbound, SessionState};
use ocugaze::Error;
use tokio::sync::{broadcast, oneshot};
use tower_http::services::ServeDir;

use crate::commands::{build_pipeline, save_recording};
use crate::source::PacedLoop;
use crate::{source, CliResult, SourceArgs};

/// Messages a client may fall behind by before it starts losing the oldest.
pub const OUTBOUND_CAPACITY: usize = 256;

/// Interval between `stats` messages.
const STATS_INTERVAL_MS: u64 = 1000;

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Port on 127.0.0.1; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[command(flatten)]
    source: SourceArgs,
    /// Directory of static UI files served at `/`.
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Dataset CSV that completed calibrations are appended to.
    #[arg(long)]
    record_out: Option<PathBuf>,
    #[arg(long, default_value = "anonymous")]
    subject: String,
}

#[derive(Clone)]
struct AppState {
    inbound: mpsc::Sender<Inbound>,
    outbound: broadcast::Sender<String>,
}

pub fn router(inbound: mpsc::Sender<Inbound>, outbound: broadcast::Sender<String>, assets: Option<PathBuf>) -> Router {
    let app = Router::new().route("/ws", get(ws_upgrade)).with_state(AppState { inbound, outbound });
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let mut updates = state.outbound.subscribe();
    let forward = tokio::spawn(async move {
        loop {
            match updates.recv().await {
                Ok(text) => {
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("client fell behind; {n} messages dropped"),
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });
    while let Some(Ok(message)) = stream.next().await {
        match message {
            Message::Text(text) => {
                for line in text.as_str().lines().filter(|l| !l.trim().is_empty()) {
                    match Inbound::from_json(line) {
                        Ok(command) => {
                            if state.inbound.send(command).is_err() {
                                break;
                            }
                        }
                        Err(e) => log::warn!("ignoring client message: {e}"),
                    }
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    forward.abort();
}

/// Where finished calibrations are saved.
struct Recorder {
    out: PathBuf,
    subject: String,
}

struct Worker {
    pipeline: Pipeline,
    session: SessionState,
    inbound: mpsc::Receiver<Inbound>,
    outbound: broadcast::Sender<String>,
    recorder: Option<Recorder>,
    started: Instant,
    next_stats_ms: u64,
}

impl Worker {
    fn now_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn run(mut self, mut source: Box<dyn FrameSource>) -> CliResult {
        let queue = HandoffQueue::<GrayFrame>::new(HANDOFF_CAPACITY);
        let producer_queue = Arc::clone(&queue);
        let producer = std::thread::spawn(move || -> ocugaze::Result<()> {
            let result = loop {
                match source.next_frame() {
                    None => break Ok(()),
                    Some(Ok(frame)) => {
                        producer_queue.push(frame);
                    }
                    Some(Err(e)) => break Err(e),
                }
            };
            producer_queue.close();
            result
        });
        while let Some(frame) = queue.pop() {
            self.step(&frame)?;
        }
        producer.join().map_err(|_| Error::DeviceUnavailable("frame source thread panicked".into()))??;
        log::info!("session worker stopped; {} frames skipped at the handoff", queue.dropped());
        Ok(())
    }

    fn step(&mut self, frame: &GrayFrame) -> CliResult {
        let now = self.now_ms();
        while let Ok(command) = self.inbound.try_recv() {
            if command != Inbound::Stop {
                self.pipeline.reset();
            }
            match self.session.handle(&command, now) {
                Ok(messages) => self.publish(messages)?,
                Err(e) => log::warn!("rejected {command:?}: {e}"),
            }
        }
        let outcome = self.pipeline.process_frame(frame);
        let messages = self.session.tick(&FrameEvent::from(&outcome), now);
        self.publish(messages)?;
        if now >= self.next_stats_ms {
            self.next_stats_ms = now + STATS_INTERVAL_MS;
            self.publish(vec![Outbound::Stats(*self.pipeline.stats())])?;
        }
        Ok(())
    }

    fn publish(&mut self, messages: Vec<Outbound>) -> CliResult {
        for message in messages {
            if message == (Outbound::Stopped { mode: Mode::Calibrating }) {
                self.save_calibration()?;
            }
            // No subscribers is not an error: the UI may not be connected yet.
            let _ = self.outbound.send(message.to_json());
        }
        Ok(())
    }

    fn save_calibration(&mut self) -> CliResult {
        let recorded = self.session.take_recorded();
        let Some(recorder) = &self.recorder else { return Ok(()) };
        if recorded.is_empty() {
            log::warn!("calibration ended without captured instances");
            return Ok(());
        }
        let frame_rate = self.session.config().frame_rate;
        let meta = save_recording(&recorder.out, &recorded, None, &recorder.subject, frame_rate)?;
        log::info!("{}: appended {} instances to {}", meta.session_id, meta.rows, recorder.out.display());
        Ok(())
    }
}

pub fn serve(args: ServeArgs, config: Config) -> CliResult {
    let frames = source::open(&args.source)?;
    let pipeline = build_pipeline(&config, &args.model)?;
    let session = SessionState::new(config.session)?;
    let stop = Arc::new(AtomicBool::new(false));
    let frames = PacedLoop::new(frames, config.session.frame_rate, Arc::clone(&stop))?;

    let (outbound, _) = broadcast::channel(OUTBOUND_CAPACITY);
    let (inbound, commands) = mpsc::channel();
    let worker = Worker {
        pipeline,
        session,
        inbound: commands,
        outbound: outbound.clone(),
        recorder: args.record_out.map(|out| Recorder { out, subject: args.subject }),
        started: Instant::now(),
        next_stats_ms: 0,
    };

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, args.port))).await?;
        println!("listening on http://{}", listener.local_addr()?);

        let (done_tx, done_rx) = oneshot::channel();
        let handle = std::thread::spawn(move || {
            let result = worker.run(Box::new(frames));
            let _ = done_tx.send(());
            result
        });
        let shutdown = async move {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = done_rx => {}
            }
        };
        axum::serve(listener, router(inbound, outbound, args.assets)).with_graceful_shutdown(shutdown).await?;
        stop.store(true, Ordering::Relaxed);
        handle.join().map_err(|_| Error::DeviceUnavailable("session worker panicked".into()))?
    })
}
