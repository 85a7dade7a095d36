//! WebSocket host for live sessions. Each connection gets an I/O thread
//! (the accepting one) and a tick thread that owns the [`Session`]; events
//! reach the tick loop through a bounded [`EventQueue`], and messages go
//! back through a bounded channel on which frames are dropped when full.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TryRecvError, TrySendError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Result};
use rtiac::actions::{ActionEvent, EventQueue, Payload};
use rtiac::learner::ParametricEstimator;
use rtiac::session::{LogWriter, ModelRef};
use rtiac::wire::{ClientHello, MessageKind, ServerHello, WireMessage, PROTOCOL_VERSION};
use rtiac::{EngineKind, LanguageModel, Session, SessionConfig};
use tungstenite::{Message, WebSocket};

/// Outgoing messages buffered per connection.
const OUT_CAPACITY: usize = 8;
const HELLO_TIMEOUT: Duration = Duration::from_secs(30);
const POLL: Duration = Duration::from_millis(2);

pub struct Options {
    pub model: Arc<dyn LanguageModel>,
    pub model_path: PathBuf,
    pub estimator: Option<ParametricEstimator>,
    pub base: SessionConfig,
    pub log_dir: Option<PathBuf>,
}

pub fn run(listener: TcpListener, opts: Arc<Options>) -> Result<()> {
    let addr = listener.local_addr()?;
    println!("listening on ws://{addr}");
    // tests read the port from this line
    std::io::Write::flush(&mut std::io::stdout())?;
    let counter = AtomicU64::new(0);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let id = session_id(counter.fetch_add(1, Ordering::Relaxed));
        let opts = opts.clone();
        thread::spawn(move || {
            if let Err(e) = connection(stream, &opts, &id) {
                log::warn!("session {id}: {e:#}");
            }
        });
    }
    Ok(())
}

fn session_id(n: u64) -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("{secs}-{n}")
}

/// Restamps `seq` so it is gapless over what actually reaches the client.
struct Outbox {
    ws: WebSocket<TcpStream>,
    seq: u64,
}

impl Outbox {
    fn send(&mut self, mut m: WireMessage) -> Result<()> {
        m.seq = self.seq;
        self.seq += 1;
        self.ws.write(Message::text(m.to_json()))?;
        Ok(())
    }

    fn fail(&mut self, t_ms: f64, message: String) -> Result<()> {
        log::warn!("closing connection: {message}");
        self.send(WireMessage::error(0, t_ms, message))?;
        self.ws.flush()?;
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
        Ok(())
    }
}

fn read_text(ws: &mut WebSocket<TcpStream>) -> Result<Option<String>> {
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => return Ok(Some(t.as_str().to_owned())),
            Ok(Message::Binary(_)) => return Err(anyhow!("binary frames are not part of the protocol")),
            Ok(Message::Close(_)) => return Ok(None),
            Ok(_) => continue,
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                return Err(anyhow!("timed out"))
            }
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
    }
}

fn connection(stream: TcpStream, opts: &Options, id: &str) -> Result<()> {
    stream.set_nodelay(true)?;
    let ws = tungstenite::accept(stream.try_clone()?).map_err(|e| anyhow!("handshake: {e}"))?;
    let mut out = Outbox { ws, seq: 0 };
    stream.set_read_timeout(Some(HELLO_TIMEOUT))?;
    let hello = match read_text(&mut out.ws) {
        Ok(Some(t)) => t,
        Ok(None) => return Ok(()),
        Err(e) => return out.fail(0.0, format!("no hello: {e}")),
    };
    let hello: ClientHello = match serde_json::from_str::<WireMessage>(&hello) {
        Ok(m) if m.kind == MessageKind::Hello => match serde_json::from_value(m.body) {
            Ok(h) => h,
            Err(e) => return out.fail(0.0, format!("malformed hello body: {e}")),
        },
        Ok(m) => return out.fail(0.0, format!("expected hello, got {:?}", m.kind)),
        Err(e) => return out.fail(0.0, format!("malformed message: {e}")),
    };
    if hello.version != PROTOCOL_VERSION {
        return out.fail(0.0, format!("protocol version {} unsupported; server speaks {PROTOCOL_VERSION}", hello.version));
    }

    let mut cfg = opts.base.clone();
    cfg.layout = hello.layout.unwrap_or(cfg.layout);
    cfg.engine = hello.engine.unwrap_or(cfg.engine);
    if let Some(t) = hello.threshold {
        cfg.belief.threshold = t;
    }
    let est = if cfg.engine == EngineKind::Rtiac { opts.estimator.clone() } else { None };
    let mut session = match Session::new(opts.model.clone(), cfg.clone(), est) {
        Ok(s) => s,
        Err(e) => return out.fail(0.0, format!("rejected configuration: {e}")),
    };
    session.set_training(hello.training.clone());
    if let Some(dir) = &opts.log_dir {
        let (w, path) = LogWriter::in_dir(dir, id)?;
        session.start_log(w, ModelRef::of_file(&opts.model_path)?)?;
        log::info!("session {id}: logging to {}", path.display());
    }
    let alphabet = opts.model.alphabet();
    let body = ServerHello {
        version: PROTOCOL_VERSION,
        session: id.to_string(),
        alphabet: alphabet.symbols().to_vec(),
        terminator: alphabet.terminator(),
        tick_rate: cfg.tick_rate,
        engine: cfg.engine.to_string(),
        layout: cfg.layout,
    };
    out.send(WireMessage::new(MessageKind::Hello, 0, 0.0, body))?;
    out.ws.flush()?;
    log::info!("session {id}: {} {} at {} Hz", cfg.engine, cfg.layout, cfg.tick_rate);

    stream.set_read_timeout(Some(POLL))?;
    let shared = Arc::new(Shared::default());
    let (tx, rx) = sync_channel(OUT_CAPACITY);
    let start = Instant::now();
    let ticker = {
        let shared = shared.clone();
        thread::spawn(move || tick_loop(session, &shared, tx, start))
    };
    let result = io_loop(&mut out, &shared, &rx, start);
    shared.gone.store(true, Ordering::Relaxed);
    let stats = ticker.join().map_err(|_| anyhow!("tick thread panicked"))?;
    log::info!(
        "session {id}: ended ({}), {} frames sent, {} dropped, {} events dropped",
        stats.reason,
        stats.frames,
        stats.dropped_frames,
        shared.events.dropped()
    );
    result
}

#[derive(Default)]
struct Shared {
    events: EventQueue,
    /// The client sent `end`.
    end: AtomicBool,
    /// The connection is gone or broken.
    gone: AtomicBool,
}

struct TickStats {
    frames: u64,
    dropped_frames: u64,
    reason: String,
}

fn tick_loop(mut s: Session, shared: &Shared, tx: SyncSender<WireMessage>, start: Instant) -> TickStats {
    let mut stats = TickStats { frames: 0, dropped_frames: 0, reason: String::new() };
    let dt = Duration::from_secs_f64(s.dt());
    let finish = |s: &mut Session, stats: &mut TickStats, reason: &str| {
        stats.reason = s.end_reason().unwrap_or(reason).to_string();
    };
    loop {
        let deadline = start + dt * (s.tick() as u32 + 1);
        if let Some(wait) = deadline.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        if shared.gone.load(Ordering::Relaxed) {
            let _ = s.close("disconnected");
            finish(&mut s, &mut stats, "disconnected");
            return stats;
        }
        if shared.end.load(Ordering::Relaxed) {
            match s.client_end() {
                Ok(Some(m)) => {
                    let _ = tx.send(m);
                }
                Ok(None) => {}
                Err(e) => {
                    let _ = tx.send(WireMessage::error(0, s.now() * 1000.0, e.to_string()));
                }
            }
            finish(&mut s, &mut stats, "client");
            return stats;
        }
        let step = (|| -> rtiac::Result<Vec<WireMessage>> {
            for e in shared.events.drain() {
                s.push_event(e)?;
            }
            s.advance()
        })();
        let msgs = match step {
            Ok(m) => m,
            Err(e) => {
                let _ = tx.send(WireMessage::error(0, s.now() * 1000.0, e.to_string()));
                let _ = s.close("error");
                finish(&mut s, &mut stats, "error");
                return stats;
            }
        };
        // commits and the end are never dropped
        for m in msgs {
            if tx.send(m).is_err() {
                finish(&mut s, &mut stats, "disconnected");
                return stats;
            }
        }
        if s.is_closed() {
            finish(&mut s, &mut stats, "closed");
            return stats;
        }
        match tx.try_send(s.frame_message()) {
            Ok(()) => stats.frames += 1,
            Err(TrySendError::Full(_)) => stats.dropped_frames += 1,
            Err(TrySendError::Disconnected(_)) => {
                finish(&mut s, &mut stats, "disconnected");
                return stats;
            }
        }
    }
}

fn io_loop(out: &mut Outbox, shared: &Shared, rx: &Receiver<WireMessage>, start: Instant) -> Result<()> {
    let now_ms = || start.elapsed().as_secs_f64() * 1000.0;
    loop {
        let mut finished = false;
        loop {
            match rx.try_recv() {
                Ok(m) => {
                    let last = matches!(m.kind, MessageKind::End | MessageKind::Error);
                    out.send(m)?;
                    if last {
                        finished = true;
                        break;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    finished = true;
                    break;
                }
            }
        }
        out.ws.flush()?;
        if finished {
            let _ = out.ws.close(None);
            let _ = out.ws.flush();
            return Ok(());
        }
        match out.ws.read() {
            Ok(Message::Text(t)) => {
                let m: WireMessage = match serde_json::from_str(t.as_str()) {
                    Ok(m) => m,
                    Err(e) => return out.fail(now_ms(), format!("malformed message: {e}")),
                };
                match m.kind {
                    MessageKind::Event => match serde_json::from_value::<Payload>(m.body) {
                        // events are stamped on arrival; the client's t_ms is advisory
                        Ok(p) => shared.events.push(ActionEvent { t: start.elapsed().as_secs_f64(), payload: p }),
                        Err(e) => return out.fail(now_ms(), format!("malformed event {}: {e}", m.seq)),
                    },
                    MessageKind::End => shared.end.store(true, Ordering::Relaxed),
                    k => return out.fail(now_ms(), format!("unexpected {k:?} from client")),
                }
            }
            Ok(Message::Binary(_)) => return out.fail(now_ms(), "binary frames are not part of the protocol".into()),
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}
