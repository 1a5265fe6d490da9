//! WebSocket transport: one thread and one [`Session`] per connection.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use tungstenite::{Message, WebSocket};

use crate::error::{Error, Result};

use super::protocol::{encode_reply, Outgoing};
use super::session::Session;
use super::{ServerConfig, SourceRegistry};

/// Poll interval for control messages while a session is playing.
const PLAYING_POLL: Duration = Duration::from_millis(1);

pub struct Server {
    listener: TcpListener,
    registry: Arc<SourceRegistry>,
}

impl Server {
    pub fn bind(registry: impl Into<Arc<SourceRegistry>>, addr: &str) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Ok(Self {
            listener,
            registry: registry.into(),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until the listener fails.
    pub fn run(self) -> Result<()> {
        log::info!(
            "listening on ws://{} with sources {:?}",
            self.local_addr()?,
            self.registry.names().collect::<Vec<_>>()
        );
        for stream in self.listener.incoming() {
            let stream = stream?;
            let registry = Arc::clone(&self.registry);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = handle_connection(stream, registry) {
                    log::warn!("connection {peer:?} closed with error: {e}");
                }
            });
        }
        Ok(())
    }
}

/// Loads the configured sources and serves them on `listen`.
pub fn serve(config: &ServerConfig, listen: &str) -> Result<()> {
    Server::bind(SourceRegistry::from_config(config)?, listen)?.run()
}

fn ws_error(e: tungstenite::Error) -> Error {
    Error::Session(format!("websocket: {e}"))
}

fn send_all(ws: &mut WebSocket<TcpStream>, messages: Vec<Outgoing>) -> Result<()> {
    for m in messages {
        let msg = match m {
            Outgoing::Text(reply) => Message::Text(encode_reply(&reply)),
            Outgoing::Binary(frame) => Message::Binary(frame.encode()),
        };
        // blocks while the client is not reading: production pauses, nothing is dropped
        ws.write(msg).map_err(ws_error)?;
    }
    ws.flush().map_err(ws_error)
}

fn handle_connection(stream: TcpStream, registry: Arc<SourceRegistry>) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut ws =
        tungstenite::accept(stream).map_err(|e| Error::Session(format!("handshake: {e}")))?;
    let mut session = Session::new(registry);
    loop {
        let timeout = session.is_playing().then_some(PLAYING_POLL);
        ws.get_mut().set_read_timeout(timeout)?;
        // drain every pending control message before the next frame
        loop {
            match ws.read() {
                Ok(Message::Text(text)) => {
                    let replies = session.handle_text(&text);
                    send_all(&mut ws, replies)?;
                    ws.get_mut().set_read_timeout(Some(PLAYING_POLL))?;
                }
                Ok(Message::Binary(_)) => {
                    let reply = super::protocol::Reply::Error {
                        message: "binary messages are not accepted from clients".into(),
                    };
                    send_all(&mut ws, vec![Outgoing::Text(reply)])?;
                }
                Ok(Message::Close(_)) => return Ok(()),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) =>
                {
                    break
                }
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                    return Ok(())
                }
                Err(e) => return Err(ws_error(e)),
            }
        }
        if session.is_playing() {
            let frames = session.advance();
            send_all(&mut ws, frames)?;
        }
    }
}
