//! Per-client transports.

use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use ler_core::command::InputSource;
use ler_core::service::wire::error_line;
use ler_core::service::Inbound;
use tungstenite::{Message, WebSocket};

use crate::sim::ToLoop;

/// Error code for messages that are not a well-formed inbound message.
pub const MALFORMED: &str = "MalformedMessage";

/// How long a silent new connection may take before it is treated as a raw
/// stream client. Browsers send their upgrade request at once.
const SNIFF_TIMEOUT: Duration = Duration::from_millis(200);
const WS_POLL: Duration = Duration::from_millis(5);

pub(crate) fn handle(id: u64, stream: TcpStream, peer: SocketAddr, to_loop: Sender<ToLoop>) {
    let result = stream
        .set_nonblocking(false)
        .and_then(|_| stream.set_nodelay(true))
        .and_then(|_| opens_with_get(&stream))
        .and_then(|ws| {
            if ws {
                websocket(id, stream, &to_loop)
            } else {
                raw(id, stream, &to_loop)
            }
        });
    if let Err(e) = result {
        log::warn!("client {peer}: {e}");
    }
    let _ = to_loop.send(ToLoop::Leave(id));
}

fn opens_with_get(stream: &TcpStream) -> io::Result<bool> {
    stream.set_read_timeout(Some(SNIFF_TIMEOUT))?;
    let start = Instant::now();
    let mut buf = [0u8; 4];
    let result = loop {
        match stream.peek(&mut buf) {
            Ok(0) => break Ok(false),
            Ok(n) if n >= 4 || buf[..n] != b"GET "[..n] => break Ok(&buf[..n] == b"GET "),
            Ok(_) if start.elapsed() >= SNIFF_TIMEOUT => break Ok(false),
            Ok(_) => thread::sleep(Duration::from_millis(1)),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                break Ok(false)
            }
            Err(e) => break Err(e),
        }
    };
    stream.set_read_timeout(None)?;
    result
}

/// Parses one inbound line and forwards it, or answers with an error.
fn dispatch_line(id: u64, text: &str, to_loop: &Sender<ToLoop>, reply: &Sender<String>) {
    let text = text.trim_end_matches('\r');
    if text.trim().is_empty() {
        return;
    }
    match parse_input(text) {
        Ok((source, line)) => {
            let _ = to_loop.send(ToLoop::Input(id, source, line));
        }
        Err(detail) => {
            let _ = reply.send(error_line(MALFORMED, &detail));
        }
    }
}

fn parse_input(text: &str) -> Result<(InputSource, String), String> {
    let Inbound::Input { source, line } = Inbound::parse(text)?;
    // recorded lines must fit one row of a scenario script
    if line.chars().any(char::is_control) {
        return Err("input line contains control characters".into());
    }
    Ok((source, line))
}

fn raw(id: u64, stream: TcpStream, to_loop: &Sender<ToLoop>) -> io::Result<()> {
    let (tx, rx) = mpsc::channel();
    let mut writer = stream.try_clone()?;
    to_loop
        .send(ToLoop::Join(id, tx.clone()))
        .map_err(|_| closed())?;
    thread::spawn(move || {
        for line in rx {
            if writer
                .write_all(line.as_bytes())
                .and_then(|_| writer.write_all(b"\n"))
                .is_err()
            {
                break;
            }
        }
        let _ = writer.shutdown(Shutdown::Both);
    });
    for line in BufReader::new(stream).lines() {
        match line {
            Ok(line) => dispatch_line(id, &line, to_loop, &tx),
            Err(e) if e.kind() == ErrorKind::InvalidData => {
                let _ = tx.send(error_line(MALFORMED, "message is not valid UTF-8"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn websocket(id: u64, stream: TcpStream, to_loop: &Sender<ToLoop>) -> io::Result<()> {
    let mut ws = tungstenite::accept(stream)
        .map_err(|e| io::Error::other(format!("websocket handshake: {e}")))?;
    ws.get_ref().set_read_timeout(Some(WS_POLL))?;
    let (tx, rx) = mpsc::channel();
    to_loop
        .send(ToLoop::Join(id, tx.clone()))
        .map_err(|_| closed())?;
    loop {
        if !forward(&mut ws, &rx)? {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                for line in text.as_str().split('\n') {
                    dispatch_line(id, line, to_loop, &tx);
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = tx.send(error_line(MALFORMED, "binary frames are not supported"));
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(io::Error::other(e)),
        }
    }
}

/// Sends queued lines; false once the session has dropped this client.
fn forward(ws: &mut WebSocket<TcpStream>, rx: &Receiver<String>) -> io::Result<bool> {
    loop {
        match rx.try_recv() {
            Ok(line) => ws.write(Message::text(line)).map_err(io::Error::other)?,
            Err(TryRecvError::Empty) => break,
            Err(TryRecvError::Disconnected) => return Ok(false),
        }
    }
    match ws.flush() {
        Ok(()) => Ok(true),
        Err(tungstenite::Error::Io(e))
            if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) =>
        {
            Ok(true)
        }
        Err(e) => Err(io::Error::other(e)),
    }
}

fn closed() -> io::Error {
    io::Error::new(ErrorKind::NotConnected, "session has stopped")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inbound_validation() {
        assert_eq!(
            parse_input(r#"{"type":"input","source":"VOICE","line":"left"}"#),
            Ok((InputSource::Voice, "left".to_string()))
        );
        assert!(parse_input("left").is_err());
        assert!(parse_input(r#"{"type":"input","source":"HEADSET","line":"left"}"#).is_err());
        assert!(parse_input(r#"{"type":"input","source":"VOICE","line":"le\tft"}"#).is_err());
        assert!(parse_input(r#"{"type":"input","source":"VOICE"}"#).is_err());
    }
}
