//! The simulation thread.

use std::collections::BTreeMap;
use std::sync::mpsc::{Receiver, Sender, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use ler_core::command::InputSource;
use ler_core::scene::SceneDescription;
use ler_core::service::{Recorder, Session, SessionConfig, SessionLog, ARTIFACT_VERSION};
use serde_json::json;

use crate::Stopper;

pub(crate) enum ToLoop {
    Join(u64, Sender<String>),
    Leave(u64),
    Input(u64, InputSource, String),
}

pub(crate) struct Greeting {
    pub scene: Option<SceneDescription>,
}

/// First message on every connection: the full session configuration, the
/// scene (or `null`) and the tick the client joined at.
pub fn hello_line(tick: u64, config: &SessionConfig, scene: Option<&SceneDescription>) -> String {
    json!({
        "type": "header",
        "version": ARTIFACT_VERSION,
        "tick": tick,
        "config": config,
        "scene": scene,
    })
    .to_string()
}

pub(crate) fn run(
    mut session: Session,
    greeting: Greeting,
    inbox: Receiver<ToLoop>,
    stopper: Stopper,
    period: Duration,
) -> SessionLog {
    let mut recorder = Recorder::new(session.config().clone());
    let mut clients: BTreeMap<u64, Sender<String>> = BTreeMap::new();
    let mut deadline = Instant::now();
    while !stopper.is_stopped() {
        loop {
            match inbox.try_recv() {
                Ok(ToLoop::Join(id, tx)) => {
                    let hello =
                        hello_line(session.tick(), session.config(), greeting.scene.as_ref());
                    if tx.send(hello).is_ok() {
                        clients.insert(id, tx);
                    }
                }
                Ok(ToLoop::Leave(id)) => {
                    clients.remove(&id);
                }
                Ok(ToLoop::Input(id, source, line)) => {
                    let tick = session.tick();
                    recorder.input(tick, source, &line);
                    let reply = session
                        .submit(source, &line)
                        .reply_line(tick, source, &line);
                    if let Some(tx) = clients.get(&id) {
                        if tx.send(reply).is_err() {
                            clients.remove(&id);
                        }
                    }
                }
                Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
            }
        }
        if let Some(frame) = session.advance() {
            let line = frame.to_json_line();
            clients.retain(|_, tx| tx.send(line.clone()).is_ok());
            recorder.telemetry(line);
        }
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else if now - deadline > Duration::from_secs(1) {
            log::warn!(
                "simulation fell {:?} behind the wall clock; resynchronizing",
                now - deadline
            );
            deadline = now;
        }
    }
    recorder.finish(session.tick())
}
