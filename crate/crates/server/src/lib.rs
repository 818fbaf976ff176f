//! Live steering server.
//!
//! One simulation thread owns the [`Session`] and advances it on a wall-clock
//! tick. Clients connect over TCP and speak newline-delimited JSON, either
//! raw or inside WebSocket text frames (the same port accepts both; a
//! connection that opens with an HTTP `GET` is upgraded). Inputs from every
//! client funnel into one queue and are stamped with the tick at which the
//! loop drains them; that stamping is the only nondeterministic step, and
//! the [`SessionLog`] returned on shutdown records it so the run can be
//! replayed exactly.
//!
//! ```no_run
//! use ler_server::{serve, ServerConfig};
//!
//! let handle = serve(ServerConfig::new("127.0.0.1:7878")).unwrap();
//! println!("listening on {}", handle.addr());
//! // ... clients steer the robot ...
//! let log = handle.shutdown();
//! std::fs::write("session.log", log.to_text()).unwrap();
//! ```

mod conn;
mod sim;

use std::io;
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use ler_core::scene::SceneDescription;
use ler_core::service::{Session, SessionConfig, SessionConfigError, SessionLog};
use thiserror::Error;

pub use conn::MALFORMED;
pub use sim::hello_line;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error(transparent)]
    Config(#[from] SessionConfigError),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Anything `ToSocketAddrs` accepts, e.g. `127.0.0.1:7878` or `[::]:0`.
    pub listen: String,
    pub session: SessionConfig,
    /// Sent to clients in the greeting so they can draw the set-up.
    pub scene: Option<SceneDescription>,
    /// Wall-clock duration of one tick; the controller's `dt_ms` when unset.
    pub tick_period: Option<Duration>,
}

impl ServerConfig {
    pub fn new(listen: impl Into<String>) -> Self {
        ServerConfig {
            listen: listen.into(),
            session: SessionConfig::default(),
            scene: None,
            tick_period: None,
        }
    }
}

/// Cloneable flag that stops a running server.
#[derive(Debug, Clone)]
pub struct Stopper(Arc<AtomicBool>);

impl Stopper {
    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stopper: Stopper,
    sim: JoinHandle<SessionLog>,
    accept: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stopper(&self) -> Stopper {
        self.stopper.clone()
    }

    /// Stops the server and returns the log of everything it simulated.
    pub fn shutdown(self) -> SessionLog {
        self.stopper.stop();
        self.join()
    }

    /// Waits until some [`Stopper`] stops the server.
    pub fn join(self) -> SessionLog {
        let log = self.sim.join().expect("simulation thread panicked");
        self.accept.join().expect("accept thread panicked");
        log
    }
}

/// Binds the endpoint and starts the simulation and accept threads.
pub fn serve(config: ServerConfig) -> Result<ServerHandle, ServeError> {
    let session = Session::new(config.session.clone())?;
    let bind_err = |source| ServeError::Bind {
        addr: config.listen.clone(),
        source,
    };
    let addrs: Vec<SocketAddr> = config.listen.to_socket_addrs().map_err(bind_err)?.collect();
    let listener = TcpListener::bind(&addrs[..]).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    let addr = listener.local_addr().map_err(bind_err)?;

    let stopper = Stopper(Arc::new(AtomicBool::new(false)));
    let period = config.tick_period.unwrap_or(Duration::from_millis(
        config.session.controller.dt_ms as u64,
    ));
    let (to_loop, inbox) = mpsc::channel();
    let hello = sim::Greeting {
        scene: config.scene.clone(),
    };
    let sim = {
        let stopper = stopper.clone();
        thread::Builder::new()
            .name("ler-sim".into())
            .spawn(move || sim::run(session, hello, inbox, stopper, period))
            .expect("spawn simulation thread")
    };
    let accept = {
        let stopper = stopper.clone();
        thread::Builder::new()
            .name("ler-accept".into())
            .spawn(move || accept_loop(listener, to_loop, stopper))
            .expect("spawn accept thread")
    };
    Ok(ServerHandle {
        addr,
        stopper,
        sim,
        accept,
    })
}

fn accept_loop(listener: TcpListener, to_loop: mpsc::Sender<sim::ToLoop>, stopper: Stopper) {
    let mut next_id = 0u64;
    while !stopper.is_stopped() {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                let to_loop = to_loop.clone();
                let spawned = thread::Builder::new()
                    .name(format!("ler-client-{id}"))
                    .spawn(move || conn::handle(id, stream, peer, to_loop));
                if let Err(e) = spawned {
                    log::warn!("client {peer}: cannot start connection thread: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5))
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}
