//! Deterministic loss impairment: a UDP forwarding proxy that drops each
//! datagram independently with a configured probability, driven by a seeded
//! generator so a run can be replayed drop-for-drop.
//!
//! A user-space proxy (rather than kernel queue disciplines) keeps the
//! mechanism portable and the drop pattern a pure function of the seed and
//! the packet sequence.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImpairError {
    #[error("loss probability must be within [0, 1], got {0}")]
    BadLossProbability(f64),
    #[error("proxy i/o: {0}")]
    Io(#[from] io::Error),
}

/// Counters published by a running proxy.
#[derive(Debug, Default)]
pub struct ProxyStats {
    pub received: AtomicU64,
    pub forwarded: AtomicU64,
    pub dropped: AtomicU64,
}

/// A running impairment proxy; dropping the handle stops it.
pub struct ImpairProxy {
    listen_addr: SocketAddr,
    stats: Arc<ProxyStats>,
    shutdown: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl ImpairProxy {
    /// Binds `listen` and forwards each received datagram to `forward`
    /// unless the seeded uniform draw falls below `loss_p`. Draws are made
    /// once per received packet, in arrival order, so a fixed seed and
    /// packet sequence reproduce the exact drop pattern.
    pub fn spawn(
        listen: SocketAddr,
        forward: SocketAddr,
        loss_p: f64,
        seed: u64,
    ) -> Result<Self, ImpairError> {
        if !(0.0..=1.0).contains(&loss_p) || !loss_p.is_finite() {
            return Err(ImpairError::BadLossProbability(loss_p));
        }
        let socket = UdpSocket::bind(listen)?;
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        let listen_addr = socket.local_addr()?;

        let stats = Arc::new(ProxyStats::default());
        let shutdown = Arc::new(AtomicBool::new(false));
        let worker_stats = Arc::clone(&stats);
        let worker_shutdown = Arc::clone(&shutdown);

        let worker = thread::Builder::new()
            .name("impair-proxy".to_owned())
            .spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut buf = vec![0u8; 65536];
                while !worker_shutdown.load(Ordering::Relaxed) {
                    let len = match socket.recv_from(&mut buf) {
                        Ok((len, _)) => len,
                        Err(e)
                            if e.kind() == io::ErrorKind::WouldBlock
                                || e.kind() == io::ErrorKind::TimedOut =>
                        {
                            continue;
                        }
                        Err(_) => break,
                    };
                    worker_stats.received.fetch_add(1, Ordering::Relaxed);
                    if rng.random::<f64>() < loss_p {
                        worker_stats.dropped.fetch_add(1, Ordering::Relaxed);
                        continue;
                    }
                    // Fire-and-forget: send errors are not fatal to the proxy.
                    if socket.send_to(&buf[..len], forward).is_ok() {
                        worker_stats.forwarded.fetch_add(1, Ordering::Relaxed);
                    }
                }
            })
            .expect("spawn proxy thread");

        Ok(Self {
            listen_addr,
            stats,
            shutdown,
            worker: Some(worker),
        })
    }

    /// The actual bound listen address (resolves port 0).
    pub fn listen_addr(&self) -> SocketAddr {
        self.listen_addr
    }

    pub fn stats(&self) -> &ProxyStats {
        &self.stats
    }

    /// Stops the worker and waits for it to exit.
    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for ImpairProxy {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

/// Computes the drop decisions a proxy with this seed would make for the
/// next `count` packets: `true` means drop. Useful for replaying or
/// predicting a run without sockets.
pub fn drop_pattern(seed: u64, loss_p: f64, count: usize) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random::<f64>() < loss_p).collect()
}
