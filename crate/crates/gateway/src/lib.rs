//! HTTP and server-sent-events gateway over a [`domus_core::service::Service`].
//!
//! All requests, reads included, go through the [`hub::Hub`] command queue.
//! The HTTP surface is documented in `docs/api.md`.

pub mod config;
pub mod hub;
pub mod routes;

use std::future::Future;
use std::time::{Duration, Instant};

use domus_core::service::{Command, Service};
use tokio::net::TcpListener;

pub use config::{Args, StartupError};
pub use hub::Hub;
pub use routes::router;

/// How often wall time is fed to the clock in accelerated and realtime modes.
pub const TICK: Duration = Duration::from_millis(100);

/// Feeds elapsed wall time to the service until the hub stops.
pub async fn tick(hub: Hub, period: Duration) {
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut last = Instant::now();
    loop {
        interval.tick().await;
        let now = Instant::now();
        let elapsed_ms = now.duration_since(last).as_millis() as u64;
        if elapsed_ms == 0 {
            continue;
        }
        last = now;
        if hub.call(Command::Tick { elapsed_ms }).await.is_err() {
            return;
        }
    }
}

/// Serves `service` on `listener` until `shutdown` completes.
pub async fn serve(listener: TcpListener, service: Service, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let hub = Hub::start(service);
    let ticker = tokio::spawn(tick(hub.clone(), TICK));
    let result = axum::serve(listener, router(hub)).with_graceful_shutdown(shutdown).await;
    ticker.abort();
    result
}
