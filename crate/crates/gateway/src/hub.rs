//! The command queue. One thread owns the [`Service`]; every request is a
//! job on its queue, so mutations are totally ordered no matter how many
//! clients are connected.

use std::thread;

use domus_core::home::SimTime;
use domus_core::service::{Command, Notification, Reply, Service};
use tokio::sync::{broadcast, mpsc, oneshot, watch};

const QUEUE: usize = 1024;
const STREAM_BUFFER: usize = 4096;

struct Job {
    command: Command,
    reply: oneshot::Sender<Reply>,
}

/// Generation and clock seen after the latest command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observed {
    pub generation: u64,
    pub now: SimTime,
}

#[derive(Clone)]
pub struct Hub {
    jobs: mpsc::Sender<Job>,
    events: broadcast::Sender<Notification>,
    observed: watch::Receiver<Observed>,
}

#[derive(Debug, thiserror::Error)]
#[error("the command loop has stopped")]
pub struct Stopped;

impl Hub {
    /// Moves `service` onto its own thread. The thread ends, closing the
    /// service, once every handle is dropped.
    pub fn start(mut service: Service) -> Hub {
        let (jobs, mut rx) = mpsc::channel::<Job>(QUEUE);
        let (events, _) = broadcast::channel(STREAM_BUFFER);
        let first = Observed { generation: service.engine().registry().generation(), now: service.engine().now() };
        let (seen, observed) = watch::channel(first);
        let out = events.clone();
        thread::Builder::new()
            .name("domus-engine".into())
            .spawn(move || {
                while let Some(job) = rx.blocking_recv() {
                    let reply = service.execute(job.command);
                    if let Some(e) = reply.error() {
                        tracing::debug!(code = ?e.code, reason = %e.reason, "command refused");
                    }
                    seen.send_replace(Observed { generation: reply.generation, now: reply.now });
                    for n in service.drain_notifications() {
                        // no subscribers is fine
                        let _ = out.send(n);
                    }
                    let _ = job.reply.send(reply);
                }
            })
            .expect("spawn engine thread");
        Hub { jobs, events, observed }
    }

    pub async fn call(&self, command: Command) -> Result<Reply, Stopped> {
        let (reply, rx) = oneshot::channel();
        self.jobs.send(Job { command, reply }).await.map_err(|_| Stopped)?;
        rx.await.map_err(|_| Stopped)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Notification> {
        self.events.subscribe()
    }

    pub fn observed(&self) -> Observed {
        *self.observed.borrow()
    }
}
