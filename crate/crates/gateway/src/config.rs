//! Command line, environment overrides and startup checks.

use std::fs;
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use clap::Parser;
use domus_core::home::{Catalog, CatalogError};
use domus_core::interpreter::ClockMode;
use domus_core::scenario::Scenario;
use domus_core::service::{OpenError, ServiceConfig};
use thiserror::Error;
use tokio::net::TcpListener;

/// Clock mode as written on the command line: `simulated`, `realtime` or
/// `accelerated:<factor>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockArg(pub ClockMode);

impl FromStr for ClockArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mode = match s.split_once(':') {
            None if s == "simulated" => ClockMode::Simulated,
            None if s == "realtime" => ClockMode::Realtime,
            None if s == "accelerated" => ClockMode::Accelerated { factor: 60 },
            Some(("accelerated", f)) => match f.parse::<u32>() {
                Ok(factor) if factor > 0 => ClockMode::Accelerated { factor },
                _ => return Err(format!("bad acceleration factor {f:?}")),
            },
            _ => return Err(format!("unknown clock mode {s:?}; use simulated, realtime or accelerated:<factor>")),
        };
        Ok(ClockArg(mode))
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "domus", version, about = "Home automation gateway over a simulated home")]
pub struct Args {
    #[arg(long, env = "DOMUS_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "DOMUS_HOST", default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,
    /// Directory holding the program store and the trace log.
    #[arg(long, env = "DOMUS_STATE_DIR", default_value = "domus-state")]
    pub state_dir: PathBuf,
    /// Device catalog in TOML; the built-in catalog when absent.
    #[arg(long, env = "DOMUS_CATALOG")]
    pub catalog: Option<PathBuf>,
    /// Scenario (JSON lines) loaded paused at startup.
    #[arg(long, env = "DOMUS_SCENARIO")]
    pub scenario: Option<PathBuf>,
    #[arg(long, env = "DOMUS_CLOCK_MODE", default_value = "simulated")]
    pub clock_mode: ClockArg,
    /// Tracing filter, e.g. `info` or `domus_gateway=debug`.
    #[arg(long, env = "DOMUS_LOG_LEVEL", default_value = "info")]
    pub log_level: String,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("cannot read catalog {path}: {source}")]
    CatalogRead { path: PathBuf, source: io::Error },
    #[error("catalog {path}: {source}")]
    Catalog { path: PathBuf, source: CatalogError },
    #[error("cannot read scenario {path}: {source}")]
    ScenarioRead { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Scenario { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Open(#[from] OpenError),
    #[error("port {port} is already in use")]
    PortBusy { port: u16 },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
}

impl Args {
    pub fn catalog(&self) -> Result<Catalog, StartupError> {
        let Some(path) = &self.catalog else { return Ok(Catalog::builtin()) };
        let text = fs::read_to_string(path).map_err(|source| StartupError::CatalogRead { path: path.clone(), source })?;
        Catalog::from_toml_str(&text).map_err(|source| StartupError::Catalog { path: path.clone(), source })
    }

    /// Everything the service needs, checked before any port is taken.
    pub fn service_config(&self) -> Result<ServiceConfig, StartupError> {
        let catalog = Arc::new(self.catalog()?);
        let scenario = match &self.scenario {
            None => None,
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| StartupError::ScenarioRead { path: path.clone(), source })?;
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
                let s = Scenario::parse(&name, &text, &catalog)
                    .map_err(|e| StartupError::Scenario { path: path.clone(), line: e.line, message: e.message })?;
                Some(s)
            }
        };
        let mut config = ServiceConfig::new(catalog);
        config.state_dir = Some(self.state_dir.clone());
        config.clock_mode = self.clock_mode.0;
        config.paused = scenario.is_some();
        config.scenario = scenario;
        config.stamp_wall = true;
        Ok(config)
    }

    pub async fn bind(&self) -> Result<TcpListener, StartupError> {
        let addr = SocketAddr::new(self.host, self.port);
        TcpListener::bind(addr).await.map_err(|source| match source.kind() {
            io::ErrorKind::AddrInUse => StartupError::PortBusy { port: self.port },
            _ => StartupError::Bind { addr, source },
        })
    }
}
