//! HTTP gateway and command line for the docent toolkit.
//!
//! The service exposes live sessions, dataset jobs and the corpus over
//! REST; the `docent` binary wraps the same operations for batch use.

pub mod api;
pub mod cli;
pub mod config;
pub mod jobs;
pub mod state;

pub use api::{router, serve, ApiSession};
pub use config::{BackendConfig, GatewayConfig};
pub use state::AppState;
