//! HTTP API and command-line front end over `reverso-core`.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod state;

pub use api::router;
pub use error::ApiError;
pub use state::AppState;
