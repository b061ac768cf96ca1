//! HTTP session service and command-line front end for `backdrop-core`.

pub mod server;

pub use server::{router, AppState};
