//! HTTP and event-stream gateway over henry sessions, plus the pieces the
//! `henry` CLI is built from.

mod api;
mod error;
pub mod repl;
mod sessions;

pub use api::router;
pub use error::ApiError;
pub use sessions::{Gateway, GatewayConfig, SessionHandle};

/// Serves `gateway` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    gateway: std::sync::Arc<Gateway>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway)).with_graceful_shutdown(shutdown).await
}
