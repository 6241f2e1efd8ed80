use clap::Parser;
use stlut_server::{AppState, ModelCache};

/// Enhancement service over HTTP/JSON.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, env = "STLUT_BIND", default_value = stlut_api::DEFAULT_ADDR)]
    bind: String,
    /// Weight files kept in memory.
    #[arg(long, default_value_t = 8)]
    cached_models: usize,
    /// LUT sets kept in memory. Each default set is a few hundred MB.
    #[arg(long, default_value_t = 2)]
    cached_luts: usize,
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let listener = match tokio::net::TcpListener::bind(&args.bind).await {
        Ok(l) => l,
        Err(e) => {
            tracing::error!("cannot bind {}: {e}", args.bind);
            return std::process::ExitCode::from(2);
        }
    };
    tracing::info!("listening on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or(args.bind));
    let state = AppState::new(ModelCache::new(args.cached_models, args.cached_luts));
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    let app = stlut_server::router(state);
    match axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("server failed: {e}");
            std::process::ExitCode::from(2)
        }
    }
}
