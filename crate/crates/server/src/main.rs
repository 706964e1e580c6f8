use std::net::SocketAddr;
use std::path::PathBuf;

use blendforge_core::io::RunLog;
use blendforge_server::{router, AppState};
use clap::Parser;

/// Blend planning HTTP service.
#[derive(Debug, Parser)]
#[command(name = "blendforge-server", version)]
struct Args {
    /// Port to listen on.
    #[arg(long, env = "BLENDFORGE_PORT", default_value_t = 8080)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Optimizations allowed to run at once; defaults to the CPU count.
    #[arg(long)]
    workers: Option<usize>,
    /// Append a record of every finished run to this file.
    #[arg(long)]
    runlog: Option<PathBuf>,
}

#[tokio::main]
async fn main() {
    let args = Args::parse();
    let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let runlog = match args.runlog.map(RunLog::open).transpose() {
        Ok(log) => log,
        Err(e) => {
            eprintln!("blendforge-server: {e}");
            std::process::exit(3);
        }
    };
    let addr = SocketAddr::new(args.host, args.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("blendforge-server: cannot bind {addr}: {e}");
            std::process::exit(3);
        }
    };
    eprintln!("blendforge-server listening on {addr} with {workers} workers");
    let app = router(AppState::new(workers, runlog));
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
        eprintln!("blendforge-server: {e}");
        std::process::exit(3);
    }
}
