use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use yoho_service::{router, AppState};

#[derive(Parser)]
#[command(name = "yoho-service", version, about = "HTTP service for single-image segmentation runs")]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    host: std::net::IpAddr,
    /// Where runs and their records are stored.
    #[arg(long, default_value = "runs")]
    output_root: PathBuf,
    /// Allowed CORS origin for the annotation UI (any when omitted).
    #[arg(long)]
    cors_origin: Option<String>,
}

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let state = match AppState::start(&args.output_root) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(3);
        }
    };
    log::info!("{} runs listed from {}", state.list().len(), args.output_root.display());
    let app = router(state, args.cors_origin.as_deref());
    let addr = SocketAddr::new(args.host, args.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot bind {addr}: {e}");
            std::process::exit(3);
        }
    };
    log::info!("listening on {addr}");
    if let Err(e) = axum::serve(listener, app).await {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
