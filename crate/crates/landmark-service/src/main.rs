use std::net::SocketAddr;
use std::process::ExitCode;

#[tokio::main]
async fn main() -> ExitCode {
    let mut bind = "127.0.0.1:8080".to_string();
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--bind" => match args.next() {
                Some(addr) => bind = addr,
                None => {
                    eprintln!("--bind needs an ADDR:PORT value");
                    return ExitCode::from(1);
                }
            },
            "--help" | "-h" => {
                println!("usage: landmark-service [--bind ADDR:PORT   (default 127.0.0.1:8080)]");
                return ExitCode::SUCCESS;
            }
            other => {
                eprintln!("unknown argument '{other}'; see --help");
                return ExitCode::from(1);
            }
        }
    }

    let addr: SocketAddr = match bind.parse() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("invalid bind address '{bind}': {e}");
            return ExitCode::from(1);
        }
    };
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot bind {addr}: {e}");
            return ExitCode::from(1);
        }
    };
    // The bound address differs from the requested one for port 0; announce it
    // so callers (and tests) can discover the ephemeral port.
    let local = listener.local_addr().expect("bound listener has an address");
    println!("listening on http://{local}");

    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    match axum::serve(listener, landmark_service::router())
        .with_graceful_shutdown(shutdown)
        .await
    {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("server error: {e}");
            ExitCode::from(1)
        }
    }
}
