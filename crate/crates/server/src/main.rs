use std::process::ExitCode;

use watn_server::runtime;
use watn_server::ApiConfig;

#[tokio::main]
async fn main() -> ExitCode {
    let config = match ApiConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("watn-server: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime::serve(config).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("watn-server: {e}");
            ExitCode::from(1)
        }
    }
}
