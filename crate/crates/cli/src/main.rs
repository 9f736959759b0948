use aerorecog::commands::{run, Cli};
use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("AERORECOG_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let report = serde_json::to_string(&e.report())
            .unwrap_or_else(|_| format!("{{\"message\":\"{e}\"}}"));
        eprintln!("{report}");
        std::process::exit(e.exit_code());
    }
}
