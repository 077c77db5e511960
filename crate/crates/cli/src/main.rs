use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = emgse_cli::Cli::parse();
    if let Err(e) = emgse_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(match e {
            emgse_cli::CliError::Usage(_) => 2,
            _ => 1,
        });
    }
}
