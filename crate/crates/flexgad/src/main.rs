use clap::Parser;

fn main() {
    let cli = flexgad::cli::Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = flexgad::cli::run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
