use clap::Parser;
use trapgap::cli::{main_with, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    std::process::exit(main_with(Cli::parse()));
}
