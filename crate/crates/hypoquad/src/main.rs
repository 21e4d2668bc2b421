use clap::Parser;

fn main() {
    std::process::exit(hypoquad::cli::run(hypoquad::cli::Cli::parse()));
}
