use clap::Parser;
use narrows::cli;

fn main() {
    let parsed = cli::Cli::parse();
    std::process::exit(cli::run(parsed).code());
}
