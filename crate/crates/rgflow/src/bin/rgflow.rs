use clap::Parser;

fn main() {
    std::process::exit(rgflow::cli::run(rgflow::cli::Cli::parse()));
}
