use clap::Parser;

fn main() {
    let cli = domino_cli::Cli::parse();
    std::process::exit(domino_cli::main_with(cli));
}
