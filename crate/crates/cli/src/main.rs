use clap::Parser;

fn main() {
    std::process::exit(spde_lab_cli::run(spde_lab_cli::Cli::parse()));
}
