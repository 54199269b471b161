use clap::Parser;

fn main() {
    if let Err(e) = mvt::cli::run(mvt::cli::Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
