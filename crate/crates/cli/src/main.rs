use clap::Parser;

fn main() {
    let cli = lombardctl::args::Cli::parse();
    if let Err(err) = lombardctl::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(lombardctl::exit_code(&err));
    }
}
