use clap::Parser;

fn main() {
    let cli = dsdyn::cli::Cli::parse();
    if let Err(err) = dsdyn::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.code());
    }
}
