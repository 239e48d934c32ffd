use clap::Parser;

fn main() {
    let cli = pairdis::cli::Cli::parse();
    if let Err(e) = pairdis::cli::run(cli) {
        eprintln!("error: {}", e);
        std::process::exit(1);
    }
}
