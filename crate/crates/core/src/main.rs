use clap::Parser;

fn main() {
    let cli = dscnn::cli::Cli::parse();
    if let Err(e) = dscnn::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
