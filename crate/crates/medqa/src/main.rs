use clap::Parser;

fn main() {
    let cli = medqa::commands::Cli::parse();
    if let Err(e) = medqa::commands::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
