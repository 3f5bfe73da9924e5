use clap::Parser;

fn main() {
    let cli = pricecap_cli::Cli::parse();
    std::process::exit(pricecap_cli::main_with(&cli));
}
