use clap::Parser;

fn main() {
    let cli = hhcontact::cli::Cli::parse();
    std::process::exit(hhcontact::cli::run(cli));
}
