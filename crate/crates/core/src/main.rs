use clap::Parser;

fn main() {
    let cli = qlcause::cli::Cli::parse();
    std::process::exit(qlcause::cli::run(&cli));
}
