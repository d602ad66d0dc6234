use clap::Parser;

fn main() {
    let cli = weave::cli::Cli::parse();
    std::process::exit(weave::cli::execute(cli));
}
