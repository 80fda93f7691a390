use clap::Parser;

fn main() {
    let cli = hypolab_cli::Cli::parse();
    std::process::exit(hypolab_cli::run(cli));
}
