use clap::Parser;

fn main() {
    let cli = ftl2lwr_cli::Cli::parse();
    std::process::exit(ftl2lwr_cli::execute(cli));
}
