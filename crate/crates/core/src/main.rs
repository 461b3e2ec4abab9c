use clap::Parser;

fn main() {
    let cli = fsqkd::cli::Cli::parse();
    let code = fsqkd::cli::run(
        &cli,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    std::process::exit(code);
}
