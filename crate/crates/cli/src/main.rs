use clap::Parser;

fn main() {
    let cli = ldr_bench::Cli::parse();
    if let Err(err) = ldr_bench::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
