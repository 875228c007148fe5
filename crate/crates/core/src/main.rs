use clap::Parser;

fn main() {
    let cli = emlab::cli::Cli::parse();
    match emlab::cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
