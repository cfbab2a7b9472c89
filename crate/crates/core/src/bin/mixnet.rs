use clap::Parser;
use mixnet::cli::{exit_code, run, Cli, EXIT_OK};

fn main() {
    let code = match run(Cli::parse()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
