use clap::Parser;

fn main() {
    let cli = vaca::cli::Cli::parse();
    match vaca::cli::run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
