use clap::Parser;

fn main() {
    let cli = polcon::cli::Cli::parse();
    if let Err(error) = polcon::cli::run(cli) {
        let body = serde_json::json!({
            "error": error.kind(),
            "message": error.to_string(),
        });
        eprintln!("{body}");
        std::process::exit(1);
    }
}
