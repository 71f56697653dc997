fn main() {
    if let Err(e) = phaedra_cli::run(std::env::args()) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
