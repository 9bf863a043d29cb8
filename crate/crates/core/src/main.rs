fn main() {
    if let Err(msg) = tubekit::cli::configure_threads() {
        eprintln!("error\tstage=startup\tfile=-\treason={msg}");
        std::process::exit(tubekit::cli::EXIT_USAGE);
    }
    std::process::exit(tubekit::cli::run(std::env::args_os()));
}
