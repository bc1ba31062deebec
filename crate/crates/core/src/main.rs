mod cli;

use clap::Parser;

fn main() {
    // Die quietly on a closed pipe (`prekms ... | head`) like other filters.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let args = cli::Cli::parse();
    if let Err(e) = cli::run(args) {
        eprintln!("prekms: {e}");
        std::process::exit(e.code);
    }
}
