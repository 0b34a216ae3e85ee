fn main() {
    std::process::exit(cdpre::cli::run(std::env::args_os()));
}
