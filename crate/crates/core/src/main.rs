fn main() {
    std::process::exit(looplab::cli::run(std::env::args_os()));
}
