fn main() {
    std::process::exit(a3t::cli::run(std::env::args_os()));
}
