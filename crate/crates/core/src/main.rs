fn main() {
    std::process::exit(hiedge::cli::run(std::env::args_os()));
}
