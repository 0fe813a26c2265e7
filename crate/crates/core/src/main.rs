fn main() {
    std::process::exit(polymer2d::cli::run(std::env::args_os()));
}
