fn main() {
    std::process::exit(slabinv::cli::run(std::env::args_os()));
}
