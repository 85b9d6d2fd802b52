fn main() {
    std::process::exit(sphh::cli::run(std::env::args_os()));
}
