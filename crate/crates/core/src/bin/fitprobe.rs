fn main() {
    std::process::exit(fitprobe::cli::run(std::env::args_os()));
}
