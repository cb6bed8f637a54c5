fn main() {
    std::process::exit(nilm_surprise::cli::run(std::env::args_os()));
}
