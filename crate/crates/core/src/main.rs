fn main() {
    std::process::exit(celltraj::cli::run(std::env::args_os()));
}
