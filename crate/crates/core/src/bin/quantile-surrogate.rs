fn main() {
    std::process::exit(quantile_surrogate::cli::run(std::env::args_os()));
}
