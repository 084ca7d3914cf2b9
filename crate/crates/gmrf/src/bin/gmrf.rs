fn main() {
    std::process::exit(gmrf::cli::dispatch(std::env::args_os()));
}
