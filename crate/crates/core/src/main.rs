fn main() {
    std::process::exit(qaoa_angles::cli::dispatch(std::env::args_os()));
}
