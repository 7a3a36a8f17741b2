fn main() {
    std::process::exit(seqglasso::cli::run_with_args(std::env::args_os()));
}
