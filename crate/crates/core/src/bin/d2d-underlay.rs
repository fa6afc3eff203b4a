fn main() {
    std::process::exit(d2d_underlay::cli::cli(std::env::args_os()));
}
