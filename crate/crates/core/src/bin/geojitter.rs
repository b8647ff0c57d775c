fn main() {
    std::process::exit(geojitter::cli::run_from(std::env::args_os()));
}
