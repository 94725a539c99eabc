fn main() {
    std::process::exit(featgeo::cli::run(std::env::args_os()));
}
