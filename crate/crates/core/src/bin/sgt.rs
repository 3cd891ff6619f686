fn main() {
    std::process::exit(sg_thermal::cli::run(std::env::args_os()));
}
