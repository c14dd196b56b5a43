fn main() {
    std::process::exit(dmri_noise::cli::run(std::env::args_os()));
}
