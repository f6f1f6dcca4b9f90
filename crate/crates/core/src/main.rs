fn main() {
    std::process::exit(kg2data::interface::cli::run(std::env::args_os()));
}
