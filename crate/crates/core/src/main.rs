fn main() {
    std::process::exit(dynacd::cli::execute(std::env::args_os()));
}
