fn main() {
    std::process::exit(jbf::cli::run(std::env::args_os()));
}
