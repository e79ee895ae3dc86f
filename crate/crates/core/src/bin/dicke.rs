fn main() {
    std::process::exit(dicke::cli::run(std::env::args_os()));
}
