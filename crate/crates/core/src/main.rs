fn main() {
    std::process::exit(gzsl::cli::main(std::env::args_os()));
}
