fn main() {
    std::process::exit(qcbr_cli::run(std::env::args_os()).code());
}
