fn main() {
    std::process::exit(cpf_relay::cli::run(std::env::args_os()));
}
