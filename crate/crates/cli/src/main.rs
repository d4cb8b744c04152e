fn main() {
    std::process::exit(uqpde_cli::main_with(std::env::args_os()));
}
