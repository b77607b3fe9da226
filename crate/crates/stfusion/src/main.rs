fn main() {
    std::process::exit(stfusion::cli::main_with_args(std::env::args_os()));
}
