fn main() {
    std::process::exit(cav_cutin::cli::main_with_args(std::env::args_os()));
}
