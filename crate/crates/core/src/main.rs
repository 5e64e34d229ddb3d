fn main() {
    std::process::exit(degenfuse::app::main_with_args(std::env::args_os()));
}
