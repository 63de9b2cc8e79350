fn main() {
    std::process::exit(pfsi::main_with_args(std::env::args_os()));
}
