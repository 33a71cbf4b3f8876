fn main() {
    std::process::exit(adscope::main_with_args(std::env::args_os()));
}
