fn main() {
    std::process::exit(ctbench_cli::run(std::env::args_os()));
}
