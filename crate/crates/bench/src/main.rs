fn main() {
    std::process::exit(qnpe_bench::run_cli(std::env::args_os()));
}
