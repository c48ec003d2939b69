fn main() {
    env_logger::init();
    std::process::exit(risloc::harness::cli_main(std::env::args_os()));
}
