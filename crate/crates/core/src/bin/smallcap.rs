fn main() {
    std::process::exit(smallcap_core::harness::run(std::env::args_os()));
}
