fn main() {
    std::process::exit(resid_insert::harness::cli_main(std::env::args()));
}
