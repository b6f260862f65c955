fn main() {
    std::process::exit(hetq::run(std::env::args_os()));
}
