fn main() {
    std::process::exit(pktseer::run(std::env::args_os()));
}
