fn main() {
    std::process::exit(modglue::toolkit::run(std::env::args_os()));
}
