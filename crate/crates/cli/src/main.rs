fn main() {
    std::process::exit(dtamix_cli::run(std::env::args_os()));
}
