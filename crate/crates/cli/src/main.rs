fn main() {
    std::process::exit(kochheat_cli::run(std::env::args_os()));
}
