fn main() {
    std::process::exit(airmap_cli::execute(std::env::args_os()));
}
