fn main() {
    std::process::exit(glyphocr_cli::run(std::env::args_os()));
}
