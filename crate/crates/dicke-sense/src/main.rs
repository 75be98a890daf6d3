fn main() {
    std::process::exit(dicke_sense::cli::run(std::env::args_os()));
}
