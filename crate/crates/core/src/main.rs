fn main() {
    std::process::exit(glarma_varsel::cli::run(std::env::args_os()));
}
