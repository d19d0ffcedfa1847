fn main() {
    std::process::exit(ujack::cli::dispatch(std::env::args_os()));
}
