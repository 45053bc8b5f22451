fn main() {
    std::process::exit(sketchlab_expkit::cli::main_with(std::env::args_os()));
}
