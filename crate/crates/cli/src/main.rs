fn main() {
    std::process::exit(nwcell_cli::main_with(std::env::args_os()));
}
