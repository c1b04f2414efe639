fn main() {
    std::process::exit(locsamp::cli::main_entry());
}
