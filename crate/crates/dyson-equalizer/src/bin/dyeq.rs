fn main() {
    std::process::exit(dyson_equalizer::cli::main_entry());
}
