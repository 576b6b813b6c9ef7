fn main() {
    std::process::exit(rwpf_core::cli::main_entry());
}
