fn main() { std::process::exit(mixreg::cli::cli_main(std::env::args().collect())); }
