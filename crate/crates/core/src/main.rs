fn main() { std::process::exit(parastat::cli::main()) }
