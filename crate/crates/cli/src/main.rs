use clap::Parser;

fn main() {
    std::process::exit(grpo_lab::run(grpo_lab::Cli::parse()));
}
