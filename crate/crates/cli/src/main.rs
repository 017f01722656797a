mod args;
mod commands;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Complete(a) => commands::complete(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Verify(a) => commands::verify(a),
        Command::Demo(a) => commands::demo(a),
        Command::Replay(a) => commands::replay(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
