use std::io;

use clap::Parser;
use contractflow::harness::reference::{serve, Variant};

/// Reference Account subject, driven over stdin/stdout.
#[derive(Parser)]
#[command(name = "account-subject")]
struct Args {
    #[arg(long, value_enum)]
    variant: Variant,
}

fn main() {
    let args = Args::parse();
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    if let Err(e) = serve(args.variant, stdin, stdout) {
        eprintln!("account-subject: {e}");
        std::process::exit(1);
    }
}
