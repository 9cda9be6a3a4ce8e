use std::process::ExitCode;
use std::time::Instant;

use momentlab::verify;
use momentlab::Execution;

fn main() -> ExitCode {
    let filter: Vec<u8> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.trim_start_matches('c').parse().ok())
        .collect();
    let start = Instant::now();
    let mut total = 0;
    let mut failed = Vec::new();
    for (id, criterion) in verify::criteria() {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        for r in criterion(Execution::default()) {
            println!("{r}");
            total += 1;
            if !r.passed {
                failed.push(r.id);
            }
        }
    }
    println!(
        "\nacceptance: {} of {total} checks passed in {:.1}s",
        total - failed.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
