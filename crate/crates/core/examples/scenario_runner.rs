//! Run a bundled scenario file end to end into a temporary directory and
//! list the artifacts it wrote.
//!
//!     cargo run --release --example scenario_runner -- scenarios/trap-decay-d6.json

use std::path::PathBuf;

use critwave::lab::{run_scenario, RunOptions};

fn main() -> critwave::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/twobubble-attract-d6.json")
    });
    let out = std::env::temp_dir().join("critwave-example");
    let opts = RunOptions {
        cache_dir: None,
        output_dir: Some(out.clone()),
    };
    let rep = run_scenario(&path, &opts)?;
    println!(
        "{} finished {:?}, exit code {}",
        rep.name, rep.status, rep.exit_code
    );
    for c in &rep.checks {
        println!(
            "  {:<18} {:.4e} (limit {:.1e}) {}",
            c.name,
            c.value,
            c.limit,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    let mut files: Vec<_> = walk(&out);
    files.sort();
    for f in files {
        println!("  {}", f.strip_prefix(&out).unwrap_or(&f).display());
    }
    Ok(())
}

fn walk(dir: &std::path::Path) -> Vec<PathBuf> {
    let mut out = vec![];
    for e in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
