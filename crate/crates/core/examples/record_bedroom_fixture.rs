//! Re-records the bedroom replay cache.
//!
//! A local mock endpoint answers the pipeline's requests in order with the
//! scripted responses in `fixtures/bedroom/scripted/`, and `generate` runs in
//! record mode against it. Run this after any change that alters request
//! bytes (prompts, rendering, the optimizer):
//!
//!     cargo run --example record_bedroom_fixture

use std::path::PathBuf;
use std::thread;

use scenelayout::cli::{cmd_generate, RunConfig, RunManifest};
use scenelayout::vlm::{ReplayMode, ENV_API_BASE, ENV_API_KEY, ENV_MODEL};

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/bedroom");
    let mut scripted: Vec<PathBuf> = std::fs::read_dir(dir.join("scripted"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    scripted.sort();
    let responses: Vec<String> = scripted
        .iter()
        .map(std::fs::read_to_string)
        .collect::<Result<_, _>>()?;

    let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| anyhow::anyhow!("{e}"))?;
    let addr = server.server_addr().to_ip().expect("tcp listener");
    let count = responses.len();
    let handle = thread::spawn(move || {
        for (k, content) in responses.into_iter().enumerate() {
            let Ok(mut req) = server.recv() else { return };
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            eprintln!("mock: request {k} on {} ({} bytes)", req.url(), body.len());
            let reply = serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": content}}]
            });
            let _ = req.respond(tiny_http::Response::from_string(reply.to_string()));
        }
    });

    std::env::set_var(ENV_API_BASE, format!("http://{addr}"));
    std::env::set_var(ENV_API_KEY, "mock");
    std::env::remove_var(ENV_MODEL);

    let cache = dir.join("cache");
    if cache.exists() {
        std::fs::remove_dir_all(&cache)?;
    }
    let out = tempfile::tempdir()?;
    let manifest = RunManifest {
        room: dir.join("room.json"),
        inventory: dir.join("inventory.json"),
        instruction: std::fs::read_to_string(dir.join("instruction.txt"))?
            .trim()
            .to_string(),
        config: RunConfig::default(),
        mode: ReplayMode::record(&cache),
        out: out.path().to_path_buf(),
    };
    let report = cmd_generate(&manifest)?;
    handle.join().expect("mock server thread");

    println!("recorded {count} responses into {}", cache.display());
    for g in &report.groups {
        println!(
            "group {}: placed {:?}, failed {:?}",
            g.index, g.placed, g.failed
        );
        for d in &g.diagnostics {
            println!("  {d}");
        }
    }
    println!(
        "collision-free: {}, in-boundary: {}, exit code {}",
        report.score.collision_free, report.score.in_boundary, report.exit_code
    );
    Ok(())
}
