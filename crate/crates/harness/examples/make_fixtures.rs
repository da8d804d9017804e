//! Regenerates `fixtures/`: the 8x8 simulation model, the 4x4 toy model with
//! two null and two signal image pairs, and oracle p-values for every pair.
//!
//! cargo run --release -p sisal-harness --example make_fixtures [-- <dir>]

use std::path::PathBuf;

use serde_json::json;
use sisal_core::modelio::{save_image, save_model};
use sisal_core::TestConfig;
use sisal_harness::fixtures::{fixture_model, toy_model};
use sisal_harness::gen::{gen_null_pair, gen_signal_pair};
use sisal_harness::oracle::oracle_p;

const GRID_STEP: f64 = 1e-3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    save_model(&fixture_model(), dir.join("model.json"))?;
    let toy = toy_model();
    save_model(&toy, dir.join("toy_model.json"))?;

    let n = toy.pixel_count();
    let pairs = [
        ("toy_null_1", gen_null_pair(n, 1.0, 1)),
        ("toy_null_2", gen_null_pair(n, 1.0, 2)),
        ("toy_signal_1", {
            let (x, r, _) = gen_signal_pair(n, 3.0, 4, 1.0, 1);
            (x, r)
        }),
        ("toy_signal_2", {
            let (x, r, _) = gen_signal_pair(n, 3.0, 4, 1.0, 2);
            (x, r)
        }),
    ];
    let mut cases = Vec::new();
    for (name, (x, xref)) in &pairs {
        save_image(x, dir.join(format!("{name}_query.txt")))?;
        save_image(xref, dir.join(format!("{name}_reference.txt")))?;
        for (test, cfg) in [("mean", TestConfig::mean_null(1.0, 0.0)), ("global", TestConfig::global_null(1.0, 0.0))] {
            let case = match oracle_p(&toy, x, xref, &cfg, GRID_STEP)? {
                Some(o) => json!({
                    "pair": name,
                    "test": test,
                    "tau": cfg.tau,
                    "region": o.region.members(),
                    "p_selective": o.p_selective,
                    "p_naive": o.p_naive,
                }),
                None => json!({ "pair": name, "test": test, "tau": cfg.tau, "region": [] }),
            };
            cases.push(case);
        }
    }
    let doc = json!({ "sigma": 1.0, "grid_step": GRID_STEP, "cases": cases });
    std::fs::write(dir.join("expected.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}
