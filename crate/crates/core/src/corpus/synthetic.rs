//! Deterministic Java fixtures for offline runs.
//!
//! The generated source goes through [`extract_methods`](super::extract_methods),
//! so synthetic units carry real spans like ingested ones.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{extract_methods, CodeUnit};

const NOUNS: &[&str] = &["user", "order", "buffer", "token", "session", "record", "layer", "node", "cache", "file"];
const TYPES: &[&str] = &["String", "int", "long", "boolean", "List<String>", "Map<String, Integer>"];

fn method(rng: &mut ChaCha8Rng, idx: usize) -> String {
    let noun = *NOUNS.choose(rng).unwrap();
    let ty = *TYPES.choose(rng).unwrap();
    let cap = format!("{}{}", noun[..1].to_uppercase(), &noun[1..]);
    let doc =
        if rng.random_bool(0.5) { format!("    /** Handles the {noun} for step {idx}. */\n") } else { String::new() };
    let body = match rng.random_range(0..5) {
        0 => format!(
            "    public {ty} get{cap}{idx}() {{\n        return this.{noun}{idx};\n    }}\n"
        ),
        1 => format!(
            "    public void set{cap}{idx}({ty} value) {{\n        if (value == null) {{\n            throw new IllegalArgumentException(\"{noun} must not be null\");\n        }}\n        this.{noun}{idx} = value;\n    }}\n"
        ),
        2 => format!(
            "    public int count{cap}s{idx}(List<{cap}> items) {{\n        int total = 0;\n        for ({cap} item : items) {{\n            if (item.isActive()) {{\n                total++;\n            }}\n        }}\n        return total;\n    }}\n"
        ),
        3 => format!(
            "    private boolean remove{cap}{idx}(String key) throws IOException {{\n        synchronized (lock) {{\n            return {noun}Store.remove(key) != null;\n        }}\n    }}\n"
        ),
        _ => format!(
            "    protected void notify{cap}Listeners{idx}() {{\n        for (Listener l : listeners) {{\n            l.on{cap}Changed(this, \"{{{idx}}}\");\n        }}\n    }}\n"
        ),
    };
    format!("{doc}{body}")
}

/// Java source with `count` distinct methods spread over classes of ten.
pub fn java_source(count: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("package fixtures;\n\nimport java.util.*;\n\n");
    for (class_no, chunk) in (0..count).collect::<Vec<_>>().chunks(10).enumerate() {
        out.push_str(&format!("public class Fixture{class_no} {{\n"));
        for &i in chunk {
            out.push_str(&method(&mut rng, i));
            out.push('\n');
        }
        out.push_str("}\n\n");
    }
    out
}

/// `count` synthetic units extracted from [`java_source`].
pub fn java_units(count: usize, seed: u64) -> Vec<CodeUnit> {
    let src = java_source(count, seed);
    let mut units = extract_methods(&src, "synthetic/Fixture.java").expect("generated source is balanced");
    for u in &mut units {
        u.project = Some("synthetic".to_string());
    }
    units
}
