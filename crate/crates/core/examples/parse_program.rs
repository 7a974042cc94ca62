//! Parses a scene program with a few bad lines, prints the diagnostics, and
//! serializes what survived.
//!
//!     cargo run --example parse_program

use std::collections::BTreeSet;

use scenelayout::dsl::{extract_code_block, parse_program, serialize_program};
use scenelayout::WallId;

const RESPONSE: &str = r#"Sure, here is the layout:

```python
# group: reading corner
armchair_0.set_pose(x=1.0, y=1.2, z=0.45, rotation=45)
lamp_0.set_pose(x=0.5, y=0.6, z=0.8, rotation=0)
constraints.distance(lamp_0, armchair_0, min=0.3, max=0.9)
constraints.against_wall(armchair_0, wall_window)
constraints.point_towards(armchair_0, sofa_0)
constraints.distance(lamp_0, armchair_0, min=2, max=1)
```
"#;

fn main() {
    let known: BTreeSet<String> = ["armchair_0", "lamp_0"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let text = extract_code_block(RESPONSE);
    let (program, diags) = parse_program(&text, &known, &WallId::ALL);
    println!("{} diagnostic(s):", diags.len());
    for d in &diags {
        println!("  {d}");
    }
    println!(
        "\n{} pose(s), {} relation(s) kept:",
        program.poses.len(),
        program.relations.len()
    );
    print!("{}", serialize_program(&program).source);
}
