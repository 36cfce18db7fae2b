//! The full HTTP path from gate sensor to bulb: measure into the agent,
//! update into the broker, notification back to the agent, command out to
//! the bulb stub.
//!
//! cargo run --example bulb_commands

use twinmesh::sim::{Stack, StackOptions};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let stack = Stack::start(StackOptions::new(60, dir.path())).await?;
    println!("broker {}  agent {}  bulbs {}", stack.urls.broker, stack.urls.agent, stack.urls.bulbs);

    for payload in ["id|123456|t|car|p|51", "id|123457|t|van|p|7", "id|123456|t|car|d|51"] {
        stack.send_measure(payload).await?;
        stack.settle().await;
        println!("{payload:24} bulb:0051={} bulb:0007={}",
            stack.bulbs.color("bulb:0051").unwrap_or_default(),
            stack.bulbs.color("bulb:0007").unwrap_or_default());
    }
    println!("commands received, in order:");
    for c in stack.bulbs.commands() {
        println!("  {c}");
    }
    stack.shutdown().await;
    Ok(())
}
