//! Encoding and decoding Ultralight 2.0 measures and commands.
//!
//! cargo run --example ultralight_codec

use twinmesh::agent::{parse_command, parse_measure, render_command, render_measure, UlCommand, UlMeasure};

fn main() {
    let groups = parse_measure("id|123456|t|car|p|51\r\n").expect("valid measure");
    let m = &groups[0];
    println!("pairs: {:?}", m.pairs);
    println!("plate: {:?}  spot: {:?}", m.get("id"), m.get("p"));
    println!("rendered: {}", render_measure(&groups).unwrap());

    let grouped = parse_measure("t|21.5#h|40").unwrap();
    println!("`t|21.5#h|40` has {} groups", grouped.len());

    for bad in ["id|1|t", "|x", "a|b||c|d"] {
        println!("{bad:12} -> {}", parse_measure(bad).unwrap_err());
    }

    let cmd = UlCommand::new("bulb:0051", "light", "yellow");
    let wire = render_command(&cmd).unwrap();
    println!("command wire: {wire}");
    assert_eq!(parse_command(&wire).unwrap(), cmd);

    let rejected = [UlMeasure::new([("k", "a|b")])];
    println!("separator in value -> {}", render_measure(&rejected).unwrap_err());
}
