//! Builds a 2-2-2 ReLU network by hand, classifies a few points and
//! round-trips it through the JSON model format.
//!
//! ```bash
//! cargo run --example forward_pass
//! ```

use nodebias::model::{Activation, Layer, Network};

fn main() -> nodebias::Result<()> {
    // hidden: relu(x0 - x1), relu(x1 - x0)
    let hidden = Layer::new(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![0.0, 0.0], Activation::Relu)?;
    let out = Layer::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0], Activation::Identity)?;
    let net = Network::new(vec![hidden, out])?.with_meta("note", "x0 > x1 votes class 0");

    for x in [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]] {
        let p = net.forward(&x)?;
        println!("x = {x:?} -> logits {:?}, label {}", p.logits, p.label);
    }

    let json = net.to_json();
    let back = Network::from_json(&json)?;
    assert_eq!(back, net);
    println!("{json}");
    Ok(())
}
