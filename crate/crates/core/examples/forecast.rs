//! Trains one RCLSTM on the synthetic traffic series and scores the test tail.
//!
//! `cargo run --release --example forecast -- [connectivity] [epochs]`

use rclstm::data::{make_windows, normalize, split, synth_traffic, SplitSpec};
use rclstm::metrics::evaluate;
use rclstm::network::build_network;
use rclstm::training::{train, TrainConfig};

fn main() -> rclstm::Result<()> {
    let mut args = std::env::args().skip(1);
    let connectivity: f64 = args.next().map_or(0.35, |s| s.parse().expect("connectivity"));
    let epochs: usize = args.next().map_or(5, |s| s.parse().expect("epochs"));

    let series = normalize(&synth_traffic(7289, 0))?;
    let windows = make_windows(&series, 10)?;
    let (train_set, test_set) = split(&windows, SplitSpec::default())?;
    let net = build_network(3, 1, 32, connectivity, 42)?;
    println!("realized connectivity {:.4}, {} trainable weights", net.realized_connectivity(), net.trainable_count());

    let (net, losses) = train(net, &train_set, &TrainConfig { epochs, ..TrainConfig::default() })?;
    for (epoch, loss) in losses.iter().enumerate() {
        println!("epoch {epoch:>3}  train loss {loss:.5}");
    }
    let report = evaluate(&net, &test_set)?;
    println!("test mse {:.5}, mae {:.5}", report.mse, report.mae);
    Ok(())
}
