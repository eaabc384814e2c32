use rclstm::data::{make_windows, normalize, synth_traffic_with_noise, WindowedDataset};
use rclstm::metrics::evaluate;
use rclstm::network::build_network;
use rclstm::numcore::Vec64;
use rclstm::training::{train, TrainConfig};
use rclstm::Error;

fn noiseless(len: usize, window: usize) -> WindowedDataset {
    let series = normalize(&synth_traffic_with_noise(len, 0, 0.0)).unwrap();
    make_windows(&series, window).unwrap()
}

#[test]
fn dense_network_fits_noiseless_sinusoid() {
    let data = noiseless(330, 10);
    let net = build_network(3, 1, 16, 1.0, 4).unwrap();
    let cfg = TrainConfig { epochs: 200, seed: 1, ..TrainConfig::default() };
    let (trained, history) = train(net, &data, &cfg).unwrap();
    let first = history[0];
    let last = *history.last().unwrap();
    assert!(last < 0.01, "final training loss {last}");
    assert!(last < 0.1 * first, "first {first}, last {last}");
    let report = evaluate(&trained, &data).unwrap();
    assert!(report.mse < 0.01, "training-set mse {}", report.mse);
}

#[test]
fn constant_targets_do_not_get_worse() {
    let n = 64;
    let data = WindowedDataset {
        inputs: vec![vec![Vec64(vec![0.0]); 5]; n],
        targets: vec![0.0; n],
        window: 5,
        starts: (0..n).collect(),
    };
    let net = build_network(2, 1, 4, 0.5, 8).unwrap();
    let cfg = TrainConfig { epochs: 15, batch_size: 16, ..TrainConfig::default() };
    let (_, history) = train(net, &data, &cfg).unwrap();
    assert!(history.last().unwrap() <= &history[0], "{history:?}");
}

#[test]
fn training_is_bit_reproducible() {
    let data = noiseless(120, 6);
    let cfg = TrainConfig { epochs: 4, batch_size: 8, seed: 21, ..TrainConfig::default() };
    let run = || train(build_network(2, 1, 5, 0.35, 13).unwrap(), &data, &cfg).unwrap();
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), hb.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!(a, b);

    let (_, other) = train(build_network(2, 1, 5, 0.35, 13).unwrap(), &data, &TrainConfig { seed: 22, ..cfg }).unwrap();
    assert_ne!(ha, other, "the shuffle seed should change the run");
}

#[test]
fn overflowing_loss_names_epoch_and_batch() {
    let mut data = noiseless(60, 4);
    data.targets[7] = 1e200;
    let net = build_network(1, 1, 3, 1.0, 2).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::default() };
    match train(net, &data, &cfg) {
        Err(Error::NonFiniteLoss { epoch, batch, loss }) => {
            assert_eq!(epoch, 0);
            assert!(batch < data.len().div_ceil(4));
            assert!(!loss.is_finite());
        }
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn empty_dataset_is_rejected() {
    let data = WindowedDataset { inputs: vec![], targets: vec![], window: 3, starts: vec![] };
    let net = build_network(1, 1, 2, 1.0, 0).unwrap();
    assert!(matches!(train(net, &data, &TrainConfig::default()), Err(Error::EmptyDataset)));
}
