use tabcluster_core::autoenc::{pretrain_from, Autoencoder, AutoencoderSpec, ConvPlan, PretrainConfig};
use tabcluster_core::cluster::kmeans_fit;
use tabcluster_core::data::{standardize, synth_blobs, Dataset};
use tabcluster_core::embed::{
    train_dec, train_depict1d, train_dkm, train_from, train_idec, Method, MethodConfig,
};
use tabcluster_core::eval::cluster_accuracy;
use tabcluster_core::numkit::{
    Activation, AdamConfig, Conv1dLayer, Conv1dParams, ConvTranspose1dLayer, ConvTranspose1dParams, DenseMatrix, Rng,
};
use tabcluster_core::Error;

fn blobs(d: usize, seed: u64) -> Dataset {
    let ds = synth_blobs(600, d, 4, 20.0, 1.0, &mut Rng::new(seed)).unwrap();
    standardize(&ds).unwrap().0
}

fn small_config(method: Method) -> MethodConfig {
    MethodConfig {
        method,
        gamma: 0.1,
        epochs: 100,
        lr: 3e-3,
        batch_size: 1024,
        pretrain_epochs: 200,
        ..MethodConfig::default()
    }
}

fn small_mlp(d: usize, m: usize) -> AutoencoderSpec {
    AutoencoderSpec::mlp(d, &[32], m)
}

fn small_conv(d: usize) -> AutoencoderSpec {
    let plan = ConvPlan {
        channels: vec![8],
        ..ConvPlan::default()
    };
    AutoencoderSpec::conv_front(d, plan, &[32], 10)
}

/// Accuracy of the model's own hard assignment (argmax Q).
fn own_accuracy(model: &tabcluster_core::embed::TrainedEmbeddingModel, ds: &Dataset) -> f64 {
    cluster_accuracy(&ds.y, &model.predict(&ds.x).unwrap(), ds.k).unwrap()
}

fn kmeans_oracle(ds: &Dataset) -> f64 {
    let km = kmeans_fit(&ds.x, ds.k, &mut Rng::new(1), 300, 10).unwrap();
    cluster_accuracy(&ds.y, &km.assignments, ds.k).unwrap()
}

#[test]
fn dec_on_blobs() {
    let ds = blobs(10, 3);
    assert!(kmeans_oracle(&ds) >= 99.0);
    let m = train_dec(&small_mlp(10, 10), &ds.x, 4, &small_config(Method::Dec), &mut Rng::new(5)).unwrap();
    assert!(own_accuracy(&m, &ds) >= 95.0);
    assert_eq!(m.history.len(), 100);
    assert_eq!(m.centroids.dim(), 10);
}

#[test]
fn idec_on_blobs() {
    let ds = blobs(10, 4);
    let m = train_idec(&small_mlp(10, 10), &ds.x, 4, &small_config(Method::Idec), &mut Rng::new(6)).unwrap();
    assert!(own_accuracy(&m, &ds) >= 95.0);
}

#[test]
fn dkm_on_blobs() {
    let ds = blobs(10, 5);
    let m = train_dkm(&small_mlp(10, 4), &ds.x, 4, &small_config(Method::Dkm), &mut Rng::new(7)).unwrap();
    assert!(own_accuracy(&m, &ds) >= 90.0);
}

#[test]
fn depict_on_blobs() {
    let ds = blobs(32, 6);
    let m = train_depict1d(&small_conv(32), &ds.x, 4, &small_config(Method::Depict1d), &mut Rng::new(8)).unwrap();
    assert!(own_accuracy(&m, &ds) >= 90.0);
}

#[test]
fn dkm_needs_k_dimensional_embedding() {
    let ds = blobs(10, 5);
    let err = train_dkm(&small_mlp(10, 10), &ds.x, 4, &small_config(Method::Dkm), &mut Rng::new(1)).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
}

#[test]
fn depict_rejects_narrow_input() {
    let ds = blobs(10, 5);
    let spec = AutoencoderSpec::depict(10);
    let err = train_depict1d(&spec, &ds.x, 4, &small_config(Method::Depict1d), &mut Rng::new(1)).unwrap_err();
    assert!(matches!(err, Error::DegenerateGeometry { .. }), "{err:?}");
}

#[test]
fn dec_ignores_gamma() {
    let ds = blobs(6, 9);
    let mut a = small_config(Method::Dec);
    a.epochs = 20;
    a.pretrain_epochs = 20;
    let b = MethodConfig { gamma: 7.5, ..a };
    let ma = train_dec(&small_mlp(6, 10), &ds.x, 4, &a, &mut Rng::new(2)).unwrap();
    let mb = train_dec(&small_mlp(6, 10), &ds.x, 4, &b, &mut Rng::new(2)).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn trainers_are_deterministic() {
    let ds = blobs(6, 10);
    for method in [Method::Dec, Method::Idec, Method::Dkm] {
        let mut cfg = small_config(method);
        cfg.epochs = 15;
        cfg.pretrain_epochs = 15;
        cfg.batch_size = 128;
        let m = if method == Method::Dkm { 4 } else { 10 };
        let spec = small_mlp(6, m);
        let run = |seed| tabcluster_core::embed::train_method(method, &spec, &ds.x, 4, &cfg, &mut Rng::new(seed)).unwrap();
        let (a, b) = (run(3), run(3));
        assert_eq!(a, b, "{method}");
        assert_eq!(own_accuracy(&a, &ds), own_accuracy(&b, &ds));
        assert_ne!(a, run(4), "{method}");
    }
}

#[test]
fn idec_without_clustering_term_keeps_pretrained_clusters() {
    let ds = blobs(10, 11);
    let cfg = MethodConfig {
        gamma: 0.0,
        ..small_config(Method::Idec)
    };
    let spec = small_mlp(10, 10);
    let trained = train_idec(&spec, &ds.x, 4, &cfg, &mut Rng::new(12)).unwrap();
    let after = kmeans_fit(&trained.embed(&ds.x).unwrap(), 4, &mut Rng::new(0), 300, 10).unwrap();

    // second arm: the same pretraining run on its own
    let mut rng = Rng::new(12);
    let ae = Autoencoder::init(&spec, &mut rng).unwrap();
    let pre = PretrainConfig {
        epochs: cfg.pretrain_epochs,
        batch_size: cfg.batch_size,
        adam: AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    };
    let (pretrained, _) = pretrain_from(ae, &ds.x, &pre, &mut rng).unwrap();
    let before = kmeans_fit(&pretrained.encode(&ds.x).unwrap(), 4, &mut Rng::new(0), 300, 10).unwrap();
    let acc_after = cluster_accuracy(&ds.y, &after.assignments, 4).unwrap();
    let acc_before = cluster_accuracy(&ds.y, &before.assignments, 4).unwrap();
    assert!((acc_after - acc_before).abs() <= 2.0, "{acc_before} vs {acc_after}");
}

fn moving_average(v: &[f64]) -> Vec<f64> {
    v.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect()
}

#[test]
fn fine_tuning_loss_trend_is_non_increasing() {
    let ds10 = blobs(10, 13);
    let ds32 = blobs(32, 13);
    for method in Method::ALL {
        let (spec, ds) = match method {
            Method::Dkm => (small_mlp(10, 4), &ds10),
            Method::Depict1d => (small_conv(32), &ds32),
            _ => (small_mlp(10, 10), &ds10),
        };
        let model = tabcluster_core::embed::train_method(method, &spec, &ds.x, 4, &small_config(method), &mut Rng::new(14))
            .unwrap();
        let total: Vec<f64> = model.history.iter().map(|r| r.total_loss).collect();
        let ma = moving_average(&total);
        let half = total.len() / 2;
        // window starting at epoch i covers i..i+10
        for i in half..ma.len() - 1 {
            assert!(ma[i + 1] <= ma[i], "{method}: window {i} rose {} -> {}", ma[i], ma[i + 1]);
        }
        let ma = moving_average(&model.pretrain_history);
        for i in model.pretrain_history.len() / 2..ma.len() - 1 {
            assert!(ma[i + 1] <= ma[i], "{method} pretraining: window {i}");
        }
    }
}

fn identity_conv_pair() -> (Conv1dParams, ConvTranspose1dParams) {
    let conv = Conv1dParams::new(
        6,
        vec![Conv1dLayer {
            in_channels: 1,
            out_channels: 1,
            width: 1,
            stride: 1,
            kernel: vec![1.0],
            bias: vec![0.0],
            activation: Activation::Linear,
        }],
    )
    .unwrap();
    let convt = ConvTranspose1dParams::new(
        vec![6, 6],
        vec![ConvTranspose1dLayer {
            in_channels: 1,
            out_channels: 1,
            width: 1,
            stride: 1,
            kernel: vec![1.0],
            bias: vec![0.0],
            activation: Activation::Linear,
        }],
    )
    .unwrap();
    (conv, convt)
}

#[test]
fn identity_conv_front_reduces_to_dense_variant() {
    let ds = blobs(6, 15);
    let mut cfg = small_config(Method::Idec);
    cfg.epochs = 20;
    cfg.pretrain_epochs = 20;
    cfg.batch_size = 100;
    let dense_spec = AutoencoderSpec::mlp(6, &[50, 50], 10);
    let dense = Autoencoder::init(&dense_spec, &mut Rng::new(16)).unwrap();
    let plan = ConvPlan {
        channels: vec![1],
        kernel_width: 1,
        stride: 1,
        trainable: false,
    };
    let conv_spec = AutoencoderSpec::conv_front(6, plan, &[50, 50], 10);
    let (conv, convt) = identity_conv_pair();
    let wrapped = Autoencoder::from_parts(
        conv_spec,
        Some(conv),
        dense.encoder.clone(),
        dense.decoder.clone(),
        Some(convt),
    )
    .unwrap();
    assert_eq!(wrapped.encode(&ds.x).unwrap(), dense.encode(&ds.x).unwrap());

    let a = train_from(Method::Idec, dense, &ds.x, 4, &cfg, &mut Rng::new(17)).unwrap();
    let b = train_from(Method::Depict1d, wrapped, &ds.x, 4, &cfg, &mut Rng::new(17)).unwrap();
    assert_eq!(a.pretrain_history, b.pretrain_history);
    assert_eq!(a.history, b.history);
    assert_eq!(a.centroids, b.centroids);
}

#[test]
fn conv_plus_dense_gradient_check() {
    use tabcluster_core::autoenc::{recon_loss, recon_mean_grad, ParamScope};
    use tabcluster_core::numkit::{finite_diff_grad, max_relative_error};

    let plan = ConvPlan {
        channels: vec![2],
        kernel_width: 3,
        stride: 2,
        trainable: true,
    };
    let spec = AutoencoderSpec::conv_front(7, plan, &[4], 2);
    let mut rng = Rng::new(21);
    let ae = Autoencoder::init(&spec, &mut rng).unwrap();
    let x = DenseMatrix::from_vec(3, 7, (0..21).map(|_| rng.normal()).collect()).unwrap();
    let fwd = ae.forward(&x, true).unwrap();
    // recon_mean_grad is d(sum/B)/dX_hat; scale by B for the summed loss
    let mut d = recon_mean_grad(&x, &fwd.x_hat);
    d.map_inplace(|v| v * 3.0);
    let grads = ae.backward(&fwd, Some(&d), None).unwrap();
    let analytic: Vec<f64> = grads.blocks(&ae, ParamScope::Full).concat();
    let flat = ae.to_flat();
    let numeric = finite_diff_grad(
        |p| {
            let mut probe = ae.clone();
            probe.set_flat(p).unwrap();
            recon_loss(&x, &probe.reconstruct(&x).unwrap()).unwrap()
        },
        &flat,
        1e-5,
    );
    assert!(max_relative_error(&analytic, &numeric) < 1e-4);
}
