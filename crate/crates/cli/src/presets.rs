//! Named experiment presets: the standard settings for each dataset/model
//! pair, plus the synthetic-plane demo and a small fully-offline image task
//! for quick runs. Any key can be overridden by a config file.

use std::collections::BTreeMap;

pub type Preset = &'static [(&'static str, &'static str)];

const MNIST_LR: Preset = &[
    ("task.kind", "mnist"),
    ("task.class_a", "0"),
    ("task.class_b", "8"),
    ("task.n_train", "5000"),
    ("task.n_val", "500"),
    ("task.n_test", "3000"),
    ("task.normalization", "unit"),
    ("model.kind", "lr"),
    ("attack.hyper_iters", "140"),
    ("attack.alpha", "0.3"),
    ("attack.inner_steps", "140"),
    ("attack.eta", "0.1"),
    ("attack.lambda_hi", "8.517193191416238"), // ln(5e3)
    ("attack.fractions", "0,0.07,0.14,0.21,0.28,0.35"),
    ("attack.poison_batch", "350"),
    ("eval.eta", "0.1"),
    ("eval.epochs", "140"),
    ("eval.consistency_k", "20"),
    ("fixed.lambda_l2", "6.907755278982137"), // ln(1000)
    ("fixed.lambda_l1", "3.912023005428146"), // ln(50)
];

const FMNIST_LR: Preset = &[
    ("task.kind", "fmnist"),
    ("task.class_a", "1"), // trouser
    ("task.class_b", "2"), // pullover
    ("task.n_train", "5000"),
    ("task.n_val", "500"),
    ("task.n_test", "3000"),
    ("task.normalization", "unit"),
    ("model.kind", "lr"),
    ("attack.hyper_iters", "150"),
    ("attack.alpha", "0.3"),
    ("attack.inner_steps", "160"),
    ("attack.eta", "0.04"),
    ("attack.lambda_hi", "8.517193191416238"),
    ("attack.fractions", "0,0.07,0.14,0.21,0.28,0.35"),
    ("attack.poison_batch", "350"),
    ("eval.eta", "0.04"),
    ("eval.epochs", "160"),
    ("eval.consistency_k", "40"),
    ("fixed.lambda_l2", "6.907755278982137"),
    ("fixed.lambda_l1", "3.2188758248682006"), // ln(25)
];

const CIFAR_LR: Preset = &[
    ("task.kind", "cifar10"),
    ("task.class_a", "0"), // airplane
    ("task.class_b", "6"), // frog
    ("task.n_train", "5000"),
    ("task.n_val", "1000"),
    ("task.n_test", "2500"),
    ("task.normalization", "symmetric"),
    ("model.kind", "lr"),
    ("attack.hyper_iters", "120"),
    ("attack.alpha", "0.3"),
    ("attack.inner_steps", "500"),
    ("attack.eta", "0.01"),
    ("attack.lambda_hi", "11.512925464970229"), // ln(1e5)
    ("attack.fractions", "0,0.07,0.14,0.21,0.28,0.35"),
    ("attack.poison_batch", "350"),
    ("eval.eta", "0.01"),
    ("eval.epochs", "500"),
    ("eval.consistency_k", "200"),
    ("fixed.lambda_l2", "9.210340371976184"), // ln(1e4)
    ("fixed.lambda_l1", "4.605170185988092"), // ln(100)
];

const MNIST_DNN: Preset = &[
    ("task.kind", "mnist"),
    ("task.class_a", "0"),
    ("task.class_b", "8"),
    ("task.n_train", "5000"),
    ("task.n_val", "500"),
    ("task.n_test", "3000"),
    ("task.normalization", "unit"),
    ("model.kind", "mlp"),
    ("model.hidden", "32,8"),
    ("attack.hyper_iters", "180"),
    ("attack.alpha", "0.075"),
    ("attack.inner_steps", "700"),
    ("attack.eta", "0.04"),
    ("attack.lambda_hi", "8.517193191416238"),
    ("attack.fractions", "0,0.07,0.14,0.21,0.28,0.35"),
    ("attack.poison_batch", "350"),
    ("eval.eta", "0.04"),
    ("eval.epochs", "700"),
    ("eval.consistency_k", "20"),
    ("fixed.lambda_l2", "4.605170185988092"), // ln(100)
    ("fixed.lambda_l1", "3.912023005428146"), // ln(50)
];

const FMNIST_DNN: Preset = &[
    ("task.kind", "fmnist"),
    ("task.class_a", "1"),
    ("task.class_b", "2"),
    ("task.n_train", "5000"),
    ("task.n_val", "500"),
    ("task.n_test", "3000"),
    ("task.normalization", "unit"),
    ("model.kind", "mlp"),
    ("model.hidden", "32,8"),
    ("attack.hyper_iters", "150"),
    ("attack.alpha", "0.1"),
    ("attack.inner_steps", "800"),
    ("attack.eta", "0.03"),
    ("attack.lambda_hi", "8.517193191416238"),
    ("attack.fractions", "0,0.07,0.14,0.21,0.28,0.35"),
    ("attack.poison_batch", "350"),
    ("eval.eta", "0.03"),
    ("eval.epochs", "800"),
    ("eval.consistency_k", "40"),
    ("fixed.lambda_l2", "6.214608098422191"), // ln(500)
    ("fixed.lambda_l1", "2.302585092994046"), // ln(10)
];

const CIFAR_DNN: Preset = &[
    ("task.kind", "cifar10"),
    ("task.class_a", "0"),
    ("task.class_b", "6"),
    ("task.n_train", "5000"),
    ("task.n_val", "1000"),
    ("task.n_test", "2500"),
    ("task.normalization", "symmetric"),
    ("model.kind", "mlp"),
    ("model.hidden", "64,32"),
    ("attack.hyper_iters", "120"),
    ("attack.alpha", "0.1"),
    ("attack.inner_steps", "800"),
    ("attack.eta", "0.03"),
    ("attack.lambda_hi", "11.512925464970229"),
    ("attack.fractions", "0,0.07,0.14,0.21,0.28,0.35"),
    ("attack.poison_batch", "350"),
    ("eval.eta", "0.03"),
    ("eval.epochs", "800"),
    ("eval.consistency_k", "200"),
    ("fixed.lambda_l2", "6.214608098422191"),
    ("fixed.lambda_l1", "3.2188758248682006"),
];

/// Two-Gaussian plane demo settings.
const SYNTH: Preset = &[
    ("task.kind", "synthetic"),
    ("task.train_per_class", "16"),
    ("task.val_per_class", "32"),
    ("model.kind", "lr"),
    ("attack.hyper_iters", "50"),
    ("attack.alpha", "0.4"),
    ("attack.inner_steps", "100"),
    ("attack.eta", "0.2"),
    ("attack.lambda_lo", "-8"),
    ("attack.lambda_hi", "6"),
    ("attack.fractions", "0"),
    ("eval.eta", "0.2"),
    ("eval.epochs", "100"),
    ("synth.grid_n", "12"),
    ("synth.lambda_grid", "-8:6:0.5"),
    ("synth.fixed_lambda", "2.995732273553991"), // ln(20)
    ("fixed.lambda_l2", "2.995732273553991"),
    ("fixed.lambda_l1", "2.995732273553991"),
];

/// Small fully-offline image task (procedural 0-vs-8 pool) with reduced
/// sizes; finishes in minutes on a laptop core.
const DIGITS_DESK: Preset = &[
    ("task.kind", "synthetic-digits"),
    ("task.class_a", "0"),
    ("task.class_b", "8"),
    ("task.n_train", "500"),
    ("task.n_val", "100"),
    ("task.n_test", "500"),
    ("task.normalization", "unit"),
    ("task.digits_per_class", "1200"),
    ("model.kind", "lr"),
    ("attack.hyper_iters", "60"),
    ("attack.alpha", "0.3"),
    ("attack.inner_steps", "100"),
    ("attack.eta", "0.1"),
    ("attack.lambda_hi", "8.517193191416238"),
    ("attack.fractions", "0,0.1,0.2"),
    ("eval.eta", "0.1"),
    ("eval.epochs", "140"),
    ("eval.consistency_k", "20"),
    ("fixed.lambda_l2", "6.907755278982137"),
    ("fixed.lambda_l1", "3.912023005428146"),
];

pub fn preset_map() -> BTreeMap<&'static str, Preset> {
    BTreeMap::from([
        ("mnist-lr", MNIST_LR),
        ("fmnist-lr", FMNIST_LR),
        ("cifar-lr", CIFAR_LR),
        ("mnist-dnn", MNIST_DNN),
        ("fmnist-dnn", FMNIST_DNN),
        ("cifar-dnn", CIFAR_DNN),
        ("synth", SYNTH),
        ("digits-desk", DIGITS_DESK),
    ])
}
