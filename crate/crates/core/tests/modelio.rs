use proptest::prelude::*;
use sisal_core::modelio::{load_image, load_model, model_to_string, parse_model, save_image, save_model};
use sisal_core::pwlnet::{CamHead, Conv2d, Dense, Padding};
use sisal_core::{GraphSpec, LayerSpec, Tensor};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
    ]
}

fn arb_graph() -> impl Strategy<Value = GraphSpec> {
    (1usize..4, 1usize..3, 1usize..4).prop_flat_map(|(filters, k, half)| {
        let side = 2 * half;
        (
            prop::collection::vec(finite(), k * k * filters),
            prop::collection::vec(finite(), filters),
            prop::collection::vec(finite(), filters * 2),
            prop::collection::vec(finite(), 2),
        )
            .prop_map(move |(w, b, dw, db)| {
                GraphSpec::new(
                    [side, side, 1],
                    vec![
                        LayerSpec::Conv2d(Conv2d {
                            filters,
                            kernel_size: k,
                            stride: 1,
                            padding: Padding::Same,
                            weights: w,
                            bias: b,
                        }),
                        LayerSpec::Relu,
                        LayerSpec::MaxPool2d { pool_size: 2, stride: 2 },
                        LayerSpec::Upsample2d { factor: 2 },
                        LayerSpec::GlobalAvgPool,
                        LayerSpec::Dense(Dense {
                            units: 2,
                            weights: dw,
                            bias: db,
                        }),
                    ],
                    CamHead {
                        feature_layer_index: 3,
                        dense_layer_index: 5,
                        upsample_to_input: true,
                    },
                )
                .unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_file_round_trip(g in arb_graph()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&g, &path).unwrap();
        let back = load_model(&path).unwrap();
        prop_assert_eq!(&back, &g);
        // bitwise, including the sign of zero
        for (a, b) in model_to_string(&back).lines().zip(model_to_string(&g).lines()) {
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(std::fs::read_to_string(&path).unwrap(), model_to_string(&back));
    }

    #[test]
    fn image_file_round_trip(h in 1usize..6, w in 1usize..6, seed in prop::collection::vec(finite(), 36)) {
        let t = Tensor::new(vec![h, w], seed[..h * w].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.txt");
        save_image(&t, &path).unwrap();
        let back = load_image(&path).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        for (a, b) in back.values().iter().zip(t.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn parse_errors_are_deterministic(g in arb_graph(), cut in 0.0f64..1.0) {
        let text = model_to_string(&g);
        let truncated = &text[..(cut * text.len() as f64) as usize];
        let first = parse_model(truncated).map(|_| ()).map_err(|e| (e.code(), e.to_string()));
        let second = parse_model(truncated).map(|_| ()).map_err(|e| (e.code(), e.to_string()));
        prop_assert_eq!(first, second);
    }
}

#[test]
fn committed_fixtures_parse() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures");
    for model in ["model.json", "toy_model.json"] {
        let g = load_model(format!("{root}/{model}")).unwrap();
        assert_eq!(g.class_count(), 2);
    }
    for pair in ["toy_null_1", "toy_null_2", "toy_signal_1", "toy_signal_2"] {
        for side in ["query", "reference"] {
            let img = load_image(format!("{root}/{pair}_{side}.txt")).unwrap();
            assert_eq!(img.shape(), &[4, 4]);
        }
    }
}
