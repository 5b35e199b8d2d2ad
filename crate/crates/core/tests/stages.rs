use coverify_core::blobio::{read_blob_dump, render_blob_dump};
use coverify_core::fixture::{calibration_set, lenet, synthetic_image, synthetic_parameters, DEFAULT_SEED, DEFAULT_TEST_IMAGE};
use coverify_core::spvf::{read_spvf, render_spvf};
use coverify_core::{
    check_blobs, generate_spvf, recommend_action, run_stage, three_way_compare, Advice, FaultSpec, NumericMode,
    SpvfError, StageConfig, VerifierConfig,
};

#[test]
fn conv2_fault_leaves_earlier_layers_at_one() {
    let net = lenet();
    let params = synthetic_parameters(&net, DEFAULT_SEED);
    let image = synthetic_image(net.input_shape(), DEFAULT_SEED, DEFAULT_TEST_IMAGE);
    let mode = NumericMode::Float32;
    let sw = run_stage(&net, &params, &image, &StageConfig::sw()).unwrap();
    let design = run_stage(&net, &params, &image, &StageConfig::design(mode)).unwrap();
    let fault: FaultSpec = "conv2:scale:0.5".parse().unwrap();
    let hw = run_stage(&net, &params, &image, &StageConfig::hw(mode).with_fault(fault)).unwrap();
    let r = three_way_compare(&sw, &design, &hw, &VerifierConfig::default()).unwrap();
    // hw equals design upstream, so SC_HW equals SC_Des there
    assert_eq!(r.layers[0].sc_hw, r.layers[0].sc_des);
    assert_eq!(r.layers[1].sc_hw, r.layers[1].sc_des);
    assert_eq!(r.layers[0].sc_hw_design, 1.0);
    assert!(r.layers[2].sc_hw < 1.0);
    assert_eq!(r.first_divergent(), Some("conv2"));
    assert_eq!(recommend_action(&r), Advice::RegenerateHardware { layer: Some("conv2".into()) });
}

#[test]
fn design_dump_rewrites_byte_identically() {
    let net = lenet();
    let params = synthetic_parameters(&net, DEFAULT_SEED);
    let image = synthetic_image(net.input_shape(), DEFAULT_SEED, 3);
    let d = run_stage(&net, &params, &image, &StageConfig::design(NumericMode::default_fixed())).unwrap();
    let text = render_blob_dump(&d);
    let back = read_blob_dump(&text).unwrap();
    assert_eq!(back, d);
    assert_eq!(render_blob_dump(&back), text);
}

#[test]
fn spvf_from_fixture_round_trips_and_contains_its_images() {
    let net = lenet();
    let params = synthetic_parameters(&net, DEFAULT_SEED);
    let cal = calibration_set(&net, &params, 20, DEFAULT_SEED).unwrap();
    let spvf = generate_spvf(&net, &params, &cal, 20).unwrap();
    assert_eq!(spvf.images, 20);
    assert_eq!(read_spvf(&render_spvf(&spvf)).unwrap(), spvf);
    for (image, _) in &cal {
        let d = run_stage(&net, &params, image, &StageConfig::sw()).unwrap();
        assert!(check_blobs(&d, &spvf, 0.0, 1.0).unwrap().pass());
    }
}

#[test]
fn wrong_labels_leave_too_few_images() {
    let net = lenet();
    let params = synthetic_parameters(&net, DEFAULT_SEED);
    let cal: Vec<_> = calibration_set(&net, &params, 5, DEFAULT_SEED)
        .unwrap()
        .into_iter()
        .map(|(img, label)| (img, (label + 1) % 10))
        .collect();
    let e = generate_spvf(&net, &params, &cal, 1).unwrap_err();
    assert!(matches!(e, SpvfError::InsufficientImages { kept: 0, needed: 1 }));
    assert!(e.to_string().contains("insufficient correctly predicted images"));
}

#[test]
fn default_image_zero_trips_the_software_envelope() {
    let net = lenet();
    let params = synthetic_parameters(&net, DEFAULT_SEED);
    let cal = calibration_set(&net, &params, 100, DEFAULT_SEED).unwrap();
    let spvf = generate_spvf(&net, &params, &cal, 100).unwrap();
    let check = |index| {
        let image = synthetic_image(net.input_shape(), DEFAULT_SEED, index);
        let d = run_stage(&net, &params, &image, &StageConfig::sw()).unwrap();
        check_blobs(&d, &spvf, 0.0, 0.95).unwrap()
    };
    let r = check(0);
    assert_eq!(r.first_failure().map(|l| (l.name.as_str(), l.outside)), Some(("fc2", 1)));
    assert!(check(DEFAULT_TEST_IMAGE).pass());
}
