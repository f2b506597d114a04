use lidarcam_core::geom::{CameraModel, EquirectCamera, PinholeCamera, RigidTransform};
use lidarcam_core::registration::{calibrate_fine, summed_nid, DataPair, FineParams};
use lidarcam_core::synthetic::{calibration_fixture, default_extrinsic, perturb, Scene};
use lidarcam_core::Error;
use nalgebra::{Matrix3, Vector3};

fn pinhole() -> CameraModel {
    PinholeCamera::new(300.0, 300.0, 240.0, 180.0, 480, 360).unwrap().into()
}

#[test]
fn ground_truth_is_a_fixed_point() {
    // fine pixels and a dense cloud keep the sampling noise of the NID minimum below 1 mm
    let cam: CameraModel = PinholeCamera::new(800.0, 800.0, 640.0, 480.0, 1280, 960).unwrap().into();
    let fx = calibration_fixture(&Scene::textured_room(), cam, default_extrinsic(), 400_000, 70.0, 1);
    let pairs = [DataPair {
        cloud: fx.cloud,
        image: fx.image,
    }];
    let r = calibrate_fine(&pairs, &fx.camera, &fx.camera_from_lidar, &FineParams::default()).unwrap();
    let dt = r.transform.translation_error(&fx.camera_from_lidar);
    let dr = r.transform.rotation_error(&fx.camera_from_lidar).to_degrees();
    assert!(dt < 1e-3 && dr < 0.01, "{dt} m {dr} deg");
    assert!(r.nid <= r.initial_nid + 1e-12);
    assert_eq!(r.pairs_used, 1);
}

#[test]
fn objective_never_increases() {
    let fx = calibration_fixture(&Scene::textured_room(), pinhole(), default_extrinsic(), 40_000, 70.0, 5);
    let pairs = [DataPair {
        cloud: fx.cloud,
        image: fx.image,
    }];
    let params = FineParams {
        max_outer_iterations: 2,
        ..FineParams::default()
    };
    for seed in 0..3 {
        let t0 = perturb(&fx.camera_from_lidar, 0.3, 8.0, seed);
        let r = calibrate_fine(&pairs, &fx.camera, &t0, &params).unwrap();
        let (at_t0, _) = summed_nid(&pairs, &fx.camera, &t0, params.bins).unwrap();
        let (at_result, _) = summed_nid(&pairs, &fx.camera, &r.transform, params.bins).unwrap();
        assert!(at_result <= at_t0 + 1e-12);
        assert_eq!(at_result, r.nid);
    }
}

#[test]
fn disjoint_views_fail() {
    let fx = calibration_fixture(&Scene::textured_room(), pinhole(), default_extrinsic(), 5_000, 20.0, 6);
    let pairs = [DataPair {
        cloud: fx.cloud,
        image: fx.image,
    }];
    // camera turned around: every point lies behind it
    let back = RigidTransform::from_rotation_vector(Vector3::new(0.0, std::f64::consts::PI, 0.0), Vector3::zeros())
        .compose(&fx.camera_from_lidar);
    let err = calibrate_fine(&pairs, &fx.camera, &back, &FineParams::default()).unwrap_err();
    assert!(matches!(err, Error::CalibrationFailed(_)), "{err}");
    assert!(calibrate_fine(&[], &fx.camera, &back, &FineParams::default()).is_err());
}

#[test]
fn two_degenerate_walls_constrain_all_axes() {
    let cam: CameraModel = EquirectCamera::new(720, 360).unwrap().into();
    let truth = default_extrinsic();
    // wall ahead with vertical stripes, wall to the left with horizontal stripes
    let ahead = Scene::wall(4.0, 4.0).with_stripes(Vector3::z());
    let swap = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let left = Scene::wall(4.0, 4.0).transformed_axes(&swap).with_stripes(Vector3::x());
    let pairs: Vec<DataPair> = [ahead, left]
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let f = calibration_fixture(s, cam, truth, 60_000, 180.0, 10 + k as u64);
            DataPair {
                cloud: f.cloud,
                image: f.image,
            }
        })
        .collect();
    let t0 = perturb(&truth, 0.1, 2.0, 3);
    let r = calibrate_fine(&pairs, &cam, &t0, &FineParams::default()).unwrap();
    let dt = r.transform.translation_error(&truth);
    let dr = r.transform.rotation_error(&truth).to_degrees();
    assert!(dt < 0.05 && dr < 0.5, "{dt} m {dr} deg");
    assert_eq!(r.pairs_used, 2);
}
