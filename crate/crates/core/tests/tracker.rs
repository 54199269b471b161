use mvt::head::{decode_box, HeadOutput};
use mvt::synthetic::MovingSquare;
use mvt::tracker::{crop_patch, CropGeometry};
use mvt::weights::random_init;
use mvt::{BBox, Error, ImageFrame, ModelConfig, MvtModel, Tensor, Tracker, TrackerConfig};

fn model(seed: u64) -> MvtModel {
    MvtModel::random(&ModelConfig::default(), seed).unwrap()
}

fn run(model: &MvtModel, scene: &MovingSquare) -> Vec<BBox> {
    let gt = scene.groundtruth();
    let mut t = Tracker::new(model, TrackerConfig::default());
    t.init(&scene.frame(0), gt[0]).unwrap();
    (1..scene.frames).map(|i| t.track(&scene.frame(i)).unwrap()).collect()
}

#[test]
fn tracking_is_deterministic_and_boxes_stay_valid() {
    let m = model(1);
    let scene = MovingSquare {
        frames: 12,
        ..MovingSquare::default()
    };
    let a = run(&m, &scene);
    let b = run(&m, &scene);
    assert_eq!(a, b);
    for bx in &a {
        assert!(bx.is_valid() && bx.w >= 4.0 && bx.h >= 4.0);
        let (cx, cy) = bx.center();
        assert!((0.0..=320.0).contains(&cx) && (0.0..=240.0).contains(&cy));
    }
}

#[test]
fn model_and_template_are_not_updated() {
    let cfg = ModelConfig::default();
    let store = random_init(&cfg, 2).unwrap();
    let before = store.fingerprint();
    let m = MvtModel::from_store(&cfg, &store).unwrap();
    let snapshot = m.clone();
    let scene = MovingSquare {
        frames: 101,
        ..MovingSquare::default()
    };
    let mut t = Tracker::new(&m, TrackerConfig::default());
    let template = t.init(&scene.frame(0), scene.groundtruth()[0]).unwrap().template.clone();
    for i in 1..scene.frames {
        t.track(&scene.frame(i)).unwrap();
    }
    assert_eq!(t.state().unwrap().template, template);
    assert_eq!(m, snapshot);
    assert_eq!(store.fingerprint(), before);
}

#[test]
fn repeated_init_caches_identical_template() {
    let m = model(3);
    let scene = MovingSquare::default();
    let f = scene.frame(0);
    let gt = scene.groundtruth()[0];
    let mut a = Tracker::new(&m, TrackerConfig::default());
    let mut b = Tracker::new(&m, TrackerConfig::default());
    let ta = a.init(&f, gt).unwrap().template.clone();
    assert_eq!(&ta, &b.init(&f, gt).unwrap().template);
}

#[test]
fn target_partially_outside_image() {
    let m = model(4);
    let f = MovingSquare::default().frame(0);
    let gt = BBox::new(-15.0, -10.0, 40.0, 40.0);
    let crop = crop_patch(&f, gt.center(), (gt.w, gt.h), 2.0, 128).unwrap();
    assert!(crop.padded_pixels > 0);
    assert!(crop.patch.is_finite());
    let mut t = Tracker::new(&m, TrackerConfig::default());
    t.init(&f, gt).unwrap();
    let b = t.track(&f).unwrap();
    assert!(b.is_valid() && b.x.is_finite() && b.y.is_finite());
}

#[test]
fn track_before_init_is_a_usage_error() {
    let m = model(5);
    let mut t = Tracker::new(&m, TrackerConfig::default());
    let f = ImageFrame::filled(64, 64, [10, 20, 30]).unwrap();
    assert!(matches!(t.track(&f), Err(Error::Usage(_))));
}

#[test]
fn planted_maxima_map_back_to_image_boxes() {
    let geometries = [
        CropGeometry { x0: -40.0, y0: 12.5, side: 160.0, out_size: 256 },
        CropGeometry { x0: 100.0, y0: 80.0, side: 512.0, out_size: 256 },
        CropGeometry { x0: 3.25, y0: -7.0, side: 256.0, out_size: 256 },
    ];
    let targets = [
        BBox::new(10.0, 40.0, 30.0, 50.0),
        BBox::new(300.0, 250.0, 120.0, 64.0),
        BBox::new(100.3, 121.7, 40.0, 40.0),
    ];
    for g in &geometries {
        for b in &targets {
            let nb = g.to_norm(b);
            if !(0.0..1.0).contains(&nb.cx) || !(0.0..1.0).contains(&nb.cy) {
                continue;
            }
            let (ix, iy) = ((nb.cx * 16.0).floor() as usize, (nb.cy * 16.0).floor() as usize);
            let mut score = Tensor::full(&[1, 16, 16], 0.2).unwrap();
            score.data_mut()[iy * 16 + ix] = 0.95;
            let mut offset = Tensor::zeros(&[2, 16, 16]).unwrap();
            let mut size = Tensor::zeros(&[2, 16, 16]).unwrap();
            offset.data_mut()[iy * 16 + ix] = (nb.cx * 16.0 - ix as f64) as f32;
            offset.data_mut()[256 + iy * 16 + ix] = (nb.cy * 16.0 - iy as f64) as f32;
            size.data_mut()[iy * 16 + ix] = nb.w as f32;
            size.data_mut()[256 + iy * 16 + ix] = nb.h as f32;
            let out = HeadOutput { score, size, offset };
            let back = g.to_image(&decode_box(&out, None).unwrap());
            for (a, e) in [(back.x, b.x), (back.y, b.y), (back.w, b.w), (back.h, b.h)] {
                assert!((a - e).abs() <= 0.5, "{back:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn static_sequence_center_drift() {
    let m = model(6);
    let scene = MovingSquare {
        velocity: (0.0, 0.0),
        ..MovingSquare::default()
    };
    let f = scene.frame(0);
    let gt = scene.groundtruth()[0];
    let mut t = Tracker::new(&m, TrackerConfig::default());
    t.init(&f, gt).unwrap();
    let mut prev = t.state().unwrap().center;
    let mut size = t.state().unwrap().size;
    let mut drifts = Vec::new();
    for _ in 0..8 {
        t.track(&f).unwrap();
        let s = t.state().unwrap();
        let cell = 4.0 * (size.0 * size.1).sqrt() / 16.0;
        drifts.push(((s.center.0 - prev.0).hypot(s.center.1 - prev.1)) / cell);
        prev = s.center;
        size = s.size;
    }
    assert!(drifts.iter().all(|&d| d <= 1.0), "per-frame drift in cells: {drifts:?}");
}
