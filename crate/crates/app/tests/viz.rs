use flowfill_app::viz::{flow_to_color, hue_degrees};
use flowfill_core::FlowField;

fn uniform(w: usize, h: usize, v: [f64; 2]) -> FlowField {
    FlowField::from_vec(w, h, vec![v; w * h]).unwrap()
}

#[test]
fn zero_field_is_white() {
    let img = flow_to_color(&FlowField::zeros(5, 4), None);
    assert_eq!(img.channels(), 3);
    assert!(img.data().iter().all(|v| *v == 1.0));
}

#[test]
fn uniform_field_has_one_hue() {
    let img = flow_to_color(&uniform(6, 6, [2.0, 0.0]), None);
    let first = img.pixel(0, 0).to_vec();
    assert!(hue_degrees(&first).is_some());
    for y in 0..6 {
        for x in 0..6 {
            assert_eq!(img.pixel(x, y), &first[..]);
        }
    }
}

#[test]
fn opposite_directions_are_complementary() {
    for r in [0.5, 3.0] {
        for angle in [0.0f64, 40.0, 90.0, 200.0] {
            let (s, c) = angle.to_radians().sin_cos();
            let a = flow_to_color(&uniform(2, 2, [r * c, r * s]), Some(r));
            let b = flow_to_color(&uniform(2, 2, [-r * c, -r * s]), Some(r));
            let (ha, hb) = (hue_degrees(a.pixel(0, 0)).unwrap(), hue_degrees(b.pixel(0, 0)).unwrap());
            let gap = (ha - hb).rem_euclid(360.0);
            assert!((gap - 180.0).abs() < 1e-9, "{angle}: {ha} vs {hb}");
            // Full saturation: the complementary colours sum to white.
            for (p, q) in a.pixel(0, 0).iter().zip(b.pixel(0, 0)) {
                assert!((p + q - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn saturation_tracks_magnitude_and_clamps() {
    let v: Vec<[f64; 2]> = [0.0, 1.0, 2.0, 4.0, 8.0].iter().map(|&m| [m, 0.0]).collect();
    let img = flow_to_color(&FlowField::from_vec(5, 1, v).unwrap(), Some(4.0));
    // Rightward vectors are red; the other channels fall with magnitude.
    let g: Vec<f64> = (0..5).map(|x| img.get(x, 0, 1)).collect();
    assert_eq!(g, vec![1.0, 0.75, 0.5, 0.0, 0.0]);
    assert!((0..5).all(|x| img.get(x, 0, 0) == 1.0));
}

#[test]
fn auto_scale_uses_the_field_maximum() {
    let v = vec![[0.0, 1.0], [0.0, 4.0]];
    let f = FlowField::from_vec(2, 1, v).unwrap();
    assert_eq!(flow_to_color(&f, None), flow_to_color(&f, Some(4.0)));
}
