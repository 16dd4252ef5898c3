use supersub_core::data::{synthetic_centers, Centers};
use supersub_core::{generate_synthetic, Error, HierarchyManifest, LabelView, SyntheticSpec};

/// Superclass sizes of the ten-superclass ImageNet subset.
const TABLE: [(&str, usize); 10] = [
    ("Bird", 52),
    ("Boat", 6),
    ("Car", 10),
    ("Cat", 8),
    ("Dog", 116),
    ("Fruit", 7),
    ("Fungus", 7),
    ("Insect", 27),
    ("Monkey", 13),
    ("Truck", 7),
];

fn table_manifest_json() -> String {
    let supers: Vec<String> = TABLE
        .iter()
        .map(|(name, n)| {
            let subs: Vec<String> = (0..*n).map(|j| format!("\"{}_{j}\"", name.to_lowercase())).collect();
            format!("{{\"name\": \"{name}\", \"subclasses\": [{}]}}", subs.join(", "))
        })
        .collect();
    format!("{{\"superclasses\": [{}]}}", supers.join(",\n"))
}

#[test]
fn ten_superclass_manifest() {
    let m = HierarchyManifest::parse(&table_manifest_json()).unwrap();
    assert_eq!(m.n_super(), 10);
    assert_eq!(m.n_sub(), 253);
    let bird = m.superclass_index("Bird").unwrap();
    assert_eq!(m.subclass_count(bird).unwrap(), 52);
    assert_eq!(m.subclass_count(m.superclass_index("Dog").unwrap()).unwrap(), 116);
    let total: usize = (0..10).map(|i| m.subclass_count(i).unwrap()).sum();
    assert_eq!(total, 253);
    for i in 0..10 {
        for sub in m.subclass_range(i).unwrap() {
            assert_eq!(m.super_of(sub).unwrap(), i);
        }
    }
    assert!(matches!(m.super_of(253), Err(Error::Index { .. })));
    assert_eq!(HierarchyManifest::parse(&m.to_json()).unwrap(), m);
}

fn golden_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_super: 5,
        subs_per_super: vec![4; 5],
        dim: 32,
        super_sep: 6.0,
        sub_sep: 1.5,
        noise_sigma: 1.0,
        n_train_per_sub: 200,
        n_test_per_sub: 50,
        seed: 7,
    }
}

fn nearest(centers: &[Vec<f32>], x: &[f32]) -> usize {
    let d2 = |c: &[f32]| c.iter().zip(x).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>();
    (0..centers.len())
        .min_by(|&a, &b| d2(&centers[a]).total_cmp(&d2(&centers[b])))
        .unwrap()
}

#[test]
fn nearest_superclass_center_is_near_perfect() {
    let spec = golden_spec();
    let Centers { superclass, .. } = synthetic_centers(&spec).unwrap();
    let (_, test) = generate_synthetic(&spec).unwrap();
    let (x, y) = test.view(LabelView::Superclass).unwrap();
    let hits = (0..x.rows())
        .filter(|&r| nearest(&superclass, x.row(r)) == y[r])
        .count();
    assert!(hits as f64 >= 0.99 * x.rows() as f64, "{hits}/{}", x.rows());
}

#[test]
fn samples_scatter_around_their_subclass_center() {
    let spec = golden_spec();
    let centers = synthetic_centers(&spec).unwrap();
    let (train, _) = generate_synthetic(&spec).unwrap();
    // mean squared distance to the own center estimates dim * noise_sigma^2
    let mut total = 0.0;
    for (r, &sub) in train.sub_labels().iter().enumerate() {
        let c = &centers.subclass[sub];
        total += train
            .features()
            .row(r)
            .iter()
            .zip(c)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>();
    }
    let mean = total / train.len() as f64;
    assert!((mean - 32.0).abs() < 0.5, "{mean}");
}

#[test]
fn count_arithmetic() {
    let spec = SyntheticSpec {
        n_super: 2,
        subs_per_super: vec![2, 2],
        dim: 2,
        super_sep: 6.0,
        sub_sep: 1.0,
        noise_sigma: 1.0,
        n_train_per_sub: 5,
        n_test_per_sub: 3,
        seed: 1,
    };
    let (train, test) = generate_synthetic(&spec).unwrap();
    assert_eq!((train.len(), test.len()), (20, 12));
    let (again, _) = generate_synthetic(&spec).unwrap();
    assert_eq!(again.to_bytes(), train.to_bytes());
}
