use holedim::covering::{survivors, SurvivorSpec};
use holedim::dimension::{deficit_sweep, survivor_dimension, SweepProtocol};
use holedim::mixing::{correlation, entry_fraction, Quadrature, TorusObservable};
use holedim::mollifier::{build_psi, LeafBump, PsiOnTorus};
use holedim::system::ToralSystem;
use holedim::{make_system, Hole, Point};

fn cat() -> ToralSystem<f64> {
    make_system(vec![vec![2, 1], vec![1, 1]]).unwrap()
}

#[test]
fn entry_complement_is_the_covering_survivor_set() {
    let sys = cat();
    for (x, r, t) in [
        ([0.5, 0.5], 0.1, 4u64),
        ([0.31, 0.77], 0.2, 9),
        ([0.12, 0.4], 0.15, 15),
    ] {
        let base = Point::float(x.to_vec());
        let delta = r * 1e-3;
        let e = entry_fraction(
            &sys,
            &base,
            &Hole::new(Point::float(vec![0.0, 0.0]), r).unwrap(),
            t,
            delta,
        )
        .unwrap();
        let half = Hole::new(Point::float(vec![0.0, 0.0]), r / 2.0).unwrap();
        let spec = SurvivorSpec::new(t, r, half, base, 1).unwrap();
        let e1 = survivors(&sys, &spec, delta).unwrap();
        assert_eq!(e.survivor_cells, e1.len() as u64);
        assert_eq!(e.total_cells, e1.grid.len());
    }
}

struct Mix<'a>(&'a PsiOnTorus<f64>, &'a PsiOnTorus<f64>, f64, f64);

impl TorusObservable for Mix<'_> {
    fn value_at(&self, pos: &[u128]) -> f64 {
        self.2 * self.0.value_at_fractions(pos) + self.3 * self.1.value_at_fractions(pos)
    }
}

#[test]
fn correlation_is_linear_in_psi() {
    let sys = cat();
    let f = LeafBump::new(1, 0.1, 0.05).unwrap();
    let a = build_psi(&sys, &Point::float(vec![0.0, 0.0]), 0.2, 0.05).unwrap();
    let b = build_psi(&sys, &Point::float(vec![0.3, 0.6]), 0.1, 0.02).unwrap();
    let x = Point::float(vec![0.0, 0.0]);
    let q = Quadrature {
        leaf_cells: 1 << 14,
        torus_points: 256,
    };
    for t in [0u64, 3, 9] {
        let ca = correlation(&sys, &f, &a, &x, t, q).unwrap().value;
        let cb = correlation(&sys, &f, &b, &x, t, q).unwrap().value;
        let cm = correlation(&sys, &f, &Mix(&a, &b, 2.5, -0.75), &x, t, q)
            .unwrap()
            .value;
        assert!((cm - (2.5 * ca - 0.75 * cb)).abs() < 1e-10);
    }
}

#[test]
fn f32_and_f64_pipelines_agree_on_survivor_dimension() {
    let s64 = cat();
    let s32 = make_system::<f32>(vec![vec![2, 1], vec![1, 1]]).unwrap();
    let r = 0.12;
    let finest = r * (-10.0 * s64.lambda0()).exp() / 4.0;
    let d64 = survivor_dimension(
        &s64,
        &Hole::new(Point::float(vec![0.0, 0.0]), r).unwrap(),
        &Point::float(vec![0.5, 0.5]),
        1,
        10,
        finest,
    )
    .unwrap();
    let d32 = survivor_dimension(
        &s32,
        &Hole::new(holedim::system::Point::float(vec![0.0f32, 0.0]), r as f32).unwrap(),
        &holedim::system::Point::float(vec![0.5f32, 0.5]),
        1,
        10,
        finest as f32,
    )
    .unwrap();
    assert!((d64.estimate.slope - d32.estimate.slope).abs() < 0.01);
}

#[test]
fn sweep_rows_follow_hole_monotonicity() {
    let sys = cat();
    let protocol = SweepProtocol {
        k_max: 10,
        ..SweepProtocol::default()
    };
    let s = deficit_sweep(
        &sys,
        &Point::float(vec![0.0, 0.0]),
        &[0.05, 0.1, 0.15, 0.2],
        &protocol,
    )
    .unwrap();
    assert!(s
        .rows
        .windows(2)
        .all(|w| w[1].survivor_fraction <= w[0].survivor_fraction));
    assert!(s.deficits_monotone);
}
