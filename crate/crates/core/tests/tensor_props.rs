use duc_hdc_core::tensor::{elementwise, he_init, ElementOp, Operand};
use duc_hdc_core::{Rng, Shape, Tensor};
use proptest::prelude::*;

fn shape_strategy() -> impl Strategy<Value = Shape> {
    (1usize..4, 1usize..4, 1usize..6, 1usize..6).prop_map(|(n, c, h, w)| Shape::new(n, c, h, w).unwrap())
}

#[test]
fn he_init_golden_sequence() {
    let golden: Vec<f64> = include_str!("fixtures/he_init_seed42_fan9.txt")
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    let t = he_init(Shape::new(1, 1, 1, 4).unwrap(), 9, &mut Rng::new(42)).unwrap();
    assert_eq!(t.data(), golden.as_slice());
}

proptest! {
    #[test]
    fn flatten_reshape_round_trip(shape in shape_strategy(), seed in any::<u64>()) {
        let t = he_init(shape, 1, &mut Rng::new(seed)).unwrap();
        let back = Tensor::from_vec(shape, t.flatten()).unwrap();
        prop_assert_eq!(&back, &t);
        let flat = Shape::new(1, 1, 1, shape.len()).unwrap();
        prop_assert_eq!(t.clone().reshape(flat).unwrap().reshape(shape).unwrap(), t);
    }

    #[test]
    fn elementwise_commutes_with_flatten(shape in shape_strategy(), seed in any::<u64>(), s in -3.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let a = he_init(shape, 1, &mut rng).unwrap();
        let b = he_init(shape, 1, &mut rng).unwrap();
        for (op, f) in [
            (ElementOp::Add, (|x, y| x + y) as fn(f64, f64) -> f64),
            (ElementOp::Sub, |x, y| x - y),
            (ElementOp::Mul, |x, y| x * y),
        ] {
            let applied = elementwise(op, &a, Operand::Tensor(&b)).unwrap().flatten();
            let manual: Vec<f64> = a.flatten().iter().zip(b.flatten()).map(|(&x, y)| f(x, y)).collect();
            prop_assert_eq!(applied, manual);
        }
        let scaled = elementwise(ElementOp::Scale, &a, Operand::Scalar(s)).unwrap().flatten();
        prop_assert_eq!(scaled, a.flatten().iter().map(|x| x * s).collect::<Vec<_>>());
    }
}
