use proptest::prelude::*;
use topo_proto::geometry::{cosine_sim, geodesic_angle, normalize, slerp, RawVector, UnitVector};
use topo_proto::Error;

fn raw_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|d| (raw_vec(d), raw_vec(d)))
}

fn unit(v: &[f64]) -> UnitVector {
    UnitVector::from_raw(v).unwrap()
}

proptest! {
    #[test]
    fn slerp_stays_on_sphere_and_in_plane((a, b) in pair(), eta in 0.0f64..=1.0) {
        let (v, z) = (unit(&a), unit(&b));
        let omega = geodesic_angle(&v, &z).unwrap();
        prop_assume!(omega < std::f64::consts::PI - 1e-6);
        let s = slerp(&v, &z, eta).unwrap();
        let n: f64 = s.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() <= 1e-9);

        // Residual after projecting onto span{v, z} via Gram-Schmidt.
        let (vs, zs, ss) = (v.as_slice(), z.as_slice(), s.as_slice());
        let dv: f64 = vs.iter().zip(zs).map(|(x, y)| x * y).sum();
        let w: Vec<f64> = zs.iter().zip(vs).map(|(z, v)| z - dv * v).collect();
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let pv: f64 = ss.iter().zip(vs).map(|(x, y)| x * y).sum();
        let mut resid: Vec<f64> = ss.iter().zip(vs).map(|(s, v)| s - pv * v).collect();
        if wn > 1e-9 {
            let pw: f64 = resid.iter().zip(&w).map(|(r, w)| r * w / wn).sum();
            for (r, w) in resid.iter_mut().zip(&w) {
                *r -= pw * w / wn;
            }
        }
        prop_assert!(resid.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-9);

        if omega > 1e-6 {
            let got = geodesic_angle(&v, &s).unwrap();
            prop_assert!((got - eta * omega).abs() <= 1e-6, "{got} vs {}", eta * omega);
        }
    }

    #[test]
    fn endpoints_are_exact((a, b) in pair()) {
        let (v, z) = (unit(&a), unit(&b));
        prop_assume!(geodesic_angle(&v, &z).unwrap() < std::f64::consts::PI - 1e-6);
        prop_assert_eq!(slerp(&v, &z, 0.0).unwrap(), v.clone());
        prop_assert_eq!(slerp(&v, &z, 1.0).unwrap(), z);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded((a, b) in pair()) {
        let (v, z) = (unit(&a), unit(&b));
        let c1 = cosine_sim(&v, &z).unwrap();
        let c2 = cosine_sim(&z, &v).unwrap();
        prop_assert_eq!(c1, c2);
        prop_assert!(c1 <= 1.0);
        prop_assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let angle = geodesic_angle(&v, &z).unwrap();
        prop_assert!((angle - c1.clamp(-1.0, 1.0).acos()).abs() <= 1e-9);
    }

    #[test]
    fn normalize_gives_unit_norm(a in (2usize..20).prop_flat_map(raw_vec)) {
        let u = normalize(&RawVector::new(a).unwrap()).unwrap();
        let n: f64 = u.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn antipodal_slerp_is_an_error() {
    let v = UnitVector::basis(4, 0);
    let z = UnitVector::from_raw(&[-1.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(matches!(slerp(&v, &z, 0.5), Err(Error::AntipodalInputs { .. })));
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let v = UnitVector::basis(3, 0);
    let z = UnitVector::basis(4, 1);
    assert!(matches!(cosine_sim(&v, &z), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(slerp(&v, &z, 0.2), Err(Error::DimensionMismatch { .. })));
}
