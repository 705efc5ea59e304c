use crate::error::{Error, Result};
use crate::model::{GainVector, MeasurementMatrix};
use nalgebra::DMatrix;

/// Least-squares diagonal gains from known training signals.
///
/// Minimizes `‖Y − diag(d)·Z‖_F` with `Z = M₀X`, which decouples per row:
/// `d̂ᵢ = ⟨Yᵢ, Zᵢ⟩ / ‖Zᵢ‖²`. Rows where `Z` vanishes are reported as
/// [`Error::Unidentifiable`].
pub fn supervised_calibrate(
    y: &DMatrix<f64>,
    m0: &MeasurementMatrix,
    x_known: &DMatrix<f64>,
) -> Result<GainVector> {
    if x_known.nrows() != m0.ncols() || y.nrows() != m0.nrows() || y.ncols() != x_known.ncols() {
        return Err(Error::shape(
            format!("Y {}xL and X {}xL", m0.nrows(), m0.ncols()),
            format!("Y {}x{} and X {}x{}", y.nrows(), y.ncols(), x_known.nrows(), x_known.ncols()),
        ));
    }
    let z = m0.entries() * x_known;
    let floor = f64::EPSILON * z.norm();
    let mut bad = Vec::new();
    let mut d = nalgebra::DVector::zeros(y.nrows());
    for i in 0..y.nrows() {
        let zi = z.row(i);
        let zz = zi.norm_squared();
        if zz.sqrt() <= floor || zz == 0.0 {
            bad.push(i);
            continue;
        }
        d[i] = y.row(i).dot(&zi) / zz;
    }
    if !bad.is_empty() {
        return Err(Error::Unidentifiable(bad));
    }
    GainVector::new(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{apply_gains, make_instance, Dimensions};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_data_recovers_gains() {
        let inst = make_instance(Dimensions::new(40, 20, 5, 6).unwrap(), 0.5, 4).unwrap();
        let d = supervised_calibrate(&inst.observations, &inst.m0, &inst.signals.entries).unwrap();
        for (a, b) in d.values().iter().zip(inst.gains.values().iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs());
        }
    }

    #[test]
    fn noisy_data_error_scales_with_noise() {
        let inst = make_instance(Dimensions::new(40, 20, 5, 200).unwrap(), 0.5, 8).unwrap();
        let z = inst.m0.entries() * &inst.signals.entries;
        let mut r = crate::rng::substream(1, "noise");
        let noise_level = 1e-4;
        let noise = DMatrix::from_fn(20, 200, |_, _| noise_level * r.sample::<f64, _>(StandardNormal));
        let y = apply_gains(inst.gains.values(), &z) + &noise;
        let d = supervised_calibrate(&y, &inst.m0, &inst.signals.entries).unwrap();
        for i in 0..20 {
            // least-squares perturbation: |Δdᵢ| = |⟨nᵢ, zᵢ⟩| / ‖zᵢ‖², std = σ_noise / ‖zᵢ‖
            let bound = 5.0 * noise_level / z.row(i).norm();
            assert!((d.values()[i] - inst.gains.values()[i]).abs() <= bound);
        }
    }

    #[test]
    fn zero_rows_are_unidentifiable() {
        let m0 = MeasurementMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[1., 0., 0., 0., 1., 0., 0., 0., 1.],
        ))
        .unwrap();
        // X has a zero second row, so Z's second row is zero
        let x = DMatrix::from_row_slice(3, 2, &[1., 2., 0., 0., 3., 1.]);
        let y = m0.entries() * &x;
        match supervised_calibrate(&y, &m0, &x) {
            Err(Error::Unidentifiable(rows)) => assert_eq!(rows, vec![1]),
            other => panic!("expected unidentifiable, got {other:?}"),
        }
    }
}
