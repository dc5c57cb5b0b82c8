// SPDX-License-Identifier: Apache-2.0

use decoh_core::oracles::smeared_delta_i2;
use decoh_core::wavepacket_mc::{reduced_integral_i2, GaussianBilinear, ReducedQuadrature};
use decoh_core::{AmplitudeModel, Kinematics, PotentialModel, Vec3};
use num_complex::Complex64;

#[test]
fn reduced_i2_matches_smeared_delta_sampling() {
    let kin = Kinematics::default();
    let m = AmplitudeModel::BornPotential {
        potential: PotentialModel::Gaussian {
            strength: 0.05,
            width: 0.7,
        },
    };
    let p = Vec3::new(0.3, -0.2, 3.0);
    let u = GaussianBilinear {
        momentum: p,
        b: 0.5,
        center: Vec3::new(0.4, 0.1, 0.0),
        hbar: 1.0,
    };
    let r = Vec3::new(0.5, 0.2, 0.3);
    let i2 = reduced_integral_i2(
        |a, b| u.value(a, b),
        &m,
        r,
        kin,
        &ReducedQuadrature::for_packet(p, 0.5),
    )
    .unwrap();
    let est = smeared_delta_i2(&u, &m, r, kin, &[0.04, 0.03, 0.02], 4_000_000, 7).unwrap();
    let ex = est.extrapolated_complex();
    assert!(
        (ex - i2).norm() <= 3.0 * est.extrapolated_stderr,
        "{ex} vs {i2} (stderr {:e})",
        est.extrapolated_stderr
    );
    // The two-point extrapolations agree far better than the widest width
    // agrees with the limit, so the s² model holds.
    let widest = Complex64::new(est.values[0].0, est.values[0].1);
    assert!(est.richardson_gap <= 0.1 * (widest - ex).norm());
    assert!(est.richardson_gap <= 3.0 * est.richardson_gap_stderr);
}
