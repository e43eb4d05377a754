use std::f64::consts::PI;

use num_complex::Complex64;
use phasescatter::channel::*;
use phasescatter::phy::Waveform;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn tone(n: usize, fs: f64) -> Waveform<f64> {
    Waveform::new(vec![c(1.0, 0.0); n], fs, 0.0)
}

fn random_wave(n: usize, seed: u64) -> Waveform<f64> {
    use rand::Rng;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let s = (0..n).map(|_| c(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect();
    Waveform::new(s, 20e6, 0.0)
}

/// Plain O(N^2) DFT coefficient at bin `k`, normalized by N.
fn dft_bin(x: &[Complex64], k: i64) -> Complex64 {
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * i as f64 / n))
        .sum::<Complex64>()
        / n
}

#[test]
fn square_wave_first_harmonic_images() {
    // 160 MS/s over 1 us: 1 MHz bins, images at bins +-20.
    let y = mix_square_wave(&tone(160, 160e6), 1);
    for k in [20, -20] {
        assert!((dft_bin(&y.samples, k).norm() - 2.0 / PI).abs() < 1e-9);
    }
    assert!(dft_bin(&y.samples, 0).norm() < 1e-9);
    // Third harmonic adds images at +-60 MHz of amplitude 2/(3 pi).
    let y3 = mix_square_wave(&tone(160, 160e6), 2);
    assert!((dft_bin(&y3.samples, 60).norm() - 2.0 / (3.0 * PI)).abs() < 1e-9);
}

#[test]
fn identity_channel_applies_reflection_only() {
    let x = random_wave(200, 1);
    let g = c(0.3, -0.4);
    let y = propagate(&x, &ChannelModel::identity(), &TagReflectionSchedule::constant(0.0, 10.0, g)).unwrap();
    for (a, b) in x.samples.iter().zip(&y.samples) {
        assert!((a * g - b).norm() < 1e-15);
    }
}

#[test]
fn taps_delay_and_scale() {
    let x = random_wave(100, 2);
    let mut ch = ChannelModel::identity();
    ch.taps = vec![Tap { delay: 3, gain: c(0.0, 2.0) }];
    let y = propagate(&x, &ch, &TagReflectionSchedule::constant(0.0, 5.0, c(1.0, 0.0))).unwrap();
    for n in 0..3 {
        assert_eq!(y.samples[n], c(0.0, 0.0));
    }
    for n in 3..100 {
        assert!((y.samples[n] - x.samples[n - 3] * c(0.0, 2.0)).norm() < 1e-15);
    }
}

#[test]
fn reflection_is_zero_outside_schedule() {
    let x = tone(100, 20e6);
    let y = propagate(&x, &ChannelModel::identity(), &TagReflectionSchedule::constant(1.0, 2.0, c(1.0, 0.0))).unwrap();
    assert_eq!(y.samples[19], c(0.0, 0.0));
    assert_eq!(y.samples[20], c(1.0, 0.0));
    assert_eq!(y.samples[39], c(1.0, 0.0));
    assert_eq!(y.samples[40], c(0.0, 0.0));
}

#[test]
fn cfo_rotates_linearly() {
    let x = tone(400, 20e6);
    let mut ch = ChannelModel::identity();
    ch.cfo_hz = 25e3;
    ch.common_phase_rad = 0.7;
    let y = propagate(&x, &ch, &TagReflectionSchedule::constant(0.0, 20.0, c(1.0, 0.0))).unwrap();
    for (n, v) in y.samples.iter().enumerate() {
        let want = 2.0 * PI * 25e3 * n as f64 / 20e6 + 0.7;
        assert!((v - Complex64::from_polar(1.0, want)).norm() < 1e-12);
    }
}

#[test]
fn noise_power_matches_snr() {
    let x = tone(200_000, 20e6);
    let mut ch = ChannelModel::identity();
    ch.snr_db = Some(10.0);
    ch.seed = 5;
    let y = propagate(&x, &ch, &TagReflectionSchedule::constant(0.0, 1e4, c(1.0, 0.0))).unwrap();
    let p: f64 = y.samples.iter().map(|v| (v - c(1.0, 0.0)).norm_sqr()).sum::<f64>() / y.len() as f64;
    assert!((p - 0.1).abs() < 0.003, "{p}");
}

#[test]
fn schedule_past_waveform_end_rejected() {
    let x = tone(20, 20e6);
    let r = propagate(&x, &ChannelModel::identity(), &TagReflectionSchedule::constant(0.0, 5.0, c(1.0, 0.0)));
    assert!(matches!(r, Err(ChannelError::Schedule(_))));
}

#[test]
fn empty_taps_rejected() {
    let mut ch = ChannelModel::identity();
    ch.taps.clear();
    assert!(ch.validate().is_err());
}

#[test]
fn ramp_trim_keeps_slope() {
    let s = TagReflectionSchedule {
        segments: vec![ReflectionSegment {
            start_us: 0.0,
            end_us: 1.0,
            profile: GammaProfile::Ramp { from: c(0.0, 0.0), to: c(1.0, 0.0) },
        }],
        mixing: Mixing::Off,
        mixer_harmonics: 1,
        mixer_phase_rad: 0.0,
    };
    let t = s.clipped(0.5, 2.0);
    assert!((t.gamma_at(0.75) - s.gamma_at(0.75)).norm() < 1e-12);
    assert_eq!(t.gamma_at(0.25), c(0.0, 0.0));
}

#[test]
fn mixing_keeps_one_image() {
    let mut s = TagReflectionSchedule::constant(0.0, 1.0, c(1.0, 0.0));
    s.mixing = Mixing::SquareWave20MHz;
    s.mixer_phase_rad = 0.4;
    assert!((s.image_gain() - Complex64::from_polar(2.0 / PI, 0.4)).norm() < 1e-15);
}

#[test]
fn frequency_shift_rejects_direct_path() {
    let mut ch = ChannelModel::identity();
    ch.direct_path = vec![Tap::unit()];
    let mut s = TagReflectionSchedule::constant(0.0, 1.0, c(1.0, 0.0));
    assert_eq!(self_interference_power(&ch, &s), InterferenceLevel::Db(0.0));
    s.mixing = Mixing::SquareWave20MHz;
    assert_eq!(self_interference_power(&ch, &s), InterferenceLevel::Rejected);
    ch.adjacent_leakage_db = Some(-35.0);
    assert_eq!(self_interference_power(&ch, &s), InterferenceLevel::Db(-35.0));
}

#[test]
fn realized_taps_have_unit_mean_power() {
    let p = ChannelProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let mean: f64 = (0..n).map(|i| p.realize(&mut rng, i, 1.0).tap_power()).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn bad_profile_rejected() {
    let p = ChannelProfile { n_taps: 0, ..ChannelProfile::default() };
    assert!(p.validate().is_err());
}

proptest! {
    #[test]
    fn propagation_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = random_wave(120, seed);
        let mut ch = ChannelModel::identity();
        ch.taps = vec![Tap { delay: 0, gain: c(0.8, 0.1) }, Tap { delay: 2, gain: c(-0.2, 0.3) }];
        ch.cfo_hz = 1e4;
        ch.sfo_ppm = 15.0;
        let s = TagReflectionSchedule::constant(0.0, 6.0, c(0.5, 0.5));
        let y1 = propagate(&x, &ch, &s).unwrap();
        let y2 = propagate(&x.scaled(c(a, b)), &ch, &s).unwrap();
        for (u, v) in y1.samples.iter().zip(&y2.samples) {
            prop_assert!((u * c(a, b) - v).norm() < 1e-9);
        }
    }

    #[test]
    fn sfo_offset_is_fractional(ppm in -40.0f64..40.0, t in 0.0f64..1e7) {
        let f = sfo_fractional_offset(ppm, t, 20e6);
        prop_assert!((0.0..1.0).contains(&f));
    }

    #[test]
    fn gamma_lookup_hits_right_segment(t in 0.0f64..3.0) {
        let s = TagReflectionSchedule {
            segments: vec![
                ReflectionSegment::constant(0.0, 1.0, c(1.0, 0.0)),
                ReflectionSegment::constant(1.0, 2.0, c(0.0, 1.0)),
            ],
            mixing: Mixing::Off,
            mixer_harmonics: 1,
            mixer_phase_rad: 0.0,
        };
        let want = if t < 1.0 { c(1.0, 0.0) } else if t < 2.0 { c(0.0, 1.0) } else { c(0.0, 0.0) };
        prop_assert_eq!(s.gamma_at(t), want);
    }
}
