//! Library routines checked against independent reference computations.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::HashMap;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use odfuse::analytics::{
    mean_strength_series, modified_band_depth, mse_series, smooth_curves, CubicBSplineBasis,
    PenalizedFit, DEFAULT_BASIS_CANDIDATES, DEFAULT_PENALTY_GRID,
};
use odfuse::gravity::{build_observations, fit_ols};
use odfuse::ipf::{ipf_run, normalize};
use odfuse::network::build_direct_paths;
use odfuse::ticketing::convert_tickets;
use odfuse::timetable::compute_transfers;
use odfuse::{
    CellMask, CounterTally, Line, MarginVectors, RideStatus, SquareMatrix, StationId,
    SyntheticScenario, TicketKind, TicketRecord, TravelTimeMatrix, WeekCalendar, WeeklyOD,
    WeeklySeedOD,
};
use rand::Rng;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn line(id: &str, stations: &[usize]) -> Line {
    Line::new(id, stations.iter().map(|&s| StationId(s)).collect()).unwrap()
}

#[test]
fn transfer_table_matches_enumeration_with_ties() {
    let mut r = common::rng(41);
    for _ in 0..20 {
        let n = 8;
        // Two or three random lines over a shuffled station order keep every station served.
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let cut = r.random_range(3..n - 2);
        let mut lines = vec![line("A", &order[..=cut]), line("B", &order[cut..])];
        if r.random_bool(0.5) {
            lines.push(line("C", &[order[0], order[n - 1]]));
        }
        let direct = build_direct_paths(&lines, n).unwrap();
        let mut times = TravelTimeMatrix::undefined(n);
        for (i, j) in direct.pairs() {
            // Small integers make ties frequent.
            if r.random_bool(0.9) {
                times.set(i, j, r.random_range(1..4) as f64);
            }
        }
        let (table, extended) = compute_transfers(&times, &direct);
        for i in 0..n {
            for j in 0..n {
                if i == j || direct.contains(i, j) {
                    assert_eq!(table.get(i, j), None);
                    continue;
                }
                let mut candidates = Vec::new();
                for k in 0..n {
                    if k != i && k != j && direct.contains(i, k) && direct.contains(k, j) {
                        if let (Some(a), Some(b)) = (times.get(i, k), times.get(k, j)) {
                            candidates.push((a + b, k));
                        }
                    }
                }
                candidates.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let want = candidates.first().map(|&(_, k)| StationId(k));
                assert_eq!(table.get(i, j), want, "pair ({i},{j})");
                assert_eq!(extended.get(i, j), candidates.first().map(|c| c.0));
            }
        }
    }
}

#[test]
fn ordinary_tickets_spread_over_following_week() {
    let cal = WeekCalendar::new(date(2022, 6, 6), 3).unwrap();
    let rec = TicketRecord::new(
        StationId(0),
        StationId(1),
        TicketKind::Ordinary,
        date(2022, 6, 13),
        1000.0,
        false,
    )
    .unwrap();
    let conv = convert_tickets(&[rec], &cal, 2, 5).unwrap();
    let same = conv.seeds[1].x_star[(0, 1)];
    let next = conv.seeds[2].x_star[(0, 1)];
    assert_eq!(conv.seeds[0].x_star[(0, 1)], 0.0);
    assert_eq!(same + next, 500.0);
    assert_eq!(conv.seeds[1].x_star[(1, 0)], same);
    // Day offsets 1..=7 from a Monday: six land in the same week, one on the next Monday.
    let share = same / 500.0;
    let sd = (6.0 / 49.0 / 1000.0f64).sqrt();
    assert!((share - 6.0 / 7.0).abs() < 4.0 * sd, "share {share}");
}

#[test]
fn gravity_observation_count_by_enumeration() {
    // Direct pairs: 0-1, 0-2, 1-2 on line A and 2-3 on line B.
    let direct = build_direct_paths(&[line("A", &[0, 1, 2]), line("B", &[2, 3])], 4).unwrap();
    let mut times = TravelTimeMatrix::undefined(4);
    for (i, j) in direct.pairs() {
        if (i, j) != (1, 2) && (i, j) != (2, 1) {
            times.set(i, j, 10.0 + (i + j) as f64);
        }
    }
    let mut mask = CellMask::filled(4, false);
    mask[(0, 2)] = true;
    let margins = vec![
        MarginVectors {
            week: 0,
            p: vec![5, 0, 7, 3],
            a: vec![4, 6, 0, 2],
            coverage: vec![1.0; 4],
        },
        MarginVectors {
            week: 1,
            p: vec![5, 5, 5, 5],
            a: vec![5, 5, 5, 5],
            coverage: vec![1.0; 4],
        },
    ];
    let mut seeds = vec![WeeklySeedOD::zeros(0, 4), WeeklySeedOD::zeros(1, 4)];
    seeds[0].x_star[(0, 1)] = 3.0;
    let obs = build_observations(&seeds, &margins, &times, &direct, &mask);

    // Candidates with a time and no mask: 01 10 20 23 32.
    // Week 0 drops 10 (p_1 = 0) and 32 (a_2 = 0).
    let mut want = vec![(0, 0, 1), (0, 2, 0), (0, 2, 3)];
    want.extend([(1, 0, 1), (1, 1, 0), (1, 2, 0), (1, 2, 3), (1, 3, 2)]);
    let mut got: Vec<_> = obs.iter().map(|o| (o.week, o.origin.0, o.dest.0)).collect();
    got.sort();
    assert_eq!(got, want);

    let first = obs.iter().find(|o| o.week == 0 && o.origin.0 == 0).unwrap();
    assert_eq!(first.log_flow, 3f64.ln());
    let zero = obs
        .iter()
        .find(|o| o.week == 1 && o.origin.0 == 2 && o.dest.0 == 3)
        .unwrap();
    assert_eq!(zero.log_flow, 0.01f64.ln());
    assert_eq!(zero.log_t, 15f64.ln());
}

#[test]
fn ols_matches_normal_equations() {
    let mut r = common::rng(7);
    for _ in 0..20 {
        let coef = [
            r.random_range(-2.0..2.0),
            r.random_range(0.2..1.5),
            r.random_range(0.2..1.5),
            r.random_range(-2.0..0.0),
        ];
        let obs = common::gravity_design(&mut r, 50, 0.5, coef);
        let fit = fit_ols(&obs).unwrap();
        let want = common::normal_equations(&obs);
        for (g, w) in fit.coefficients().iter().zip(want) {
            assert!((g - w).abs() < 1e-8, "{g} vs {w}");
        }
    }
}

#[test]
fn ols_recovers_noiseless_coefficients() {
    let mut r = common::rng(8);
    let coef = [1.3, 0.8, 0.6, -1.1];
    let obs = common::gravity_design(&mut r, 40, 0.0, coef);
    let fit = fit_ols(&obs).unwrap();
    for (g, w) in fit.coefficients().iter().zip(coef) {
        assert!((g - w).abs() < 1e-8, "{g} vs {w}");
    }
    assert!((fit.r_squared - 1.0).abs() < 1e-10);
}

#[test]
fn two_by_two_ipf_matches_reference_loop() {
    let seed = SquareMatrix::from_vec(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let ps = normalize(&seed, &[30.0, 70.0], &[40.0, 60.0], 0).unwrap();
    assert_eq!(ps.rho, vec![0.3, 0.7]);
    assert_eq!(ps.alpha, vec![0.4, 0.6]);
    let res = ipf_run(&ps, 1e-10, 1000).unwrap();
    assert!(res.converged);
    let want = common::ipf_oracle(
        &[vec![1.0, 2.0], vec![3.0, 4.0]],
        &[0.3, 0.7],
        &[0.4, 0.6],
        1e-14,
        100_000,
    );
    for i in 0..2 {
        for j in 0..2 {
            assert!((res.pi[(i, j)] - want[i][j]).abs() < 1e-8);
        }
    }
    // Scaling preserves the cross-product ratio of the seed.
    let ratio = res.pi[(0, 0)] * res.pi[(1, 1)] / (res.pi[(0, 1)] * res.pi[(1, 0)]);
    assert!((ratio - 4.0 / 6.0).abs() < 1e-8, "ratio {ratio}");
}

fn random_ods(r: &mut impl Rng, weeks: usize, n: usize) -> Vec<WeeklyOD> {
    (0..weeks)
        .map(|w| WeeklyOD {
            week: w,
            x: SquareMatrix::from_fn(n, |i, j| if i == j { 0 } else { r.random_range(0..5000) }),
        })
        .collect()
}

#[test]
fn mse_and_mean_strength_match_direct_loops() {
    let mut r = common::rng(12);
    let n = 6;
    let ods = random_ods(&mut r, 5, n);
    let mse = mse_series(&ods).unwrap();
    assert_eq!(mse.first_week, 1);
    for w in 1..ods.len() {
        let want = common::mse_oracle(ods[w - 1].x.as_slice(), ods[w].x.as_slice(), n);
        assert_eq!(mse.values[w - 1].to_bits(), want.to_bits());
    }
    let ms = mean_strength_series(&ods).unwrap();
    for (w, od) in ods.iter().enumerate() {
        let mut total = 0u64;
        for i in 0..n {
            for j in 0..n {
                total += od.x[(i, j)];
            }
        }
        assert_eq!(ms.values[w], 2.0 * total as f64 / n as f64);
    }
}

#[test]
fn band_depth_matches_pair_enumeration() {
    let mut r = common::rng(21);
    for _ in 0..10 {
        let curves: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..12).map(|_| r.random_range(0..6) as f64).collect())
            .collect();
        let got = modified_band_depth(&curves);
        let want = common::band_depth_oracle(&curves);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}

#[test]
fn penalty_matches_finite_difference_quadrature() {
    let basis = CubicBSplineBasis::new(8, 15).unwrap();
    let r = basis.penalty();
    let k = basis.count();
    let h = 1e-4;
    let steps = 14_000;
    let dx = 14.0 / steps as f64;
    let mut acc = DMatrix::<f64>::zeros(k, k);
    for s in 0..steps {
        // Midpoints stay clear of the knots.
        let x = (s as f64 + 0.5) * dx;
        let (l, c, u) = (basis.eval(x - h), basis.eval(x), basis.eval(x + h));
        let d2: Vec<f64> = (0..k)
            .map(|m| (l[m] - 2.0 * c[m] + u[m]) / (h * h))
            .collect();
        for a in 0..k {
            for b in 0..k {
                acc[(a, b)] += d2[a] * d2[b] * dx;
            }
        }
    }
    let scale = r.amax();
    let diff = (r - acc).amax();
    assert!(diff < 1e-3 * scale, "max deviation {diff} of {scale}");
}

fn noisy_sine(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| (std::f64::consts::TAU * t as f64 / 12.0).sin() + r.random_range(-0.3..0.3))
        .collect()
}

/// Mean GCV through an explicit hat matrix `B (B'B + lambda R)^-1 B'`.
fn gcv_by_hat_matrix(curves: &[Vec<f64>], k: usize, lambda: f64) -> Option<f64> {
    let n = curves[0].len();
    let basis = CubicBSplineBasis::new(k, n).unwrap();
    let b = basis.design();
    let inv = (b.transpose() * &b + basis.penalty() * lambda).try_inverse()?;
    let hat = &b * inv * b.transpose();
    let df = hat.trace();
    if n as f64 - df < 1e-6 {
        return None;
    }
    let mut total = 0.0;
    for c in curves {
        let y = DVector::from_column_slice(c);
        let resid = &y - &hat * &y;
        total += n as f64 * resid.norm_squared() / (n as f64 - df).powi(2);
    }
    Some(total / curves.len() as f64)
}

#[test]
fn gcv_selection_matches_hat_matrix_grid() {
    let mut r = common::rng(33);
    let n = 29;
    let curves: Vec<Vec<f64>> = (0..3).map(|_| noisy_sine(&mut r, n)).collect();
    let sel = smooth_curves(&curves, &DEFAULT_BASIS_CANDIDATES, &DEFAULT_PENALTY_GRID).unwrap();

    let mut best: Option<(usize, f64, f64)> = None;
    for &k in &DEFAULT_BASIS_CANDIDATES {
        for &lambda in &DEFAULT_PENALTY_GRID {
            let Some(g) = gcv_by_hat_matrix(&curves, k, lambda) else {
                continue;
            };
            let lib = sel
                .grid
                .iter()
                .find(|e| e.0 == k && e.1 == lambda)
                .unwrap()
                .2;
            assert!(
                (lib - g).abs() <= 1e-8 * g.max(1.0),
                "k={k} lambda={lambda}: {lib} vs {g}"
            );
            if best.is_none_or(|b| g < b.2) {
                best = Some((k, lambda, g));
            }
        }
    }
    let (k, lambda, _) = best.unwrap();
    assert_eq!((sel.basis_count, sel.penalty), (k, lambda));

    // Against a fresh noise draw the selected smoother beats a single unpenalized cubic.
    let truth: Vec<f64> = (0..n)
        .map(|t| (std::f64::consts::TAU * t as f64 / 12.0).sin())
        .collect();
    let held_out: Vec<f64> = truth
        .iter()
        .map(|v| v + r.random_range(-0.3..0.3))
        .collect();
    let cubic = PenalizedFit::new(CubicBSplineBasis::new(4, n).unwrap(), 0.0).unwrap();
    let sse = |f: &[f64]| -> f64 { f.iter().zip(&held_out).map(|(a, b)| (a - b).powi(2)).sum() };
    let sel_sse = sse(&sel.fitted[0]);
    let cubic_sse = sse(&cubic.smooth(&curves[0]).unwrap());
    assert!(sel_sse < cubic_sse, "{sel_sse} vs {cubic_sse}");
}

#[test]
fn strength_of_estimate_tracks_counted_margins() {
    let dir = tempfile::tempdir().unwrap();
    let data = odfuse::generate_scenario(&SyntheticScenario::standard(4)).unwrap();
    let cfg = odfuse::synthetic::write_to_dir(&data, 4, dir.path()).unwrap();
    odfuse::run_pipeline(&cfg).unwrap();
    let ods = odfuse::io::read_od(&cfg.output_dir.join("od.csv"), &data.registry, 8).unwrap();
    let n = data.registry.len();
    let (p, a) = (data.true_boarded(), data.true_alighted());
    for (w, od) in ods.iter().enumerate() {
        let (rows, cols) = (od.x.row_sums(), od.x.col_sums());
        for i in 0..n {
            let sigma = rows[i] + cols[i];
            let want = p[w][i] + a[w][i];
            assert!(
                sigma.abs_diff(want) <= n as u64,
                "week {w} station {i}: {sigma} vs {want}"
            );
        }
    }
}

#[test]
fn dropout_rescaling_within_sampling_error() {
    let mut s = SyntheticScenario::standard(9);
    s.dropout = 0.2;
    let data = odfuse::generate_scenario(&s).unwrap();
    let n = data.registry.len();
    let margins = CounterTally::from_records(&data.counters, &data.calendar, n)
        .all_margins()
        .unwrap();
    let truth = data.true_boarded();

    // Per-ride boarded counts of the observed rides, and the number of non-cancelled rides.
    let mut observed: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    let mut rides: HashMap<(usize, usize), usize> = HashMap::new();
    for rec in &data.counters {
        let Some(w) = data.calendar.week_of(rec.date) else {
            continue;
        };
        let key = (w, rec.station.0);
        if rec.status() != RideStatus::Cancelled {
            *rides.entry(key).or_default() += 1;
        }
        if let Some((b, _)) = rec.counts() {
            observed.entry(key).or_default().push(b as f64);
        }
    }
    let mut checked = 0;
    for (w, m) in margins.iter().enumerate() {
        for i in 0..n {
            let ys = &observed[&(w, i)];
            let total = rides[&(w, i)] as f64;
            let nv = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / nv;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (nv - 1.0);
            // Expansion estimator standard error without replacement.
            let se = total * ((1.0 - nv / total) * var / nv).sqrt();
            let err = (m.p[i] as f64 - truth[w][i] as f64).abs();
            assert!(
                err <= 4.0 * se + 1.0,
                "week {w} station {i}: err {err} se {se}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 80);
}
