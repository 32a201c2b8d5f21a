//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any failure.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chainscope::cluster::{
    cosine_similarity, flag_suspects, kmeans, silhouette, KMeansConfig, Member, ThresholdMode, DEFAULT_EPSILON,
};
use chainscope::config::PipelineConfig;
use chainscope::data::{AccountKind, Address, DataStore, ExternalTx, InternalTx, Opcode, TxHash, Wei};
use chainscope::dedup::Subject;
use chainscope::features::{build_feature_vector, stats, BurstParams, SegmentGraph};
use chainscope::graph::{expand_suspects, CreateGraph};
use chainscope::pipeline::{run_pipeline, Stage};
use chainscope::segment::{segment_bounds, Granularity, GranularityKind};
use chainscope::synthetic::{self, Planted};
use chainscope::vocab::{
    resolve_severity, severity_score, DedupeMode, Dasp, Severity, SeverityWeights, Tool, Vocabulary, VulnFinding,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

// 1 ----------------------------------------------------------------------

fn segmentation() -> Outcome {
    let max = 10_747_845;
    let t = Instant::now();
    let day = segment_bounds(Granularity::new(GranularityKind::Day1), max).len();
    let three = segment_bounds(Granularity::new(GranularityKind::Day3), max).len();
    let month = segment_bounds(Granularity::new(GranularityKind::Month1), max).len();
    let all = segment_bounds(Granularity::new(GranularityKind::All), max).len();
    let elapsed = t.elapsed();
    check(three == 598, || format!("3day {three}"))?;
    check(month == 60, || format!("1month {month}"))?;
    check(day == 1792, || format!("1day {day}"))?;
    check(all == 1, || format!("all {all}"))?;
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("598/60/1792 in {elapsed:?}"))
}

// 2 ----------------------------------------------------------------------

fn finding(name: String, severity: Severity) -> VulnFinding {
    VulnFinding {
        subject: Subject::Address(Address::from_index(0x11, 1)),
        vocab_name: name,
        tool: Tool::Slither,
        severity,
        cwe: None,
    }
}

fn severity() -> Outcome {
    let profile = [
        Severity::High,
        Severity::Medium,
        Severity::Medium,
        Severity::Medium,
        Severity::Low,
        Severity::Low,
    ];
    let fs: Vec<_> = profile.iter().enumerate().map(|(i, s)| finding(format!("v{i}"), *s)).collect();
    let w = SeverityWeights::default();
    let addr = Address::from_index(0x11, 1);
    let s = severity_score(addr, &fs, DedupeMode::Distinct, &w).score;
    check((s - 11.0 / 6.0).abs() <= 1e-12, || format!("ponzi profile scored {s}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let fs: Vec<_> = (0..n)
            .map(|_| {
                let sev = [Severity::Low, Severity::Medium, Severity::High][rng.random_range(0..3)];
                finding(format!("v{}", rng.random_range(0..8)), sev)
            })
            .collect();
        for mode in [DedupeMode::Distinct, DedupeMode::Multiset] {
            let s = severity_score(addr, &fs, mode, &w).score;
            check((1.0..=3.0).contains(&s), || format!("score {s} outside [1, 3]"))?;
        }
    }
    Ok(format!("score {s}, 1000 random sets in [1, 3]"))
}

// 3 ----------------------------------------------------------------------

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn silhouette_oracle(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| euclid(&points[i], &points[j])).sum::<f64>() / own.len() as f64;
        let others: BTreeSet<usize> = labels.iter().copied().filter(|l| *l != labels[i]).collect();
        let b = others
            .iter()
            .map(|&c| {
                let m: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                m.iter().map(|&j| euclid(&points[i], &points[j])).sum::<f64>() / m.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let d = a.max(b);
        if d > 0.0 {
            total += (b - a) / d;
        }
    }
    total / n as f64
}

fn silhouette_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(3..=200);
        let d = rng.random_range(1..=60);
        let k = rng.random_range(2..=n.min(12));
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let got = silhouette(&points, &labels).map_err(|e| e.to_string())?;
        let want = silhouette_oracle(&points, &labels);
        worst = worst.max((got - want).abs());
    }
    let elapsed = t.elapsed();
    check(worst <= 1e-9, || format!("max |delta| {worst:e}"))?;
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("max |delta| {worst:e} in {elapsed:?}"))
}

// 4 ----------------------------------------------------------------------

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn kmeans_check() -> Outcome {
    let cfg = KMeansConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..100u64 {
        let n = rng.random_range(10..=200);
        let d = rng.random_range(1..=12);
        let k = rng.random_range(2..=8.min(n));
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let m = kmeans(&points, k, seed, &cfg).map_err(|e| e.to_string())?;
        for w in m.inertia_trace.windows(2) {
            check(w[1] <= w[0], || format!("seed {seed}: inertia rose {} -> {}", w[0], w[1]))?;
        }
        let again = kmeans(&points, k, seed, &cfg).map_err(|e| e.to_string())?;
        check(format!("{m:?}") == format!("{again:?}"), || format!("seed {seed}: rerun differs"))?;
    }

    let centres = [[0.0, 0.0], [12.0, 12.0], [24.0, 0.0]];
    for seed in 0..100u64 {
        let mut brng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for (c, centre) in centres.iter().enumerate() {
            for _ in 0..60 {
                points.push(vec![centre[0] + gaussian(&mut brng), centre[1] + gaussian(&mut brng)]);
                truth.push(c);
            }
        }
        let m = kmeans(&points, 3, seed, &cfg).map_err(|e| e.to_string())?;
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        for (a, t) in m.assignments.iter().zip(&truth) {
            let prev = *map.entry(*a).or_insert(*t);
            check(prev == *t, || format!("seed {seed}: blobs split"))?;
        }
        check(map.len() == 3, || format!("seed {seed}: {} clusters used", map.len()))?;
    }
    Ok("monotone inertia and determinism on 100 datasets, blobs recovered on 100 seeds".into())
}

// 5 ----------------------------------------------------------------------

fn o_sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

fn o_quantile(x: &[f64], q: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let s = o_sorted(x);
    let p = (s.len() - 1) as f64 * q;
    let lo = p.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (p - lo as f64) * (s[hi] - s[lo])
}

fn o_median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let s = o_sorted(x);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn o_mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

fn o_fft0(x: &[f64]) -> f64 {
    use rustfft::{num_complex::Complex, FftPlanner};
    if x.is_empty() {
        return 0.0;
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf[0].re
}

fn o_cwt(x: &[f64], a: f64) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let m = ((10.0 * a) as usize).min(n);
    let psi: Vec<f64> = (0..m)
        .map(|i| {
            let t = i as f64 - (m as f64 - 1.0) / 2.0;
            2.0 / ((3.0 * a).sqrt() * std::f64::consts::PI.powf(0.25))
                * (1.0 - t * t / (a * a))
                * (-t * t / (2.0 * a * a)).exp()
        })
        .collect();
    let mut full = vec![0.0; n + m - 1];
    for (i, xi) in x.iter().enumerate() {
        for (j, pj) in psi.iter().enumerate() {
            full[i + j] += xi * pj;
        }
    }
    full[(m - 1) / 2]
}

fn o_energy(x: &[f64], focus: usize) -> f64 {
    let n = x.len();
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    let (base, extra) = (n / 10, n % 10);
    let start = focus * base + focus.min(extra);
    let len = base + usize::from(focus < extra);
    x[start..start + len].iter().map(|v| v * v).sum::<f64>() / total
}

fn o_index_mass(x: &[f64], q: f64) -> f64 {
    let total: f64 = x.iter().sum();
    if x.is_empty() || total == 0.0 {
        return 1.0;
    }
    let mut acc = 0.0;
    for (i, v) in x.iter().enumerate() {
        acc += v;
        if acc >= q * total {
            return (i + 1) as f64 / x.len() as f64;
        }
    }
    1.0
}

/// P(|T| < t) for integer degrees of freedom, by the finite trigonometric series.
fn t_central(t: f64, nu: usize) -> f64 {
    let theta = (t / (nu as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    if nu % 2 == 1 {
        let mut sum = 0.0;
        if nu > 1 {
            let mut term = c;
            sum = term;
            let mut k = 2;
            while k + 1 < nu {
                term *= c * c * k as f64 / (k + 1) as f64;
                sum += term;
                k += 2;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while k + 1 < nu {
            term *= c * c * k as f64 / (k + 1) as f64;
            sum += term;
            k += 2;
        }
        s * sum
    }
}

fn o_trend(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 3 {
        return 1.0;
    }
    let nf = n as f64;
    let tbar = (nf - 1.0) / 2.0;
    let ybar = x.iter().sum::<f64>() / nf;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (i, y) in x.iter().enumerate() {
        let dt = i as f64 - tbar;
        stt += dt * dt;
        sty += dt * (y - ybar);
        syy += (y - ybar) * (y - ybar);
    }
    let b = sty / stt;
    let a = ybar - b * tbar;
    let sse: f64 = x.iter().enumerate().map(|(i, y)| (y - a - b * i as f64).powi(2)).sum();
    if sse <= syy * 1e-24 {
        return if b == 0.0 { 1.0 } else { 0.0 };
    }
    let se = (sse / (nf - 2.0) / stt).sqrt();
    1.0 - t_central((b / se).abs(), n - 2)
}

fn random_series(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(0..=200);
    match rng.random_range(0..4) {
        0 => (0..n).map(|_| rng.random_range(0..5) as f64).collect(),
        1 => (0..n).map(|_| rng.random_range(0.0..1e6)).collect(),
        2 => (0..n).map(|i| i as f64 * rng.random_range(0.5..2.0) + rng.random_range(0.0..3.0)).collect(),
        _ => (0..n).map(|_| if rng.random_bool(0.8) { 0.0 } else { rng.random_range(1.0..1e18) }).collect(),
    }
}

fn fuzz_store(rng: &mut ChaCha8Rng) -> DataStore {
    let accounts: Vec<Address> = (0..rng.random_range(2..8)).map(|i| Address::from_index(0x70, i)).collect();
    let mut external = Vec::new();
    let mut internal = Vec::new();
    let mut h = 0u64;
    let mut hash = || {
        h += 1;
        let mut b = [0u8; 32];
        b[24..].copy_from_slice(&h.to_be_bytes());
        TxHash(b)
    };
    for _ in 0..rng.random_range(1..40) {
        let block = rng.random_range(1..300u64);
        let burst = if rng.random_bool(0.3) { rng.random_range(2..6) } else { 1 };
        for _ in 0..burst {
            let from = accounts[rng.random_range(0..accounts.len())];
            let to = accounts[rng.random_range(0..accounts.len())];
            let value = if rng.random_bool(0.4) { 0 } else { rng.random_range(1..u64::MAX) as u128 };
            let hs = hash();
            external.push(ExternalTx {
                hash: hs,
                block,
                sender: from,
                receiver: Some(to),
                value: Wei::from_u128(value),
                gas_price: Wei::from_u128(rng.random_range(0..1000)),
                success: rng.random_bool(0.9),
            });
            if rng.random_bool(0.3) {
                internal.push(InternalTx {
                    parent_hash: hs,
                    block,
                    sender: to,
                    receiver: accounts[rng.random_range(0..accounts.len())],
                    value: Wei::from_u128(value / 2),
                    opcode: Opcode::Call,
                });
            }
        }
    }
    DataStore::new(external, internal, BTreeMap::new(), Vec::new())
}

fn feature_stats() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = [0.0f64; 8];
    for _ in 0..1000 {
        let x = random_series(&mut rng);
        let q = rng.random_range(0.01..0.99);
        let a = [2.0, 5.0, 10.0, 20.0][rng.random_range(0..4)];
        let focus = rng.random_range(0..10);
        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1.0);
        let deltas = [
            rel(stats::quantile(&x, q), o_quantile(&x, q)),
            rel(stats::median(&x), o_median(&x)),
            rel(stats::mean(&x), o_mean(&x)),
            rel(stats::fft0_real(&x), o_fft0(&x)),
            rel(stats::cwt_coeff0(&x, a), o_cwt(&x, a)),
            (stats::energy_ratio_by_chunks(&x, 10, focus) - o_energy(&x, focus)).abs(),
            (stats::index_mass_quantile(&x, q) - o_index_mass(&x, q)).abs(),
            (stats::linear_trend_pvalue(&x) - o_trend(&x)).abs(),
        ];
        for (w, d) in worst.iter_mut().zip(deltas) {
            *w = w.max(d);
        }
        let sum: f64 = x.iter().sum();
        let f = stats::fft0_real(&x);
        check((f - sum).abs() <= 1e-12 * sum.abs().max(f64::MIN_POSITIVE), || format!("fft0 {f} vs sum {sum}"))?;
    }
    let names = ["quantile", "median", "mean", "fft0", "cwt", "energy", "indexMass", "trendP"];
    for (n, w) in names.iter().zip(worst) {
        check(w <= 1e-9, || format!("{n}: max delta {w:e}"))?;
    }

    let mut vectors = 0;
    for _ in 0..300 {
        let store = fuzz_store(&mut rng);
        let max = store.max_block().max(1);
        let g = Granularity::with_span(GranularityKind::Day1, rng.random_range(1..120));
        for seg in segment_bounds(g, max) {
            let graph = SegmentGraph::build(&store, seg.range);
            for addr in store.accounts().keys() {
                let sev = rng.random_bool(0.5).then(|| rng.random_range(1.0..3.0));
                if let Ok(v) = build_feature_vector(&store, addr, &seg, &graph, &BurstParams::default(), sev) {
                    vectors += 1;
                    check(v.values.iter().all(|x| x.is_finite()), || format!("non-finite vector {:?}", v.values))?;
                }
            }
        }
    }
    check(vectors > 100, || format!("fuzzer produced only {vectors} vectors"))?;
    let worst_all = worst.iter().copied().fold(0.0, f64::max);
    Ok(format!("max delta {worst_all:e}, {vectors} fuzzed vectors finite"))
}

// 6 ----------------------------------------------------------------------

struct Dag {
    n: u64,
    edges: Vec<(u64, u64)>,
    eoa: BTreeSet<u64>,
}

fn random_dag(rng: &mut ChaCha8Rng) -> Dag {
    let n = rng.random_range(2..40);
    let mut edges = Vec::new();
    let mut eoa = BTreeSet::new();
    for i in 0..n {
        if i == 0 || rng.random_bool(0.2) {
            eoa.insert(i);
        } else if rng.random_bool(0.9) {
            edges.push((rng.random_range(0..i), i));
        }
    }
    Dag { n, edges, eoa }
}

fn reach_oracle(d: &Dag, seeds: &BTreeSet<u64>, excluded: &BTreeSet<u64>) -> BTreeSet<u64> {
    let ok = |x: &u64| !d.eoa.contains(x) && !excluded.contains(x);
    let mut out = BTreeSet::new();
    for s in seeds.iter().filter(|s| ok(s)) {
        let mut seen = BTreeSet::from([*s]);
        let mut q = VecDeque::from([*s]);
        while let Some(x) = q.pop_front() {
            for (a, b) in &d.edges {
                let other = if *a == x {
                    *b
                } else if *b == x {
                    *a
                } else {
                    continue;
                };
                if ok(&other) && seen.insert(other) {
                    q.push_back(other);
                }
            }
        }
        out.extend(seen);
    }
    out
}

fn graph_check() -> Outcome {
    let a = |i: u64| Address::from_index(0x60, i);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..200 {
        let d = random_dag(&mut rng);
        let graph = CreateGraph::from_edges(d.edges.iter().map(|(x, y)| (a(*x), a(*y)))).map_err(|e| e.to_string())?;
        let kind = |x: &Address| {
            if (0..d.n).any(|i| d.eoa.contains(&i) && a(i) == *x) {
                AccountKind::Eoa
            } else {
                AccountKind::Contract
            }
        };
        let seeds: BTreeSet<u64> = (0..rng.random_range(1..4)).map(|_| rng.random_range(0..d.n)).collect();
        let excluded: BTreeSet<u64> = (0..d.n).filter(|_| rng.random_bool(0.1)).collect();
        let addrs = |s: &BTreeSet<u64>| s.iter().map(|i| a(*i)).collect::<BTreeSet<_>>();
        let got = expand_suspects(&graph, &addrs(&seeds), &addrs(&excluded), kind).expanded;
        let want = addrs(&reach_oracle(&d, &seeds, &excluded));
        check(got == want, || format!("case {case}: got {} want {}", got.len(), want.len()))?;

        // idempotence
        let again = expand_suspects(&graph, &got, &addrs(&excluded), kind).expanded;
        check(again == got, || format!("case {case}: not idempotent"))?;
        // more seeds never shrink, more barriers never grow
        let mut more = seeds.clone();
        more.insert(rng.random_range(0..d.n));
        let bigger = expand_suspects(&graph, &addrs(&more), &addrs(&excluded), kind).expanded;
        check(got.is_subset(&bigger), || format!("case {case}: adding a seed shrank the set"))?;
        let mut walls = excluded.clone();
        walls.insert(rng.random_range(0..d.n));
        let smaller = expand_suspects(&graph, &addrs(&seeds), &addrs(&walls), kind).expanded;
        check(smaller.is_subset(&got), || format!("case {case}: adding a barrier grew the set"))?;
    }
    Ok("200 random DAGs match the reachability oracle".into())
}

// 7 ----------------------------------------------------------------------

fn vocabulary() -> Outcome {
    let v = Vocabulary::builtin();
    check(v.len() == 48, || format!("{} rows", v.len()))?;
    let r = v.by_name("Reentrancy-eth").ok_or("Reentrancy-eth missing")?;
    check((r.dasp, r.swc, r.cwe, r.severity) == (Dasp::Reentrancy, Some(107), Some(841), Severity::High), || {
        format!("Reentrancy-eth row {r:?}")
    })?;
    let t = v.by_name("Timestamp manipulation").ok_or("Timestamp manipulation missing")?;
    check((t.swc, t.cwe, t.severity) == (Some(116), Some(829), Severity::Medium), || format!("timestamp row {t:?}"))?;
    let tod = v.by_cwe(362);
    check(tod.len() == 1 && tod[0].name == "Transaction Order Dependence" && tod[0].severity == Severity::Medium, || {
        format!("CWE-362 rows {tod:?}")
    })?;

    let all = [Severity::Low, Severity::Medium, Severity::High];
    let mut sets = 0;
    for i in 0..3 {
        for j in i..3 {
            let pair = [all[i], all[j]];
            check(resolve_severity(&pair).ok() == Some(all[j]), || format!("{pair:?}"))?;
            sets += 1;
            for k in j..3 {
                let triple = [all[k], all[i], all[j]];
                check(resolve_severity(&triple).ok() == Some(all[k]), || format!("{triple:?}"))?;
                sets += 1;
            }
        }
    }
    Ok(format!("48 rows, spot rows exact, {sets} multisets resolve to the maximum"))
}

// 8 ----------------------------------------------------------------------

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn csv_rows(path: &Path) -> Result<Vec<Vec<String>>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    r.records()
        .map(|x| x.map(|rec| rec.iter().map(str::to_string).collect()).map_err(|e| e.to_string()))
        .collect()
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for e in fs::read_dir(a).map_err(|e| e.to_string())? {
        let name = e.map_err(|e| e.to_string())?.file_name();
        let x = fs::read(a.join(&name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(&name)).map_err(|e| format!("{name:?}: {e}"))?;
        check(x == y, || format!("{name:?} differs"))?;
        n += 1;
    }
    Ok(n)
}

fn end_to_end() -> Outcome {
    let pl = Planted::new();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::load(&fixture_dir().join("pipeline.conf")).map_err(|e| e.to_string())?;
    cfg.out = tmp.path().join("a");
    let t = Instant::now();
    run_pipeline(&cfg, Stage::Report).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();

    let clone = pl.clone.to_string();
    let control = pl.control.to_string();
    let probs = csv_rows(&cfg.out.join("probabilities.csv"))?;
    let clone_rows: Vec<_> = probs.iter().filter(|r| r[0] == clone).collect();
    check(clone_rows.len() == 8, || format!("clone has {} probability rows", clone_rows.len()))?;
    for r in &clone_rows {
        check(r[3].parse::<f64>() == Ok(1.0), || format!("clone {}/{} p={}", r[1], r[2], r[3]))?;
    }
    let flags = csv_rows(&cfg.out.join("flags.csv"))?;
    check(!flags.iter().any(|r| r[0] == control && r[5] == "1"), || "control flagged".into())?;
    check(probs.iter().any(|r| r[0] == control), || "control absent from probabilities".into())?;
    within(elapsed, Duration::from_secs(60))?;

    cfg.out = tmp.path().join("b");
    run_pipeline(&cfg, Stage::Report).map_err(|e| e.to_string())?;
    let outputs = same_files(&tmp.path().join("a"), &tmp.path().join("b"))?;

    let regen = tmp.path().join("regen");
    let (ds, _) = synthetic::generate(42);
    synthetic::write_dataset(&ds, &regen).map_err(|e| e.to_string())?;
    let bundle = same_files(&fixture_dir(), &regen)?;
    Ok(format!(
        "clone p=1 in 8/8 runs, control unflagged, {elapsed:?}; {outputs} outputs and {bundle} bundle files identical"
    ))
}

// 9 ----------------------------------------------------------------------

fn cosine_flagging() -> Outcome {
    let a = |i: u64| Address::from_index(0x90, i);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..1000 {
        let d = rng.random_range(1..=60);
        let n = rng.random_range(2..12);
        let vecs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) }).collect())
            .collect();
        let malicious: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.3)).collect();
        let scales: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..1e3)).collect();
        let scaled: Vec<Vec<f64>> = vecs.iter().zip(&scales).map(|(v, s)| v.iter().map(|x| x * s).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                let c = cosine_similarity(&vecs[i], &vecs[j]).map_err(|e| e.to_string())?;
                let cs = cosine_similarity(&scaled[i], &scaled[j]).map_err(|e| e.to_string())?;
                check((c - cs).abs() <= 1e-12, || format!("case {case}: {c} vs scaled {cs}"))?;
            }
        }
        let members = |vs: &[Vec<f64>]| -> Vec<(Address, Vec<f64>, bool)> {
            vs.iter().enumerate().map(|(i, v)| (a(i as u64), v.clone(), malicious[i])).collect()
        };
        let run = |vs: &[(Address, Vec<f64>, bool)], eps: f64, mode: ThresholdMode| {
            let m: Vec<Member> =
                vs.iter().map(|(addr, v, bad)| Member { address: *addr, vector: v, malicious: *bad }).collect();
            flag_suspects(&m, 1, eps, mode).map(|f| {
                f.iter().filter(|x| x.flagged).map(|x| x.address).collect::<BTreeSet<_>>()
            })
        };
        let plain = members(&vecs);
        let big = members(&scaled);
        let e1 = rng.random_range(0.0..0.5);
        let e2 = e1 + rng.random_range(0.0..0.5);
        for mode in [ThresholdMode::Absolute, ThresholdMode::RelativeToMax] {
            let small = run(&plain, e1, mode).map_err(|e| e.to_string())?;
            let large = run(&plain, e2, mode).map_err(|e| e.to_string())?;
            check(small.is_subset(&large), || format!("case {case}: {mode:?} not monotone in eps"))?;
            // exact cosine ties may straddle the threshold after scaling, so compare
            // at an epsilon away from any tie
            let s1 = run(&plain, DEFAULT_EPSILON + 1e-3, mode).map_err(|e| e.to_string())?;
            let s2 = run(&big, DEFAULT_EPSILON + 1e-3, mode).map_err(|e| e.to_string())?;
            check(s1 == s2, || format!("case {case}: {mode:?} flags change under scaling"))?;
        }
    }

    let unit = |c: f64| vec![c, (1.0 - c * c).sqrt()];
    let m = [vec![1.0, 0.0], unit(0.74), unit(0.73)];
    let members = [
        Member { address: a(0), vector: &m[0], malicious: true },
        Member { address: a(1), vector: &m[1], malicious: false },
        Member { address: a(2), vector: &m[2], malicious: false },
    ];
    let flags = flag_suspects(&members, 1, DEFAULT_EPSILON, ThresholdMode::RelativeToMax).map_err(|e| e.to_string())?;
    let flagged: Vec<_> = flags.iter().filter(|f| f.flagged).map(|f| f.address).collect();
    check(flagged == vec![a(1)], || format!("0.74/0.73 flagged {flagged:?}"))?;
    Ok("1000 vector sets scale-invariant and eps-monotone; 0.74/0.73 flags one".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("segmentation arithmetic", segmentation),
        ("severity score", severity),
        ("silhouette oracle", silhouette_check),
        ("k-means properties", kmeans_check),
        ("feature statistics", feature_stats),
        ("graph expansion", graph_check),
        ("vocabulary", vocabulary),
        ("end-to-end fixture", end_to_end),
        ("cosine and flagging", cosine_flagging),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = f();
        let ms = t.elapsed().as_secs_f64() * 1e3;
        match r {
            Ok(detail) => println!("PASS {} {name}: {detail} [{ms:.1} ms]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{ms:.1} ms]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
